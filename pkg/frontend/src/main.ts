import { ReviewApi } from "./api";
import { ReviewApp } from "./ui";

const root = document.querySelector<HTMLElement>("#app");
if (root) {
  // ?api=http://host:port points at a review service on another origin;
  // default is same-origin, for serving the bundle behind the service.
  const params = new URLSearchParams(window.location.search);
  const api = new ReviewApi(params.get("api") ?? "");
  const app = new ReviewApp(root, api);
  void app.start();
}
