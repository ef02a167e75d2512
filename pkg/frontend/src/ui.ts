/**
 * DOM construction for the review client. No framework: plain elements
 * rebuilt from the current session view after every server round trip.
 *
 * Layout rules the widgets enforce:
 *  - every stage renders as a form whose fieldset is disabled unless the
 *    server session currently sits at that stage;
 *  - the model's diagnosis banner appears only once the view carries it;
 *  - paired explanations render side by side inside a .panel-pair;
 *  - the saliency layer can be viewed next to the image or blended over
 *    it with an adjustable opacity slider;
 *  - the report page is read-only and ground truth is never rendered.
 */

import { COMPARISONS, CONFIDENCES, DIAGNOSES, QUALITIES, RATINGS, STAGES } from "./api";
import type {
  CaseSummary,
  CaseView,
  Comparison,
  Confidence,
  Diagnosis,
  Quality,
  Rating,
  ReportPayload,
  ReviewApi,
  Stage,
  StagePayload,
} from "./api";
import { decodePgm, drawToCanvas, grayToRgba, overlayRgba } from "./pgm";
import { CaseSession } from "./state";

const STAGE_TITLES: Record<Stage, string> = {
  await_diagnosis: "1. Your diagnosis",
  await_quality: "2. Image quality",
  await_visual: "3. Visual explanations",
  await_textual: "4. Textual explanations",
  await_overall: "5. Overall verdict",
  complete: "Complete",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function select(name: string, options: readonly string[]): HTMLSelectElement {
  const node = document.createElement("select");
  node.name = name;
  for (const value of options) {
    const opt = document.createElement("option");
    opt.value = value;
    opt.textContent = value;
    node.append(opt);
  }
  return node;
}

function labeled(text: string, control: HTMLElement): HTMLLabelElement {
  const label = el("label", "field");
  label.append(el("span", "field-name", text), control);
  return label;
}

function pgmCanvas(b64: string, className: string): HTMLCanvasElement {
  const canvas = el("canvas", className);
  const image = decodePgm(b64);
  drawToCanvas(canvas, grayToRgba(image), image.width, image.height);
  return canvas;
}

export function renderCaseList(
  container: HTMLElement,
  cases: CaseSummary[],
  onOpen: (caseId: string) => void,
): void {
  container.textContent = "";
  const list = el("ul", "case-list");
  for (const summary of cases) {
    const item = el("li", "case-item");
    const button = el("button", "case-open", summary.case_id);
    button.type = "button";
    button.addEventListener("click", () => onOpen(summary.case_id));
    item.append(
      button,
      el("span", "case-stage", summary.complete ? "complete" : summary.stage),
    );
    list.append(item);
  }
  container.append(list);
}

/** Rows of a two-column CSV (header dropped) as table rows. */
function csvTable(csv: string, className: string): HTMLTableElement {
  const table = el("table", className);
  const lines = csv.split("\n").filter((line) => line.trim().length > 0);
  lines.slice(0, 1).forEach((header) => {
    const row = el("tr");
    for (const cell of header.split(",")) row.append(el("th", undefined, cell));
    table.append(row);
  });
  for (const line of lines.slice(1)) {
    const row = el("tr");
    for (const cell of line.split(",")) row.append(el("td", undefined, cell));
    table.append(row);
  }
  return table;
}

export function renderReport(container: HTMLElement, report: ReportPayload): void {
  container.textContent = "";
  const section = el("section", "report");
  section.append(el("h2", undefined, "Review report"));
  section.append(el("p", "report-count", `completed reviews: ${report.record_count}`));

  const table = el("table", "usefulness-table");
  const head = el("tr");
  for (const cell of ["representation", ...RATINGS]) head.append(el("th", undefined, cell));
  table.append(head);
  for (const [rep, counts] of Object.entries(report.usefulness)) {
    const row = el("tr");
    row.append(el("td", undefined, rep));
    for (const n of counts) row.append(el("td", undefined, String(n)));
    table.append(row);
  }
  section.append(table);

  for (const modality of ["visual", "textual"] as const) {
    const t = report[`comparison_${modality}`];
    const [first, second, same] = t.counts;
    section.append(
      el(
        "p",
        `comparison-${modality}`,
        `${modality}: inductive better ${first}, descriptive better ${second}, ` +
          `same ${same} (over ${t.relevant} relevant reviews)`,
      ),
    );
  }
  const [agree, disagree] = report.agreement_sure;
  const [correct, incorrect] = report.agreement_unsure;
  section.append(el("p", "agreement-sure", `sure reviews: agree ${agree}, disagree ${disagree}`));
  section.append(
    el("p", "agreement-unsure", `unsure reviews: model correct ${correct}, incorrect ${incorrect}`),
  );
  section.append(
    el(
      "p",
      "coverage",
      `inductive explanation relevant: ${report.relevance_coverage}/${report.record_count}`,
    ),
  );
  container.append(section);
}

export class ReviewApp {
  private readonly api: ReviewApi;
  private readonly listPane: HTMLElement;
  private readonly mainPane: HTMLElement;
  private session: CaseSession | null = null;
  private flashText: string | null = null;
  private queue: Promise<void> = Promise.resolve();

  constructor(root: HTMLElement, api: ReviewApi) {
    this.api = api;
    root.textContent = "";
    const header = el("header", "topbar");
    header.append(el("h1", undefined, "Diagnosis review"));
    const nav = el("nav");
    const casesButton = el("button", "nav-cases", "Cases");
    casesButton.type = "button";
    casesButton.addEventListener("click", () => this.run(() => this.showCases()));
    const reportButton = el("button", "nav-report", "Report");
    reportButton.type = "button";
    reportButton.addEventListener("click", () => this.run(() => this.showReport()));
    nav.append(casesButton, reportButton);
    header.append(nav);

    const layout = el("div", "layout");
    this.listPane = el("aside", "sidebar");
    this.mainPane = el("main", "main-pane");
    layout.append(this.listPane, this.mainPane);
    root.append(header, layout);
  }

  /** Await the most recently queued user action; test hook. */
  settled(): Promise<void> {
    return this.queue;
  }

  private run(action: () => Promise<void>): void {
    this.queue = this.queue.then(action).catch((err) => {
      this.flashText = err instanceof Error ? err.message : String(err);
      this.renderFlash();
    });
  }

  async start(): Promise<void> {
    await this.refreshCaseList();
  }

  private async refreshCaseList(): Promise<void> {
    const cases = await this.api.listCases();
    renderCaseList(this.listPane, cases, (caseId) => this.run(() => this.openCase(caseId)));
  }

  private async showCases(): Promise<void> {
    this.session = null;
    this.mainPane.textContent = "";
    await this.refreshCaseList();
  }

  private async showReport(): Promise<void> {
    const report = await this.api.getReport();
    this.session = null;
    renderReport(this.mainPane, report);
  }

  async openCase(caseId: string): Promise<void> {
    const session = new CaseSession(this.api, caseId);
    await session.refresh();
    this.session = session;
    this.flashText = null;
    this.renderCase(session);
  }

  private async submitStage(session: CaseSession, stage: Stage, form: HTMLFormElement): Promise<void> {
    const result = await session.submit(payloadFrom(stage, form));
    this.flashText = result.ok ? null : (result.error ?? "submission rejected");
    this.renderCase(session);
    await this.refreshCaseList();
  }

  private renderFlash(): void {
    const existing = this.mainPane.querySelector(".flash-error");
    if (existing) existing.remove();
    if (this.flashText !== null) {
      this.mainPane.prepend(el("div", "flash-error", this.flashText));
    }
  }

  private renderCase(session: CaseSession): void {
    const view = session.view;
    if (!view) return;
    this.mainPane.textContent = "";

    const head = el("div", "case-head");
    head.append(el("h2", undefined, view.case_id));
    head.append(
      el(
        "span",
        view.stage === "complete" ? "stage-badge complete-badge" : "stage-badge",
        view.stage === "complete" ? "review complete" : STAGE_TITLES[view.stage],
      ),
    );
    this.mainPane.append(head);

    const own = session.submitted.await_diagnosis;
    if (own && own.stage === "await_diagnosis") {
      this.mainPane.append(
        el("div", "own-dx", `your diagnosis: ${own.radiologist_dx} (${own.sure})`),
      );
    }
    if (view.model_dx !== undefined) {
      this.mainPane.append(el("div", "model-dx", `model diagnosis: ${view.model_dx}`));
    }

    this.mainPane.append(renderImagery(view));

    for (const stage of STAGES.slice(0, -1)) {
      this.mainPane.append(this.stageForm(session, stage, view));
    }
    this.renderFlash();
  }

  private stageForm(session: CaseSession, stage: Stage, view: CaseView): HTMLFormElement {
    const form = el("form", "stage-form");
    form.dataset.stage = stage;
    const fields = el("fieldset");
    fields.disabled = !session.formEnabled(stage);
    fields.append(el("legend", undefined, STAGE_TITLES[stage]));

    if (stage === "await_diagnosis") {
      fields.append(
        labeled("diagnosis", select("radiologist_dx", DIAGNOSES)),
        labeled("confidence", select("sure", CONFIDENCES)),
      );
    } else if (stage === "await_quality") {
      fields.append(labeled("image quality", select("quality", QUALITIES)));
    } else if (stage === "await_visual") {
      fields.append(visualPair(view));
      fields.append(labeled("better visual explanation", select("cmp_visual", COMPARISONS)));
    } else if (stage === "await_textual") {
      fields.append(textualPair(view));
      fields.append(labeled("better textual explanation", select("cmp_textual", COMPARISONS)));
    } else {
      fields.append(labeled("better modality overall", select("cmp_overall", COMPARISONS)));
    }

    const submit = el("button", "stage-submit", "Submit");
    submit.type = "submit";
    fields.append(submit);
    form.append(fields);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      this.run(() => this.submitStage(session, stage, form));
    });
    return form;
  }
}

/** Saliency map and region mask side by side, each with its own rating. */
function visualPair(view: CaseView): HTMLElement {
  const pair = el("div", "panel-pair visual-pair");
  const saliency = el("div", "panel panel-saliency");
  saliency.append(el("h4", undefined, "Saliency map"));
  if (view.saliency_pgm !== undefined) {
    saliency.append(pgmCanvas(view.saliency_pgm, "saliency-canvas"));
  } else {
    saliency.append(el("p", "panel-placeholder", "revealed at this stage"));
  }
  saliency.append(labeled("usefulness", select("vis_ind", RATINGS)));

  const mask = el("div", "panel panel-mask");
  mask.append(el("h4", undefined, "Region mask"));
  if (view.mask_pgm !== undefined) {
    mask.append(pgmCanvas(view.mask_pgm, "mask-canvas"));
  } else {
    mask.append(el("p", "panel-placeholder", "revealed at this stage"));
  }
  mask.append(labeled("usefulness", select("vis_des", RATINGS)));

  pair.append(saliency, mask);
  return pair;
}

/** Rule sentence and feature profile side by side, each with its rating. */
function textualPair(view: CaseView): HTMLElement {
  const pair = el("div", "panel-pair textual-pair");
  const inductive = el("div", "panel panel-inductive");
  inductive.append(el("h4", undefined, "Decision rule"));
  if (view.inductive_text !== undefined) {
    inductive.append(el("pre", "inductive-text", view.inductive_text));
  } else {
    inductive.append(el("p", "panel-placeholder", "revealed at this stage"));
  }
  inductive.append(labeled("usefulness", select("text_ind", RATINGS)));

  const descriptive = el("div", "panel panel-descriptive");
  descriptive.append(el("h4", undefined, "Feature profile"));
  if (view.descriptive_csv !== undefined) {
    descriptive.append(csvTable(view.descriptive_csv, "descriptive-table"));
  } else {
    descriptive.append(el("p", "panel-placeholder", "revealed at this stage"));
  }
  descriptive.append(labeled("usefulness", select("text_des", RATINGS)));

  pair.append(inductive, descriptive);
  return pair;
}

/**
 * Input image, plus saliency viewing controls once the map is revealed:
 * side-by-side puts the heat map next to the image, overlay blends it on
 * top at the slider's opacity.
 */
function renderImagery(view: CaseView): HTMLElement {
  const section = el("section", "imagery");
  const base = decodePgm(view.image_pgm);
  const stage = el("div", "image-stage");
  section.append(stage);

  if (view.saliency_pgm === undefined) {
    const canvas = el("canvas", "image-canvas");
    drawToCanvas(canvas, grayToRgba(base), base.width, base.height);
    stage.append(canvas);
    return section;
  }

  const heat = decodePgm(view.saliency_pgm);
  const controls = el("div", "overlay-controls");
  const mode = select("view_mode", ["side-by-side", "overlay"]);
  const slider = el("input", "opacity-slider");
  slider.type = "range";
  slider.name = "overlay_opacity";
  slider.min = "0";
  slider.max = "100";
  slider.value = "60";
  controls.append(labeled("saliency view", mode), labeled("overlay opacity", slider));
  section.append(controls);

  const repaint = (): void => {
    stage.textContent = "";
    if (mode.value === "overlay") {
      const canvas = el("canvas", "overlay-canvas");
      const opacity = Number.parseInt(slider.value, 10) / 100;
      drawToCanvas(canvas, overlayRgba(base, heat, opacity), base.width, base.height);
      stage.append(canvas);
      return;
    }
    const pair = el("div", "panel-pair image-pair");
    const left = el("div", "panel");
    left.append(el("h4", undefined, "Image"));
    const imageCanvas = el("canvas", "image-canvas");
    drawToCanvas(imageCanvas, grayToRgba(base), base.width, base.height);
    left.append(imageCanvas);
    const right = el("div", "panel");
    right.append(el("h4", undefined, "Saliency"));
    const heatCanvas = el("canvas", "saliency-canvas");
    drawToCanvas(heatCanvas, grayToRgba(heat), heat.width, heat.height);
    right.append(heatCanvas);
    pair.append(left, right);
    stage.append(pair);
  };
  mode.addEventListener("input", repaint);
  slider.addEventListener("input", repaint);
  repaint();
  return section;
}

function pick(form: HTMLFormElement, name: string): string {
  const field = form.querySelector<HTMLSelectElement>(`select[name="${name}"]`);
  if (!field) throw new Error(`missing form field ${name}`);
  return field.value;
}

/** Collect a stage form's selects into the wire payload for that stage. */
export function payloadFrom(stage: Stage, form: HTMLFormElement): StagePayload {
  switch (stage) {
    case "await_diagnosis":
      return {
        stage,
        radiologist_dx: pick(form, "radiologist_dx") as Diagnosis,
        sure: pick(form, "sure") as Confidence,
      };
    case "await_quality":
      return { stage, quality: pick(form, "quality") as Quality };
    case "await_visual":
      return {
        stage,
        vis_ind: pick(form, "vis_ind") as Rating,
        vis_des: pick(form, "vis_des") as Rating,
        cmp_visual: pick(form, "cmp_visual") as Comparison,
      };
    case "await_textual":
      return {
        stage,
        text_ind: pick(form, "text_ind") as Rating,
        text_des: pick(form, "text_des") as Rating,
        cmp_textual: pick(form, "cmp_textual") as Comparison,
      };
    case "await_overall":
      return { stage, cmp_overall: pick(form, "cmp_overall") as Comparison };
    default:
      throw new Error(`no form for stage ${stage}`);
  }
}
