import { beforeEach, describe, expect, it } from "vitest";

import { ApiError, ReviewApi } from "../src/api";
import type { CaseView, StagePayload } from "../src/api";
import { decodePgm } from "../src/pgm";
import { FakeReviewServer } from "./fakeServer";
import { fixtureBundles } from "./fixture";

const WALKTHROUGH: StagePayload[] = [
  { stage: "await_diagnosis", radiologist_dx: "COV+", sure: "sure" },
  { stage: "await_quality", quality: "Medium" },
  { stage: "await_visual", vis_ind: "Useful", vis_des: "SomewhatUseful", cmp_visual: "first-better" },
  { stage: "await_textual", text_ind: "Useful", text_des: "NotUseful", cmp_textual: "same" },
  { stage: "await_overall", cmp_overall: "second-better" },
];

let server: FakeReviewServer;
let api: ReviewApi;

beforeEach(() => {
  server = new FakeReviewServer(fixtureBundles());
  api = new ReviewApi("", server.fetch);
});

describe("listCases", () => {
  it("returns every fixture case, sorted and fresh", async () => {
    const cases = await api.listCases();
    expect(cases.map((c) => c.case_id)).toEqual([
      "case-001",
      "case-002",
      "case-003",
      "case-004",
    ]);
    expect(cases.every((c) => c.stage === "await_diagnosis" && !c.complete)).toBe(true);
  });
});

describe("getCase", () => {
  it("starts with only the image revealed", async () => {
    const view = await api.getCase("case-001");
    expect(Object.keys(view).sort()).toEqual(["case_id", "image_pgm", "stage"]);
    const image = decodePgm(view.image_pgm);
    expect(image.width).toBe(4);
    expect(image.height).toBe(4);
  });

  it("raises a 404 ApiError for an unknown case", async () => {
    const err = await api.getCase("case-999").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
    expect((err as ApiError).detail).toContain("case-999");
  });
});

describe("submitStage", () => {
  it("advances the stage and reveals the model diagnosis", async () => {
    const view = await api.submitStage("case-001", WALKTHROUGH[0] as StagePayload);
    expect(view.stage).toBe("await_quality");
    expect(view.model_dx).toBe("COV+");
    expect(view.saliency_pgm).toBeUndefined();
    expect(view.inductive_text).toBeUndefined();
  });

  it("rejects an out-of-order stage with 409", async () => {
    const err = await api
      .submitStage("case-001", { stage: "await_quality", quality: "Low" })
      .catch((e: unknown) => e);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).detail).toContain("await_diagnosis");
  });

  it("rejects a bad field value with 422", async () => {
    const payload = { stage: "await_diagnosis", radiologist_dx: "maybe", sure: "sure" };
    const err = await api
      .submitStage("case-001", payload as unknown as StagePayload)
      .catch((e: unknown) => e);
    expect((err as ApiError).status).toBe(422);
    expect((err as ApiError).detail).toContain("radiologist_dx");
  });

  it("walks all five stages and logs exactly one merged record", async () => {
    const views: CaseView[] = [];
    for (const payload of WALKTHROUGH) {
      views.push(await api.submitStage("case-002", payload));
    }
    expect(views.map((v) => v.stage)).toEqual([
      "await_quality",
      "await_visual",
      "await_textual",
      "await_overall",
      "complete",
    ]);
    expect(server.log).toHaveLength(1);
    const record = server.log[0] as Record<string, unknown>;
    expect(record["case_id"]).toBe("case-002");
    expect(record["ratings"]).toEqual({
      vis_ind: "Useful",
      vis_des: "SomewhatUseful",
      text_ind: "Useful",
      text_des: "NotUseful",
    });
    const err = await api
      .submitStage("case-002", WALKTHROUGH[0] as StagePayload)
      .catch((e: unknown) => e);
    expect((err as ApiError).status).toBe(409);
  });

  it("never serializes ground truth into any response", async () => {
    const bodies: string[] = [JSON.stringify(await api.getCase("case-003"))];
    for (const payload of WALKTHROUGH) {
      bodies.push(JSON.stringify(await api.submitStage("case-003", payload)));
    }
    bodies.push(JSON.stringify(await api.listCases()));
    for (const body of bodies) {
      expect(body).not.toContain('"truth"');
    }
  });
});

describe("getReport", () => {
  it("aggregates completed sessions only", async () => {
    expect((await api.getReport()).record_count).toBe(0);
    for (const payload of WALKTHROUGH) {
      await api.submitStage("case-001", payload);
    }
    await api.submitStage("case-004", WALKTHROUGH[0] as StagePayload);
    const report = await api.getReport();
    expect(report.record_count).toBe(1);
    expect(report.usefulness["vis_ind"]).toEqual([1, 0, 0]);
    expect(report.agreement_sure).toEqual([1, 0]);
  });
});
