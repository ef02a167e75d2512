/**
 * Typed client for the review service's HTTP+JSON API.
 *
 * The service walks each case through five review stages in a fixed order
 * and reveals artifacts progressively; this module mirrors that contract
 * with literal types so a payload for the wrong stage fails to compile.
 */

export const STAGES = [
  "await_diagnosis",
  "await_quality",
  "await_visual",
  "await_textual",
  "await_overall",
  "complete",
] as const;

export type Stage = (typeof STAGES)[number];

export const DIAGNOSES = ["COV+", "COV-"] as const;
export type Diagnosis = (typeof DIAGNOSES)[number];

export const CONFIDENCES = ["sure", "unsure"] as const;
export type Confidence = (typeof CONFIDENCES)[number];

export const QUALITIES = ["Low", "Medium", "High"] as const;
export type Quality = (typeof QUALITIES)[number];

export const RATINGS = ["Useful", "SomewhatUseful", "NotUseful"] as const;
export type Rating = (typeof RATINGS)[number];

export const COMPARISONS = ["first-better", "second-better", "same"] as const;
export type Comparison = (typeof COMPARISONS)[number];

export interface CaseSummary {
  case_id: string;
  stage: Stage;
  complete: boolean;
}

/**
 * One case as the server is willing to show it right now.
 *
 * Only `image_pgm` is always present. The model's diagnosis appears once
 * the reviewer has committed their own, the visual pair once its rating
 * stage is reached, the textual pair at its stage. Ground truth is never
 * part of any view.
 */
export interface CaseView {
  case_id: string;
  stage: Stage;
  /** Base64 of the plain-text PGM input image. */
  image_pgm: string;
  model_dx?: Diagnosis;
  saliency_pgm?: string;
  mask_pgm?: string;
  inductive_text?: string;
  descriptive_csv?: string;
}

/** The form body for each stage, discriminated on the stage name. */
export type StagePayload =
  | { stage: "await_diagnosis"; radiologist_dx: Diagnosis; sure: Confidence }
  | { stage: "await_quality"; quality: Quality }
  | { stage: "await_visual"; vis_ind: Rating; vis_des: Rating; cmp_visual: Comparison }
  | { stage: "await_textual"; text_ind: Rating; text_des: Rating; cmp_textual: Comparison }
  | { stage: "await_overall"; cmp_overall: Comparison };

export interface ComparisonTable {
  counts: [number, number, number];
  relevant: number;
}

export interface ReportPayload {
  record_count: number;
  usefulness: Record<string, [number, number, number]>;
  comparison_visual: ComparisonTable;
  comparison_textual: ComparisonTable;
  agreement_sure: [number, number];
  agreement_unsure: [number, number];
  relevance_coverage: number;
}

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

/** The slice of a fetch Response the client actually consumes. */
export interface JsonResponse {
  ok: boolean;
  status: number;
  statusText: string;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<JsonResponse>;

export class ReviewApi {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.base + path, init);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      const detail =
        body !== null && typeof body === "object" && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  listCases(): Promise<CaseSummary[]> {
    return this.request<CaseSummary[]>("/cases");
  }

  getCase(caseId: string): Promise<CaseView> {
    return this.request<CaseView>(`/cases/${encodeURIComponent(caseId)}`);
  }

  submitStage(caseId: string, payload: StagePayload): Promise<CaseView> {
    return this.request<CaseView>(`/cases/${encodeURIComponent(caseId)}/stage`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  getReport(): Promise<ReportPayload> {
    return this.request<ReportPayload>("/report");
  }
}
