/**
 * Client-side mirror of one case's staged review session.
 *
 * The server owns the stage machine; this class only caches the latest
 * view and resynchronizes when the server disagrees with a submission.
 */

import { ApiError, STAGES } from "./api";
import type { CaseView, ReviewApi, Stage, StagePayload } from "./api";

export interface SubmitResult {
  ok: boolean;
  /** Server-side rejection detail; the view has been resynced when set. */
  error?: string;
}

export class CaseSession {
  readonly caseId: string;
  private readonly api: ReviewApi;
  view: CaseView | null = null;
  /** Locally remembered form submissions, keyed by stage. */
  readonly submitted: Partial<Record<Stage, StagePayload>> = {};

  constructor(api: ReviewApi, caseId: string) {
    this.api = api;
    this.caseId = caseId;
  }

  get stage(): Stage | null {
    return this.view?.stage ?? null;
  }

  stageIndex(): number {
    return this.view ? STAGES.indexOf(this.view.stage) : -1;
  }

  /** A stage's form takes input only while the server session sits at it. */
  formEnabled(stage: Stage): boolean {
    return this.view !== null && this.view.stage === stage;
  }

  async refresh(): Promise<CaseView> {
    this.view = await this.api.getCase(this.caseId);
    return this.view;
  }

  /**
   * Submit one stage's form.
   *
   * A stage conflict (409) means this client was stale: the local view is
   * reset to the server-reported state and the detail is returned instead
   * of thrown. Any other failure propagates.
   */
  async submit(payload: StagePayload): Promise<SubmitResult> {
    try {
      this.view = await this.api.submitStage(this.caseId, payload);
      this.submitted[payload.stage] = payload;
      return { ok: true };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh();
        return { ok: false, error: err.detail };
      }
      throw err;
    }
  }
}
