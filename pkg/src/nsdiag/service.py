"""HTTP review service for prepared explanation bundles.

One review session per case walks five stages in fixed order: diagnosis,
image quality, visual explanations, textual explanations, overall verdict.
Artifacts are revealed progressively: the model's diagnosis only after the
rater commits their own, each explanation pair at its rating stage. Ground
truth is loaded for analytics but never serialized into any response.

Completed sessions are appended to a JSON-lines log, one line per session,
serialized behind a process-wide lock; the log is replayed on startup so
completed cases stay completed across restarts.
"""

import base64
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from .errors import StateError
from .evaluation import (
    COMPARISONS,
    FeedbackRecord,
    QUALITIES,
    RATINGS,
    STAGE_COMPLETE,
    SURE,
    UNSURE,
    append_feedback_line,
    load_feedback_records,
    record_to_json,
    report_payload,
)
from .labels import DIAGNOSES

STAGE_DIAGNOSIS = "await_diagnosis"
STAGE_QUALITY = "await_quality"
STAGE_VISUAL = "await_visual"
STAGE_TEXTUAL = "await_textual"
STAGE_OVERALL = "await_overall"

STAGES = (
    STAGE_DIAGNOSIS,
    STAGE_QUALITY,
    STAGE_VISUAL,
    STAGE_TEXTUAL,
    STAGE_OVERALL,
    STAGE_COMPLETE,
)

# Stage index thresholds for progressive reveal in case views.
_REVEAL_MODEL_DX = STAGES.index(STAGE_QUALITY)
_REVEAL_VISUAL = STAGES.index(STAGE_VISUAL)
_REVEAL_TEXTUAL = STAGES.index(STAGE_TEXTUAL)


@dataclass(frozen=True)
class LoadedBundle:
    """One case's artifacts as read from its bundle directory."""

    case_id: str
    image_text: str
    saliency_text: str
    mask_text: str
    inductive: str
    descriptive: str
    prediction: str
    truth: str


def _read(path):
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def load_bundles(directory):
    """All case bundles under a directory, keyed by case_id."""
    root = Path(directory)
    if not root.is_dir():
        raise StateError(f"bundle directory {directory} not found")
    bundles = {}
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            continue
        try:
            bundles[entry.name] = LoadedBundle(
                case_id=entry.name,
                image_text=_read(entry / "image.pgm"),
                saliency_text=_read(entry / "saliency.pgm"),
                mask_text=_read(entry / "mask.pgm"),
                inductive=_read(entry / "inductive.txt").rstrip("\n"),
                descriptive=_read(entry / "descriptive.csv"),
                prediction=_read(entry / "prediction.txt").strip(),
                truth=_read(entry / "truth.txt").strip(),
            )
        except OSError as exc:
            raise StateError(f"unreadable bundle {entry.name}: {exc}") from exc
    return bundles


def _b64(text):
    return base64.b64encode(text.encode("ascii")).decode("ascii")


class ReviewState:
    """Session table plus the append-only log, mutated under one lock."""

    def __init__(self, bundles, log_path):
        self.bundles = bundles
        self.log_path = Path(log_path)
        self.lock = threading.Lock()
        self.sessions = {case_id: {"stage": STAGE_DIAGNOSIS, "fields": {}} for case_id in bundles}
        self._replay()

    def _replay(self):
        if not self.log_path.exists():
            return
        for record in load_feedback_records(self.log_path):
            if record.case_id in self.sessions:
                self.sessions[record.case_id] = {
                    "stage": STAGE_COMPLETE,
                    "fields": {
                        "radiologist_dx": record.radiologist_dx,
                        "sure": record.sure,
                        "quality": record.quality,
                        "ratings": dict(record.ratings),
                        "cmp_visual": record.cmp_visual,
                        "cmp_textual": record.cmp_textual,
                        "cmp_overall": record.cmp_overall,
                    },
                }

    def case_view(self, case_id):
        bundle = self.bundles[case_id]
        session = self.sessions[case_id]
        stage_index = STAGES.index(session["stage"])
        view = {
            "case_id": case_id,
            "stage": session["stage"],
            "image_pgm": _b64(bundle.image_text),
        }
        if stage_index >= _REVEAL_MODEL_DX:
            view["model_dx"] = bundle.prediction
        if stage_index >= _REVEAL_VISUAL:
            view["saliency_pgm"] = _b64(bundle.saliency_text)
            view["mask_pgm"] = _b64(bundle.mask_text)
        if stage_index >= _REVEAL_TEXTUAL:
            view["inductive_text"] = bundle.inductive
            view["descriptive_csv"] = bundle.descriptive
        return view

    def submit(self, case_id, payload):
        if case_id not in self.sessions:
            raise HTTPException(status_code=404, detail=f"unknown case {case_id}")
        if not isinstance(payload, dict):
            raise HTTPException(status_code=422, detail="payload must be a JSON object")
        target = payload.get("stage")
        if target not in STAGES[:-1]:
            raise HTTPException(status_code=422, detail=f"unknown stage {target!r}")
        with self.lock:
            session = self.sessions[case_id]
            current = session["stage"]
            if current == STAGE_COMPLETE:
                raise HTTPException(status_code=409, detail="session already complete")
            if target != current:
                raise HTTPException(
                    status_code=409,
                    detail=f"session is at {current}, not {target}",
                )
            fields = _validate_stage_payload(target, payload)
            for key, value in fields.items():
                if key == "ratings":
                    session["fields"].setdefault("ratings", {}).update(value)
                else:
                    session["fields"][key] = value
            session["stage"] = STAGES[STAGES.index(current) + 1]
            if session["stage"] == STAGE_COMPLETE:
                self._append_completed(case_id, session)
        return self.case_view(case_id)

    def _append_completed(self, case_id, session):
        bundle = self.bundles[case_id]
        f = session["fields"]
        record = FeedbackRecord(
            case_id=case_id,
            radiologist_dx=f["radiologist_dx"],
            sure=f["sure"],
            model_dx=bundle.prediction,
            truth=bundle.truth,
            quality=f["quality"],
            ratings=f["ratings"],
            cmp_visual=f["cmp_visual"],
            cmp_textual=f["cmp_textual"],
            cmp_overall=f["cmp_overall"],
        )
        append_feedback_line(self.log_path, record_to_json(record))


def _field(payload, name, allowed):
    value = payload.get(name)
    if value not in allowed:
        raise HTTPException(
            status_code=422,
            detail=f"{name} must be one of {list(allowed)}, got {value!r}",
        )
    return value


def _validate_stage_payload(stage, payload):
    if stage == STAGE_DIAGNOSIS:
        return {
            "radiologist_dx": _field(payload, "radiologist_dx", DIAGNOSES),
            "sure": _field(payload, "sure", (SURE, UNSURE)),
        }
    if stage == STAGE_QUALITY:
        return {"quality": _field(payload, "quality", QUALITIES)}
    if stage == STAGE_VISUAL:
        return {
            "ratings": {
                "vis_ind": _field(payload, "vis_ind", RATINGS),
                "vis_des": _field(payload, "vis_des", RATINGS),
            },
            "cmp_visual": _field(payload, "cmp_visual", COMPARISONS),
        }
    if stage == STAGE_TEXTUAL:
        return {
            "ratings": {
                "text_ind": _field(payload, "text_ind", RATINGS),
                "text_des": _field(payload, "text_des", RATINGS),
            },
            "cmp_textual": _field(payload, "cmp_textual", COMPARISONS),
        }
    return {"cmp_overall": _field(payload, "cmp_overall", COMPARISONS)}


def create_app(bundles_dir, log_path):
    state = ReviewState(load_bundles(bundles_dir), log_path)
    app = FastAPI(title="diagnosis review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.review = state

    @app.get("/cases")
    def list_cases():
        return [
            {
                "case_id": case_id,
                "stage": state.sessions[case_id]["stage"],
                "complete": state.sessions[case_id]["stage"] == STAGE_COMPLETE,
            }
            for case_id in sorted(state.bundles)
        ]

    @app.get("/cases/{case_id}")
    def get_case(case_id: str):
        if case_id not in state.bundles:
            raise HTTPException(status_code=404, detail=f"unknown case {case_id}")
        return state.case_view(case_id)

    @app.post("/cases/{case_id}/stage")
    def post_stage(case_id: str, payload: dict):
        return state.submit(case_id, payload)

    @app.get("/report")
    def get_report():
        if state.log_path.exists():
            records = load_feedback_records(state.log_path)
        else:
            records = []
        return report_payload(records)

    return app


def serve(bundles_dir, log_path, port):
    import uvicorn

    app = create_app(bundles_dir, log_path)
    uvicorn.run(app, host="127.0.0.1", port=port)
