"""Accuracy statistics, the 2-s.d. significance rule, and feedback analytics.

The feedback log is JSON-lines: each line is a session snapshot tagged with
a ``stage`` field. Completed sessions carry ``"stage": "complete"`` and all
record fields; the analytics operate on completed records only. Accuracy
uncertainty uses the binomial standard deviation sqrt(p(1-p)/n).
"""

import csv
import json
import math
import os
from dataclasses import dataclass

from .errors import DataError, ValidationError
from .labels import COV_POS, DIAGNOSES

RATING_USEFUL = "Useful"
RATING_SOMEWHAT = "SomewhatUseful"
RATING_NOT = "NotUseful"
RATINGS = (RATING_USEFUL, RATING_SOMEWHAT, RATING_NOT)
RELEVANT_RATINGS = (RATING_USEFUL, RATING_SOMEWHAT)

CMP_FIRST = "first-better"
CMP_SECOND = "second-better"
CMP_SAME = "same"
COMPARISONS = (CMP_FIRST, CMP_SECOND, CMP_SAME)

SURE = "sure"
UNSURE = "unsure"

QUALITIES = ("Low", "Medium", "High")

# Rating columns in reporting order: visual then textual, inductive first.
REPRESENTATIONS = ("vis_ind", "vis_des", "text_ind", "text_des")

STAGE_COMPLETE = "complete"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts with COV+ as the positive class."""

    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        for name, v in (("tp", self.tp), ("fn", self.fn), ("fp", self.fp), ("tn", self.tn)):
            if not isinstance(v, int) or v < 0:
                raise DataError(f"confusion count {name}={v!r} must be a nonnegative integer")

    @property
    def n(self):
        return self.tp + self.fn + self.fp + self.tn


@dataclass(frozen=True)
class AccuracyEstimate:
    p: float
    sd: float
    n: int


def accuracy(cm):
    """Accuracy with its binomial standard deviation."""
    n = cm.n
    if n == 0:
        raise DataError("empty confusion matrix")
    p = (cm.tp + cm.tn) / n
    return AccuracyEstimate(p=p, sd=math.sqrt(p * (1.0 - p) / n), n=n)


def significant_difference(a, b):
    """True iff the accuracies differ by at least two standard deviations."""
    return abs(a.p - b.p) >= 2.0 * max(a.sd, b.sd)


def confusion(pairs):
    """Confusion matrix from (truth, prediction) label pairs."""
    tp = fn = fp = tn = 0
    for truth, pred in pairs:
        if truth not in DIAGNOSES or pred not in DIAGNOSES:
            raise DataError(f"unknown label in pair ({truth!r}, {pred!r})")
        if truth == COV_POS:
            if pred == COV_POS:
                tp += 1
            else:
                fn += 1
        else:
            if pred == COV_POS:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fn=fn, fp=fp, tn=tn)


@dataclass(frozen=True)
class FeedbackRecord:
    """One completed review session."""

    case_id: str
    radiologist_dx: str
    sure: str
    model_dx: str
    truth: str
    quality: str
    ratings: dict  # representation key -> rating
    cmp_visual: str
    cmp_textual: str
    cmp_overall: str

    def __post_init__(self):
        for name, v in (("radiologist_dx", self.radiologist_dx), ("model_dx", self.model_dx), ("truth", self.truth)):
            if v not in DIAGNOSES:
                raise ValidationError(f"{name}={v!r} must be one of {list(DIAGNOSES)}")
        if self.sure not in (SURE, UNSURE):
            raise ValidationError(f"sure={self.sure!r} must be sure or unsure")
        if self.quality not in QUALITIES:
            raise ValidationError(f"quality={self.quality!r} must be one of {list(QUALITIES)}")
        if set(self.ratings) != set(REPRESENTATIONS):
            raise ValidationError(f"ratings must cover exactly {list(REPRESENTATIONS)}")
        for key, rating in self.ratings.items():
            if rating not in RATINGS:
                raise ValidationError(f"rating {key}={rating!r} must be one of {list(RATINGS)}")
        for name, v in (("cmp_visual", self.cmp_visual), ("cmp_textual", self.cmp_textual), ("cmp_overall", self.cmp_overall)):
            if v not in COMPARISONS:
                raise ValidationError(f"{name}={v!r} must be one of {list(COMPARISONS)}")


def record_to_json(record):
    """One JSONL line object for a completed record."""
    return {
        "case_id": record.case_id,
        "stage": STAGE_COMPLETE,
        "radiologist_dx": record.radiologist_dx,
        "sure": record.sure,
        "model_dx": record.model_dx,
        "truth": record.truth,
        "quality": record.quality,
        "ratings": dict(record.ratings),
        "cmp_visual": record.cmp_visual,
        "cmp_textual": record.cmp_textual,
        "cmp_overall": record.cmp_overall,
    }


def record_from_json(obj):
    """Parse one completed-record line; rejects partial snapshots."""
    if not isinstance(obj, dict):
        raise ValidationError("feedback line must be a JSON object")
    if obj.get("stage") != STAGE_COMPLETE:
        raise ValidationError(f"not a completed record (stage={obj.get('stage')!r})")
    try:
        return FeedbackRecord(
            case_id=obj["case_id"],
            radiologist_dx=obj["radiologist_dx"],
            sure=obj["sure"],
            model_dx=obj["model_dx"],
            truth=obj["truth"],
            quality=obj["quality"],
            ratings=dict(obj["ratings"]),
            cmp_visual=obj["cmp_visual"],
            cmp_textual=obj["cmp_textual"],
            cmp_overall=obj["cmp_overall"],
        )
    except KeyError as exc:
        raise ValidationError(f"feedback line missing field {exc}") from exc


def load_feedback_records(path):
    """Completed records from a feedback log, in first-completion order.

    The log may contain partial session snapshots (earlier stage markers);
    only each case's last line counts, and only completed ones are returned.
    """
    last_by_case = {}
    order = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"feedback log line {line_no}: {exc}") from exc
            if not isinstance(obj, dict) or "case_id" not in obj:
                raise ValidationError(f"feedback log line {line_no}: missing case_id")
            case_id = obj["case_id"]
            if case_id not in last_by_case:
                order.append(case_id)
            last_by_case[case_id] = obj
    records = []
    for case_id in order:
        obj = last_by_case[case_id]
        if obj.get("stage") == STAGE_COMPLETE:
            records.append(record_from_json(obj))
    return records


def append_feedback_line(path, obj, lock=None):
    """Append one JSON line; callers serialize writes via the lock."""
    text = json.dumps(obj, sort_keys=True) + "\n"
    if lock is not None:
        with lock:
            with open(path, "a", encoding="utf-8") as f:
                f.write(text)
    else:
        with open(path, "a", encoding="utf-8") as f:
            f.write(text)


def _require_complete(records):
    for r in records:
        if not isinstance(r, FeedbackRecord):
            raise ValidationError(f"incomplete or foreign record: {r!r}")


def usefulness_table(records):
    """Per-representation counts of (Useful, SomewhatUseful, NotUseful)."""
    _require_complete(records)
    table = {}
    for rep in REPRESENTATIONS:
        counts = {rating: 0 for rating in RATINGS}
        for r in records:
            counts[r.ratings[rep]] += 1
        table[rep] = tuple(counts[rating] for rating in RATINGS)
    return table


def _is_relevant(record, rep):
    return record.ratings[rep] in RELEVANT_RATINGS


def conditional_comparison(records, modality):
    """Inductive-vs-descriptive tallies over relevance-filtered records.

    A record is relevant for a modality when its *inductive* explanation was
    rated Useful or SomewhatUseful. Returns ((I>D, I<D, I=D), relevant_count).
    """
    _require_complete(records)
    if modality == "visual":
        rep, cmp_field = "vis_ind", "cmp_visual"
    elif modality == "textual":
        rep, cmp_field = "text_ind", "cmp_textual"
    else:
        raise DataError(f"unknown modality {modality!r}")
    counts = {c: 0 for c in COMPARISONS}
    relevant = 0
    for r in records:
        if not _is_relevant(r, rep):
            continue
        relevant += 1
        counts[getattr(r, cmp_field)] += 1
    return (counts[CMP_FIRST], counts[CMP_SECOND], counts[CMP_SAME]), relevant


def agreement_tables(records):
    """((agree, disagree) over sure records, (correct, incorrect) over unsure).

    Sure records compare the radiologist's diagnosis to the model's; unsure
    records compare the model's diagnosis to ground truth.
    """
    _require_complete(records)
    agree = disagree = correct = incorrect = 0
    for r in records:
        if r.sure == SURE:
            if r.radiologist_dx == r.model_dx:
                agree += 1
            else:
                disagree += 1
        else:
            if r.model_dx == r.truth:
                correct += 1
            else:
                incorrect += 1
    return (agree, disagree), (correct, incorrect)


def relevance_coverage(records):
    """Records whose visual or textual inductive explanation was relevant."""
    _require_complete(records)
    return sum(
        1 for r in records if _is_relevant(r, "vis_ind") or _is_relevant(r, "text_ind")
    )


def report_payload(records):
    """All five tables as one JSON-friendly dict."""
    vis_counts, vis_relevant = conditional_comparison(records, "visual")
    text_counts, text_relevant = conditional_comparison(records, "textual")
    sure_counts, unsure_counts = agreement_tables(records)
    return {
        "record_count": len(records),
        "usefulness": {rep: list(counts) for rep, counts in usefulness_table(records).items()},
        "comparison_visual": {"counts": list(vis_counts), "relevant": vis_relevant},
        "comparison_textual": {"counts": list(text_counts), "relevant": text_relevant},
        "agreement_sure": list(sure_counts),
        "agreement_unsure": list(unsure_counts),
        "relevance_coverage": relevance_coverage(records),
    }


def render_report_text(records):
    payload = report_payload(records)
    lines = []
    lines.append(f"completed reviews: {payload['record_count']}")
    lines.append("")
    lines.append("usefulness (Useful / SomewhatUseful / NotUseful)")
    for rep in REPRESENTATIONS:
        u, s, n = payload["usefulness"][rep]
        lines.append(f"  {rep:<9} {u:>3} {s:>3} {n:>3}")
    lines.append("")
    for modality in ("visual", "textual"):
        t = payload[f"comparison_{modality}"]
        first, second, same = t["counts"]
        lines.append(
            f"{modality} inductive vs descriptive (relevant {t['relevant']}): "
            f"I>D {first}, I<D {second}, I=D {same}"
        )
    sure_a, sure_d = payload["agreement_sure"]
    uns_c, uns_i = payload["agreement_unsure"]
    lines.append(f"sure reviews: agree {sure_a}, disagree {sure_d}")
    lines.append(f"unsure reviews: model correct {uns_c}, incorrect {uns_i}")
    lines.append(f"inductive explanation relevant: {payload['relevance_coverage']}/{payload['record_count']}")
    return "\n".join(lines) + "\n"


def write_report(directory, records):
    """Plain-text summary plus one CSV per table."""
    os.makedirs(directory, exist_ok=True)
    payload = report_payload(records)
    with open(os.path.join(directory, "report.txt"), "w", encoding="utf-8") as f:
        f.write(render_report_text(records))

    def write_csv(name, header, rows):
        with open(os.path.join(directory, name), "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)

    write_csv(
        "usefulness.csv",
        ["representation", "useful", "somewhat_useful", "not_useful"],
        [[rep] + payload["usefulness"][rep] for rep in REPRESENTATIONS],
    )
    for modality in ("visual", "textual"):
        t = payload[f"comparison_{modality}"]
        write_csv(
            f"comparison_{modality}.csv",
            ["inductive_better", "descriptive_better", "same", "relevant"],
            [t["counts"] + [t["relevant"]]],
        )
    write_csv(
        "agreement.csv",
        ["group", "first", "second"],
        [
            ["sure_agree_disagree"] + payload["agreement_sure"],
            ["unsure_correct_incorrect"] + payload["agreement_unsure"],
        ],
    )
    write_csv(
        "coverage.csv",
        ["relevant_records", "record_count"],
        [[payload["relevance_coverage"], payload["record_count"]]],
    )


def format_estimate(est):
    """Human accuracy rendering, e.g. '0.985 ± 0.007'."""
    return f"{est.p:.3f} ± {est.sd:.3f}"


def confusion_to_json(cm):
    return {"tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn}


def confusion_from_json(obj):
    try:
        return ConfusionMatrix(tp=int(obj["tp"]), fn=int(obj["fn"]), fp=int(obj["fp"]), tn=int(obj["tn"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad confusion matrix object: {exc}") from exc
