"""Builders for the repository's shipped data fixtures.

Three files live in ``fixtures_data/``:

* ``covidr_annotations.csv`` -- 245 annotated COVID-positive rows whose
  seven per-finding positive counts match the published annotation table
  (None 44, GGO 145, bilateral patchy 30, bilateral symmetric 18,
  bilateral peripheral 54, unilateral right 36, unilateral left 28).
* ``features_test.csv`` -- 328 feature rows (30 COV+, 298 COV-) that the
  reference tree routes into the published confusion matrix (23,7,2,296).
* ``feedback_log.jsonl`` -- 30 completed review records reproducing the
  published analytics marginals; the visual-descriptive usefulness column
  is the one table the source numbers state inconsistently (21+5+1 = 27 of
  30), so this log uses (21, 5, 4) and tests exclude that column.

Construction is by explicit enumeration plus a local Fisher-Yates shuffle
driven only by ``random.random()``, the one generator primitive with a
cross-version stability guarantee. Regenerate with::

    python -m nsdiag.fixtures [OUTDIR]
"""

import os
import random
import sys
from pathlib import Path

from .data import (
    CovidrAnnotation,
    FeatureRecord,
    FeatureVector,
    MorphProbs,
    SymptomVector,
    write_covidr,
    write_features,
)
from .evaluation import (
    CMP_FIRST,
    CMP_SAME,
    CMP_SECOND,
    COMPARISONS,
    FeedbackRecord,
    QUALITIES,
    RATING_NOT,
    RATING_SOMEWHAT,
    RATING_USEFUL,
    SURE,
    UNSURE,
    append_feedback_line,
    record_to_json,
)
from .labels import (
    COHORT_COVID,
    COV_NEG,
    COV_POS,
    MORPH_INDEX,
    MorphClass,
    NUM_COVIDR_FLAGS,
    NUM_SYMPTOMS,
    SYMPTOM_INDEX,
)

FIXTURES_DIR = Path(__file__).parent / "fixtures_data"

COVIDR_FILE = "covidr_annotations.csv"
FEATURES_FILE = "features_test.csv"
FEEDBACK_FILE = "feedback_log.jsonl"

_COVIDR_SEED = 20240117
_FEATURES_SEED = 20240311


def fixture_path(name):
    return FIXTURES_DIR / name


def _uniform(rng, lo, hi):
    return lo + (hi - lo) * rng.random()


def _shuffle(rng, items):
    # local Fisher-Yates so the result depends only on rng.random()
    for i in range(len(items) - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        items[i], items[j] = items[j], items[i]


# --- covidr annotations ----------------------------------------------------

# flag columns: none, ggo, bilat_patchy, bilat_sym, bilat_periph,
#               unilat_rt, unilat_lt
_N_NONE = 44
_N_GGO = 145
_ASO_MULTIPLICITY = ((2, 30), (3, 18), (4, 54), (5, 36), (6, 28))
_COVIDR_TOTAL = 245


def build_covidr_rows():
    """245 covid rows hitting all seven positive counts exactly."""
    flag_rows = []
    for _ in range(_N_NONE):
        row = [0] * NUM_COVIDR_FLAGS
        row[0] = 1
        flag_rows.append(row)
    for _ in range(_N_GGO):
        row = [0] * NUM_COVIDR_FLAGS
        row[1] = 1
        flag_rows.append(row)
    for _ in range(_COVIDR_TOTAL - _N_NONE - _N_GGO):
        flag_rows.append([0] * NUM_COVIDR_FLAGS)

    # One ASO finding per row: the 56 GGO-free tail rows first, the rest
    # overlapping GGO rows, so both pure-ASO and GGO+ASO cases exist.
    aso_columns = [col for col, count in _ASO_MULTIPLICITY for _ in range(count)]
    tail_start = _N_NONE + _N_GGO
    targets = list(range(tail_start, _COVIDR_TOTAL))
    targets += list(range(_N_NONE, _N_NONE + len(aso_columns) - len(targets)))
    for col, row_index in zip(aso_columns, targets):
        flag_rows[row_index][col] = 1

    rng = random.Random(_COVIDR_SEED)
    _shuffle(rng, flag_rows)
    return [
        CovidrAnnotation(image_id=f"cxr-{i:03d}", cohort=COHORT_COVID, flags=tuple(row))
        for i, row in enumerate(flag_rows)
    ]


# --- feature rows -----------------------------------------------------------

_INF = SYMPTOM_INDEX["Infiltration"]
_EMPH = SYMPTOM_INDEX["Emphysema"]
_EDEMA = SYMPTOM_INDEX["Edema"]


def _morph_probs(rng, target_class):
    """5-class distribution with a clear argmax at target_class."""
    main = _uniform(rng, 0.6, 0.8)
    rest = [_uniform(rng, 0.1, 1.0) for _ in range(4)]
    scale = (1.0 - main) / sum(rest)
    target = MORPH_INDEX[target_class]
    probs = []
    k = 0
    for i in range(len(MORPH_INDEX)):
        if i == target:
            probs.append(main)
        else:
            probs.append(rest[k] * scale)
            k += 1
    return MorphProbs(probs=tuple(probs))


def _symptoms(rng, constraints):
    """14 probabilities, free except for the (index, lo, hi) constraints."""
    probs = [_uniform(rng, 0.05, 0.95) for _ in range(NUM_SYMPTOMS)]
    for index, lo, hi in constraints:
        probs[index] = _uniform(rng, lo, hi)
    return SymptomVector(probs=tuple(probs))


# Row recipes: (count, truth, morphology argmax, symptom constraints).
# Routing through the reference tree gives tp=23, fn=7, fp=2, tn=296.
_LOW_INF = (_INF, 0.0, 0.4)
_LOW_EMPH = (_EMPH, 0.0, 0.12)
_FEATURE_RECIPES = (
    (6, COV_POS, MorphClass.ASO, ()),
    (4, COV_POS, MorphClass.ASO_GGO, ()),
    (7, COV_POS, MorphClass.NO_ASO_GGO, ((_INF, 0.45, 0.9), _LOW_EMPH)),
    (6, COV_POS, MorphClass.NO_ASO_GGO, (_LOW_INF, (_EMPH, 0.14, 0.9), (_EDEMA, 0.1, 0.9))),
    (4, COV_POS, MorphClass.NO_ASO_GGO, (_LOW_INF, _LOW_EMPH)),
    (3, COV_POS, MorphClass.MISSING_ASO_GGO, ()),
    (1, COV_NEG, MorphClass.ASO, ()),
    (1, COV_NEG, MorphClass.NO_ASO_GGO, ((_INF, 0.45, 0.9), _LOW_EMPH)),
    (110, COV_NEG, MorphClass.NO_ASO_GGO, (_LOW_INF, _LOW_EMPH)),
    (40, COV_NEG, MorphClass.GGO, (_LOW_INF, _LOW_EMPH)),
    (146, COV_NEG, MorphClass.MISSING_ASO_GGO, ()),
)


def build_feature_records():
    rng = random.Random(_FEATURES_SEED)
    rows = []
    for count, truth, morph_class, constraints in _FEATURE_RECIPES:
        for _ in range(count):
            rows.append(
                (
                    truth,
                    FeatureVector(
                        symptoms=_symptoms(rng, constraints),
                        morph=_morph_probs(rng, morph_class),
                    ),
                )
            )
    _shuffle(rng, rows)
    return [
        FeatureRecord(case_id=f"fx-{i:03d}", features=features, truth=truth)
        for i, (truth, features) in enumerate(rows)
    ]


# --- feedback log -----------------------------------------------------------

_N_FEEDBACK = 30


def _ranges(assignments, index):
    for value, span in assignments:
        if index < span:
            return value
        index -= span
    raise ValueError(f"index {index} beyond assignment spans")


def build_feedback_records():
    """30 completed records satisfying every consistent published marginal."""
    records = []
    for i in range(_N_FEEDBACK):
        vis_ind = _ranges(((RATING_USEFUL, 14), (RATING_SOMEWHAT, 7), (RATING_NOT, 9)), i)
        vis_des = _ranges(((RATING_USEFUL, 21), (RATING_SOMEWHAT, 5), (RATING_NOT, 4)), i)
        text_des = _ranges(((RATING_USEFUL, 6), (RATING_SOMEWHAT, 4), (RATING_NOT, 20)), i)
        if i <= 8:
            text_ind = RATING_USEFUL
        elif i == 9:
            text_ind = RATING_SOMEWHAT
        elif 21 <= i <= 28:
            text_ind = RATING_USEFUL
        else:
            text_ind = RATING_NOT

        if i <= 4:
            cmp_visual = CMP_FIRST
        elif i <= 12:
            cmp_visual = CMP_SECOND
        else:
            cmp_visual = CMP_SAME

        cmp_textual = CMP_FIRST if i <= 9 or 21 <= i <= 23 else CMP_SAME

        sure = SURE if i <= 24 else UNSURE
        truth = COV_POS if i % 3 == 0 else COV_NEG
        flip = COV_NEG if truth == COV_POS else COV_POS
        if i <= 18:
            model_dx, radiologist_dx = truth, truth
        elif i <= 24:
            model_dx, radiologist_dx = truth, flip
        elif i <= 28:
            model_dx, radiologist_dx = truth, truth
        else:
            model_dx, radiologist_dx = flip, truth

        records.append(
            FeedbackRecord(
                case_id=f"case_{i + 1:03d}",
                radiologist_dx=radiologist_dx,
                sure=sure,
                model_dx=model_dx,
                truth=truth,
                quality=QUALITIES[i % 3],
                ratings={
                    "vis_ind": vis_ind,
                    "vis_des": vis_des,
                    "text_ind": text_ind,
                    "text_des": text_des,
                },
                cmp_visual=cmp_visual,
                cmp_textual=cmp_textual,
                cmp_overall=COMPARISONS[i % 3],
            )
        )
    return records


def write_all(directory):
    os.makedirs(directory, exist_ok=True)
    directory = Path(directory)
    write_covidr(directory / COVIDR_FILE, build_covidr_rows())
    write_features(directory / FEATURES_FILE, build_feature_records())
    log_path = directory / FEEDBACK_FILE
    if log_path.exists():
        log_path.unlink()
    for record in build_feedback_records():
        append_feedback_line(log_path, record_to_json(record))


def main(argv=None):
    args = sys.argv[1:] if argv is None else argv
    target = Path(args[0]) if args else FIXTURES_DIR
    write_all(target)
    print(f"fixtures written to {target}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
