"""Domain types for the diagnosis pipeline and their tabular file formats.

Covers the probability vectors emitted by the neural stubs, the conversion
from the 5-class morphology output to the indicator triple consumed by the
decision tree, chest X-ray annotation parsing, and the feature CSV format.
All types are immutable; parsing functions are pure.
"""

import csv
from dataclasses import dataclass

from .errors import DataError, NormalizationError, ParseError
from .images import GrayImage
from .labels import (
    ASO_FLAG_SLICE,
    COHORT_COVID,
    COHORT_HEALTHY,
    COHORT_PNEUMONIA,
    COHORT_TB,
    COHORTS,
    COV_POS,
    COVIDR_FLAG_COLUMNS,
    DIAGNOSES,
    MORPH_CLASSES,
    MORPH_INDEX,
    MORPH_PROB_COLUMNS,
    MorphClass,
    NUM_COVIDR_FLAGS,
    NUM_MORPH_CLASSES,
    NUM_SYMPTOMS,
    SYMPTOM_INDEX,
    SYMPTOM_NAMES,
)

MORPH_SUM_TOLERANCE = 1e-6
MORPH_RENORM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class SymptomVector:
    """14 symptom probabilities in SYMPTOM_NAMES order."""

    probs: tuple

    def __post_init__(self):
        if len(self.probs) != NUM_SYMPTOMS:
            raise DataError(f"expected {NUM_SYMPTOMS} symptom probabilities, got {len(self.probs)}")
        for name, p in zip(SYMPTOM_NAMES, self.probs):
            if not (0.0 <= p <= 1.0):
                raise DataError(f"symptom probability {name}={p} outside [0, 1]")

    def __getitem__(self, name):
        return self.probs[SYMPTOM_INDEX[name]]


@dataclass(frozen=True)
class MorphProbs:
    """5-class morphology distribution in MORPH_CLASSES order."""

    probs: tuple

    def __post_init__(self):
        if len(self.probs) != NUM_MORPH_CLASSES:
            raise DataError(f"expected {NUM_MORPH_CLASSES} morphology probabilities, got {len(self.probs)}")
        for c, p in zip(MORPH_CLASSES, self.probs):
            if not (0.0 <= p <= 1.0):
                raise DataError(f"morphology probability {c.value}={p} outside [0, 1]")
        total = sum(self.probs)
        if abs(total - 1.0) > MORPH_SUM_TOLERANCE:
            raise DataError(f"morphology probabilities sum to {total}, expected 1")

    @classmethod
    def from_class(cls, morph_class):
        """Pure one-hot distribution for a morphology class."""
        probs = [0.0] * NUM_MORPH_CLASSES
        probs[MORPH_INDEX[morph_class]] = 1.0
        return cls(probs=tuple(probs))

    def argmax_class(self):
        """Highest-probability class; ties break toward the lowest index."""
        best = max(range(NUM_MORPH_CLASSES), key=lambda i: (self.probs[i], -i))
        return MORPH_CLASSES[best]


@dataclass(frozen=True)
class MorphEncoding:
    """Indicator triple fed to the tree: ASO present, GGO present, unknown."""

    aso: int
    ggo: int
    missing: int

    def __post_init__(self):
        for field_name, v in (("aso", self.aso), ("ggo", self.ggo), ("missing", self.missing)):
            if v not in (0, 1):
                raise DataError(f"indicator {field_name}={v} must be 0 or 1")
        if self.missing == 1 and (self.aso == 1 or self.ggo == 1):
            raise DataError("missing=1 requires aso=0 and ggo=0")


# Conversion from the argmax morphology class to the indicator triple.
# The unknown-morphology row is realized as a dedicated third indicator so
# that missingness stays available as a tree feature.
_CLASS_TO_ENCODING = {
    MorphClass.ASO: (1, 0, 0),
    MorphClass.GGO: (0, 1, 0),
    MorphClass.ASO_GGO: (1, 1, 0),
    MorphClass.NO_ASO_GGO: (0, 0, 0),
    MorphClass.MISSING_ASO_GGO: (0, 0, 1),
}


def encode_morphology(p):
    """Map a 5-class morphology distribution to the indicator triple."""
    aso, ggo, missing = _CLASS_TO_ENCODING[p.argmax_class()]
    return MorphEncoding(aso=aso, ggo=ggo, missing=missing)


@dataclass(frozen=True)
class FeatureVector:
    """Input space of the decision tree: symptom probs plus morphology."""

    symptoms: SymptomVector
    morph: MorphProbs

    def tree_values(self):
        """17-value projection: 14 symptom probs + 3 morphology indicators."""
        enc = encode_morphology(self.morph)
        return self.symptoms.probs + (float(enc.aso), float(enc.ggo), float(enc.missing))


@dataclass(frozen=True)
class CovidrAnnotation:
    """One annotated chest X-ray row: 7 finding flags plus cohort.

    A flag is 1 (present), 0 (absent), or None (undefined). Undefined flags
    are only legal for tuberculosis/pneumonia rows, whose images were never
    annotated.
    """

    image_id: str
    cohort: str
    flags: tuple

    def __post_init__(self):
        if self.cohort not in COHORTS:
            raise DataError(f"unknown cohort {self.cohort!r}")
        if len(self.flags) != NUM_COVIDR_FLAGS:
            raise DataError(f"expected {NUM_COVIDR_FLAGS} flags, got {len(self.flags)}")
        for col, v in zip(COVIDR_FLAG_COLUMNS, self.flags):
            if v not in (0, 1, None):
                raise DataError(f"flag {col}={v!r} must be 0, 1 or undefined")
        defined = [v for v in self.flags if v is not None]
        if self.cohort == COHORT_COVID and not defined:
            raise DataError(f"covid row {self.image_id}: no flag defined")
        if self.cohort in (COHORT_TB, COHORT_PNEUMONIA) and defined:
            raise DataError(f"{self.cohort} row {self.image_id}: flags must be undefined")


def annotation_to_class(a):
    """Collapse an annotation to the 5-way morphology class.

    Covid rows: GGO presence is the ggo flag; ASO presence is the OR of the
    five air-space opacification flags. Healthy rows are absent-absent by
    convention; tuberculosis/pneumonia rows are unknown.
    """
    if a.cohort == COHORT_COVID:
        ggo = a.flags[1] == 1
        aso = any(v == 1 for v in a.flags[ASO_FLAG_SLICE])
        if aso and ggo:
            return MorphClass.ASO_GGO
        if aso:
            return MorphClass.ASO
        if ggo:
            return MorphClass.GGO
        return MorphClass.NO_ASO_GGO
    if a.cohort == COHORT_HEALTHY:
        return MorphClass.NO_ASO_GGO
    return MorphClass.MISSING_ASO_GGO


@dataclass(frozen=True)
class CaseRecord:
    """One case: image, ground-truth diagnosis, and source cohort."""

    case_id: str
    image: GrayImage
    truth: str
    cohort: str

    def __post_init__(self):
        if self.truth not in DIAGNOSES:
            raise DataError(f"unknown truth label {self.truth!r}")
        if self.cohort not in COHORTS:
            raise DataError(f"unknown cohort {self.cohort!r}")
        if (self.truth == COV_POS) != (self.cohort == COHORT_COVID):
            raise DataError(f"case {self.case_id}: truth {self.truth} inconsistent with cohort {self.cohort}")


@dataclass(frozen=True)
class FeatureRecord:
    """One feature CSV row."""

    case_id: str
    features: FeatureVector
    truth: str


ANNOTATION_HEADER = ("image_id", "cohort") + COVIDR_FLAG_COLUMNS
FEATURE_HEADER = ("case_id",) + SYMPTOM_NAMES + MORPH_PROB_COLUMNS + ("truth",)

_COERCE_EMPTY_COHORTS = (COHORT_HEALTHY,)  # empty flags read as all-absent


def _parse_flag(cell, column, line):
    cell = cell.strip()
    if cell == "":
        return None
    if cell == "0":
        return 0
    if cell == "1":
        return 1
    raise DataError(f"line {line}: flag {column}={cell!r} must be 0, 1 or empty")


def parse_covidr(path):
    """Parse an annotation CSV into CovidrAnnotation records.

    Raises ParseError for structural problems (header, column count) and
    DataError for cell values outside the allowed domain.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty annotation file") from None
        if tuple(header) != ANNOTATION_HEADER:
            raise ParseError(f"bad header {header!r}, expected {list(ANNOTATION_HEADER)}", line=1)
        records = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(ANNOTATION_HEADER):
                raise ParseError(
                    f"expected {len(ANNOTATION_HEADER)} columns, got {len(row)}", line=line
                )
            image_id, cohort = row[0].strip(), row[1].strip()
            if cohort not in COHORTS:
                raise DataError(f"line {line}: unknown cohort {cohort!r}")
            flags = [
                _parse_flag(cell, col, line)
                for col, cell in zip(COVIDR_FLAG_COLUMNS, row[2:])
            ]
            if cohort in _COERCE_EMPTY_COHORTS:
                flags = [0 if v is None else v for v in flags]
            try:
                records.append(CovidrAnnotation(image_id=image_id, cohort=cohort, flags=tuple(flags)))
            except DataError as exc:
                raise DataError(f"line {line}: {exc}") from exc
    return records


def write_covidr(path, annotations):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ANNOTATION_HEADER)
        for a in annotations:
            writer.writerow(
                [a.image_id, a.cohort] + ["" if v is None else str(v) for v in a.flags]
            )


def _parse_prob(cell, column, line):
    try:
        value = float(cell)
    except ValueError as exc:
        raise DataError(f"line {line}: {column}={cell!r} is not a number") from exc
    if not (0.0 <= value <= 1.0):
        raise DataError(f"line {line}: {column}={value} outside [0, 1]")
    return value


def load_features(path):
    """Load a feature CSV into FeatureRecord rows.

    Morphology probabilities are renormalized when their sum deviates from 1
    by at most 1e-3 and rejected beyond that.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty feature file") from None
        if tuple(header) != FEATURE_HEADER:
            raise ParseError(f"bad header {header!r}, expected {list(FEATURE_HEADER)}", line=1)
        records = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(FEATURE_HEADER):
                raise ParseError(f"expected {len(FEATURE_HEADER)} columns, got {len(row)}", line=line)
            case_id = row[0].strip()
            symptoms = tuple(
                _parse_prob(cell, name, line)
                for name, cell in zip(SYMPTOM_NAMES, row[1 : 1 + NUM_SYMPTOMS])
            )
            morph = tuple(
                _parse_prob(cell, name, line)
                for name, cell in zip(MORPH_PROB_COLUMNS, row[1 + NUM_SYMPTOMS : -1])
            )
            total = sum(morph)
            if abs(total - 1.0) > MORPH_RENORM_TOLERANCE:
                raise NormalizationError(
                    f"line {line}: morphology probabilities sum to {total}, deviation exceeds {MORPH_RENORM_TOLERANCE}"
                )
            if total != 1.0:
                morph = tuple(p / total for p in morph)
            truth = row[-1].strip()
            if truth not in DIAGNOSES:
                raise DataError(f"line {line}: unknown truth label {truth!r}")
            records.append(
                FeatureRecord(
                    case_id=case_id,
                    features=FeatureVector(
                        symptoms=SymptomVector(probs=symptoms),
                        morph=MorphProbs(probs=morph),
                    ),
                    truth=truth,
                )
            )
    return records


def write_features(path, records):
    """Write FeatureRecord rows; floats use repr so re-parsing is exact."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(FEATURE_HEADER)
        for rec in records:
            row = [rec.case_id]
            row.extend(repr(p) for p in rec.features.symptoms.probs)
            row.extend(repr(p) for p in rec.features.morph.probs)
            row.append(rec.truth)
            writer.writerow(row)
