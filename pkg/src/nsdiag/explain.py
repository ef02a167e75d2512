"""The four per-case explanation artifacts and global rule extraction.

Inductive explanations are derived from fitted models: an input-gradient
saliency map over the image, and the rendered decision path of the tree.
Descriptive baselines are decision-agnostic: a threshold segmentation mask
and a Low/Medium/High tabulation of the case's probabilities.

Also home to the reference seven-leaf tree used as the golden object for
rule-extraction tests and as the labeling function in fidelity checks.
"""

import csv
import io
import os
from dataclasses import dataclass

from .data import FeatureVector
from .errors import DataError
from .images import write_pgm
from .labels import (
    COV_NEG,
    COV_POS,
    DIAGNOSES,
    MISSING_FEATURE,
    MORPH_INDEX,
    MorphClass,
    SYMPTOM_NAMES,
    TREE_FEATURE_NAMES,
)
from .neural import predict_r, predict_s, saliency, segment
from .tree import DecisionTree, Leaf, Split, predict

LE = "<="
GT = ">"

BIN_LOW = "Low"
BIN_MEDIUM = "Medium"
BIN_HIGH = "High"

LOW_MAX = 0.33
MEDIUM_MAX = 0.67

DEFAULT_TAU = 0.5

# Descriptive rows: the 14 symptom probabilities plus the three clinically
# named morphology class probabilities.
DESCRIPTIVE_ROW_NAMES = SYMPTOM_NAMES + ("P(ASO)", "P(GGO)", "P(Missing)")

_MORPH_PROB_ROWS = (
    MORPH_INDEX[MorphClass.ASO],
    MORPH_INDEX[MorphClass.GGO],
    MORPH_INDEX[MorphClass.MISSING_ASO_GGO],
)


@dataclass(frozen=True)
class Rule:
    """One root-to-leaf path: label plus ordered (feature, op, threshold)."""

    label: str
    conditions: tuple

    def __post_init__(self):
        if self.label not in DIAGNOSES:
            raise DataError(f"unknown rule label {self.label!r}")
        for feature, op, threshold in self.conditions:
            if op not in (LE, GT):
                raise DataError(f"unknown comparator {op!r}")
            if feature not in TREE_FEATURE_NAMES:
                raise DataError(f"unknown rule feature {feature!r}")
            del threshold


@dataclass(frozen=True)
class TextualInductive:
    """Rendered decision path; conditions on the Missing indicator dropped."""

    label: str
    rendered: str
    rule_index: int


@dataclass(frozen=True)
class TextualDescriptive:
    """17 (name, bin) rows in DESCRIPTIVE_ROW_NAMES order."""

    rows: tuple

    def __post_init__(self):
        if len(self.rows) != len(DESCRIPTIVE_ROW_NAMES):
            raise DataError(f"expected {len(DESCRIPTIVE_ROW_NAMES)} rows, got {len(self.rows)}")


@dataclass(frozen=True)
class ExplanationBundle:
    case_id: str
    visual_inductive: object  # SaliencyMap
    visual_descriptive: object  # SegmentationMask
    textual_inductive: TextualInductive
    textual_descriptive: TextualDescriptive
    prediction: str

    def __post_init__(self):
        if self.prediction != self.textual_inductive.label:
            raise DataError("prediction disagrees with its textual explanation")


def extract_rules(tree):
    """One Rule per leaf, depth-first left before right."""
    rules = []

    def walk(node, conditions):
        if isinstance(node, Leaf):
            rules.append(Rule(label=node.label, conditions=tuple(conditions)))
            return
        walk(node.left, conditions + [(node.feature, LE, node.threshold)])
        walk(node.right, conditions + [(node.feature, GT, node.threshold)])

    walk(tree.root, [])
    return rules


def rule_fires(rule, x):
    """True iff every condition holds on x's 17-feature projection."""
    index = {name: i for i, name in enumerate(TREE_FEATURE_NAMES)}
    values = x.tree_values()
    for feature, op, threshold in rule.conditions:
        v = values[index[feature]]
        ok = v <= threshold if op == LE else v > threshold
        if not ok:
            return False
    return True


def _format_threshold(t):
    # Appendix typography: at most 3 decimals, trailing zeros trimmed
    # ("0.5", not "0.500").
    text = f"{t:.3f}".rstrip("0").rstrip(".")
    return text if text else "0"


def render_condition(condition):
    feature, op, threshold = condition
    return f"P({feature}) {op} {_format_threshold(threshold)}"


def render_rule(rule):
    """Appendix-style conjunction, Missing conditions included."""
    if not rule.conditions:
        return f"{rule.label} (no conditions)"
    body = " && ".join(render_condition(c) for c in rule.conditions)
    return f"{rule.label} because {body}"


def explain_textual_inductive(tree, x):
    """Rendered decision path for x; routing keeps Missing splits, the
    rendering drops them."""
    rules = extract_rules(tree)
    label = predict(tree, x)
    for rule_index, rule in enumerate(rules):
        if rule_fires(rule, x):
            break
    else:  # unreachable: rules partition the feature space
        raise DataError("no rule fired; tree and rules disagree")
    shown = [c for c in rule.conditions if c[0] != MISSING_FEATURE]
    if shown:
        rendered = f"{label} because " + " && ".join(render_condition(c) for c in shown)
    else:
        rendered = f"{label} (no conditions)"
    return TextualInductive(label=label, rendered=rendered, rule_index=rule_index)


def bin_value(v):
    if v <= LOW_MAX:
        return BIN_LOW
    if v <= MEDIUM_MAX:
        return BIN_MEDIUM
    return BIN_HIGH


def explain_textual_descriptive(x):
    values = list(x.symptoms.probs) + [x.morph.probs[i] for i in _MORPH_PROB_ROWS]
    rows = tuple(
        (name, bin_value(v)) for name, v in zip(DESCRIPTIVE_ROW_NAMES, values)
    )
    return TextualDescriptive(rows=rows)


def fixture_tree():
    """The reference seven-leaf diagnosis tree (depth 5).

    Routing: morphology argmax ASO or ASO_GGO is COV+ outright; unknown
    morphology is COV-; otherwise infiltration and emphysema (and, in one
    branch, edema) decide. Leaf counts are nominal one-hot placeholders.
    """
    def pos():
        return Leaf(COV_POS, (1, 0))

    def neg():
        return Leaf(COV_NEG, (0, 1))

    edema = Split("Edema", 0.085, left=neg(), right=pos())
    low_inf = Split("Emphysema", 0.127, left=neg(), right=edema)
    high_inf = Split("Emphysema", 0.122, left=pos(), right=neg())
    inf = Split("Infiltration", 0.406, left=low_inf, right=high_inf)
    missing = Split(MISSING_FEATURE, 0.5, left=inf, right=neg())
    root = Split("ASO", 0.5, left=missing, right=pos())
    return DecisionTree(root=root, feature_names=TREE_FEATURE_NAMES, max_depth=5, max_leaves=7)


def bundle(case, models, tree, tau=DEFAULT_TAU):
    """Assemble all four explanations plus the tree prediction for a case.

    ``models`` is the (symptom stub, morphology stub) pair. Pure: writes
    nothing.
    """
    s_model, r_model = models
    symptoms = predict_s(s_model, case.image)
    morph = predict_r(r_model, case.image, symptoms)
    features = FeatureVector(symptoms=symptoms, morph=morph)
    prediction = predict(tree, features)
    return ExplanationBundle(
        case_id=case.case_id,
        visual_inductive=saliency(r_model, case.image, symptoms),
        visual_descriptive=segment(case.image, tau),
        textual_inductive=explain_textual_inductive(tree, features),
        textual_descriptive=explain_textual_descriptive(features),
        prediction=prediction,
    )


def descriptive_csv_text(descriptive):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["feature", "bin"])
    for name, b in descriptive.rows:
        writer.writerow([name, b])
    return out.getvalue()


BUNDLE_FILES = (
    "image.pgm",
    "saliency.pgm",
    "mask.pgm",
    "inductive.txt",
    "descriptive.csv",
    "prediction.txt",
    "truth.txt",
)


def write_bundle(directory, case, bundle_obj):
    """Write one case's review directory.

    Alongside the four explanation artifacts and the prediction, the case
    image and ground truth are stored so the review service can serve the
    image and score agreement later. Truth stays server-side; it is never
    part of any API response.
    """
    os.makedirs(directory, exist_ok=True)
    img = case.image
    write_pgm(os.path.join(directory, "image.pgm"), img.width, img.height, img.pixels)
    sal = bundle_obj.visual_inductive
    write_pgm(os.path.join(directory, "saliency.pgm"), sal.width, sal.height, sal.values)
    mask = bundle_obj.visual_descriptive
    write_pgm(os.path.join(directory, "mask.pgm"), mask.width, mask.height, mask.values)
    with open(os.path.join(directory, "inductive.txt"), "w", encoding="utf-8") as f:
        f.write(bundle_obj.textual_inductive.rendered + "\n")
    with open(os.path.join(directory, "descriptive.csv"), "w", encoding="utf-8") as f:
        f.write(descriptive_csv_text(bundle_obj.textual_descriptive))
    with open(os.path.join(directory, "prediction.txt"), "w", encoding="utf-8") as f:
        f.write(bundle_obj.prediction + "\n")
    with open(os.path.join(directory, "truth.txt"), "w", encoding="utf-8") as f:
        f.write(case.truth + "\n")
