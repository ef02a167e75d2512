"""Label vocabularies and fixed orderings used throughout the pipeline.

Index order is load-bearing: CSV columns, model output units, and tree
feature positions all follow the tuples defined here.
"""

from enum import Enum

# 14 NIH disease indications, alphabetical.
SYMPTOM_NAMES = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Hernia",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pleural_Thickening",
    "Pneumonia",
    "Pneumothorax",
)
NUM_SYMPTOMS = len(SYMPTOM_NAMES)
SYMPTOM_INDEX = {name: i for i, name in enumerate(SYMPTOM_NAMES)}


class MorphClass(Enum):
    """Five-way morphology outcome predicted by the radiology stub."""

    ASO = "ASO"
    GGO = "GGO"
    ASO_GGO = "ASO_GGO"
    NO_ASO_GGO = "No_ASO_GGO"
    MISSING_ASO_GGO = "Missing_ASO_GGO"


MORPH_CLASSES = tuple(MorphClass)  # fixed 5-class order
NUM_MORPH_CLASSES = len(MORPH_CLASSES)
MORPH_INDEX = {c: i for i, c in enumerate(MORPH_CLASSES)}

COV_POS = "COV+"
COV_NEG = "COV-"
DIAGNOSES = (COV_POS, COV_NEG)

COHORT_COVID = "covid"
COHORT_HEALTHY = "healthy"
COHORT_TB = "tuberculosis"
COHORT_PNEUMONIA = "pneumonia"
COHORTS = (COHORT_COVID, COHORT_HEALTHY, COHORT_TB, COHORT_PNEUMONIA)

# Annotation CSV finding columns, fixed order. Column 0 is the explicit
# "no findings" mark; column 1 is ground glass opacity; columns 2-6 are
# the five air-space opacification findings.
COVIDR_FLAG_COLUMNS = (
    "none",
    "ggo",
    "bilat_patchy",
    "bilat_sym",
    "bilat_periph",
    "unilat_rt",
    "unilat_lt",
)
NUM_COVIDR_FLAGS = len(COVIDR_FLAG_COLUMNS)
ASO_FLAG_SLICE = slice(2, 7)

# Morphology indicator features appended to the 14 symptom probabilities
# when a FeatureVector is projected for the decision tree.
ASO_FEATURE = "ASO"
GGO_FEATURE = "GGO"
MISSING_FEATURE = "Missing GGO/ASO"
MORPH_FEATURES = (ASO_FEATURE, GGO_FEATURE, MISSING_FEATURE)

TREE_FEATURE_NAMES = SYMPTOM_NAMES + MORPH_FEATURES
NUM_TREE_FEATURES = len(TREE_FEATURE_NAMES)

# Feature CSV morphology probability columns, in MORPH_CLASSES order.
MORPH_PROB_COLUMNS = ("p_aso", "p_ggo", "p_aso_ggo", "p_none", "p_missing")
