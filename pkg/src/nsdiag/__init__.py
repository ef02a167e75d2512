"""Neural-symbolic COVID-19 diagnosis pipeline at desk scale.

Toy differentiable stubs stand in for the deep feature models; their
outputs feed a from-scratch CART decision tree whose predictions come with
four explanation artifacts (visual/textual x inductive/descriptive), an
evaluation toolkit with binomial significance testing, and a staged HTTP
review workflow for collecting radiologist feedback.
"""

__version__ = "0.1.0"

from .data import (
    CaseRecord,
    CovidrAnnotation,
    FeatureRecord,
    FeatureVector,
    MorphEncoding,
    MorphProbs,
    SymptomVector,
    annotation_to_class,
    encode_morphology,
    load_features,
    parse_covidr,
)
from .errors import (
    ConfigError,
    CorruptModelError,
    DataError,
    DiagnosisError,
    DimensionError,
    DivergenceError,
    NormalizationError,
    ParseError,
    StageError,
    StateError,
    ValidationError,
)
from .evaluation import (
    AccuracyEstimate,
    ConfusionMatrix,
    FeedbackRecord,
    accuracy,
    agreement_tables,
    conditional_comparison,
    relevance_coverage,
    significant_difference,
    usefulness_table,
)
from .explain import (
    ExplanationBundle,
    Rule,
    TextualDescriptive,
    TextualInductive,
    bundle,
    explain_textual_descriptive,
    explain_textual_inductive,
    extract_rules,
    fixture_tree,
)
from .images import GrayImage
from .labels import COV_NEG, COV_POS, MORPH_CLASSES, MorphClass, SYMPTOM_NAMES
from .neural import (
    SaliencyMap,
    SegmentationMask,
    SynthCase,
    SynthSpec,
    ToyModel,
    init_model,
    predict_r,
    predict_s,
    saliency,
    segment,
    synth_dataset,
    train,
)
from .pipeline import PipelineConfig, RunManifest, evaluate_split, run_pipeline
from .tree import DecisionTree, Leaf, Split, fit, predict, sweep
