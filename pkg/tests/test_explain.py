import pytest

from nsdiag.data import FeatureVector, MorphProbs, SymptomVector
from nsdiag.errors import DataError
from nsdiag.explain import (
    BIN_HIGH,
    BIN_LOW,
    BIN_MEDIUM,
    BUNDLE_FILES,
    DESCRIPTIVE_ROW_NAMES,
    ExplanationBundle,
    Rule,
    TextualInductive,
    bin_value,
    bundle,
    descriptive_csv_text,
    explain_textual_descriptive,
    explain_textual_inductive,
    extract_rules,
    fixture_tree,
    render_rule,
    rule_fires,
    write_bundle,
)
from nsdiag.labels import COV_NEG, COV_POS, MISSING_FEATURE, MorphClass, SYMPTOM_NAMES
from nsdiag.tree import depth, leaf_count, predict

# Rendered root-to-leaf paths of the reference tree, left before right.
FIXTURE_RULES = (
    "COV- because P(ASO) <= 0.5 && P(Missing GGO/ASO) <= 0.5 && "
    "P(Infiltration) <= 0.406 && P(Emphysema) <= 0.127",
    "COV- because P(ASO) <= 0.5 && P(Missing GGO/ASO) <= 0.5 && "
    "P(Infiltration) <= 0.406 && P(Emphysema) > 0.127 && P(Edema) <= 0.085",
    "COV+ because P(ASO) <= 0.5 && P(Missing GGO/ASO) <= 0.5 && "
    "P(Infiltration) <= 0.406 && P(Emphysema) > 0.127 && P(Edema) > 0.085",
    "COV+ because P(ASO) <= 0.5 && P(Missing GGO/ASO) <= 0.5 && "
    "P(Infiltration) > 0.406 && P(Emphysema) <= 0.122",
    "COV- because P(ASO) <= 0.5 && P(Missing GGO/ASO) <= 0.5 && "
    "P(Infiltration) > 0.406 && P(Emphysema) > 0.122",
    "COV- because P(ASO) <= 0.5 && P(Missing GGO/ASO) > 0.5",
    "COV+ because P(ASO) > 0.5",
)


def fv(morph=MorphClass.NO_ASO_GGO, **overrides):
    probs = [0.1] * 14
    for name, v in overrides.items():
        probs[SYMPTOM_NAMES.index(name)] = v
    return FeatureVector(
        symptoms=SymptomVector(probs=tuple(probs)),
        morph=MorphProbs.from_class(morph),
    )


class TestFixtureTree:
    def test_shape(self):
        tree = fixture_tree()
        assert leaf_count(tree) == 7
        assert depth(tree) == 5

    def test_rule_extraction_golden(self):
        rules = extract_rules(fixture_tree())
        assert tuple(render_rule(r) for r in rules) == FIXTURE_RULES

    def test_published_routings(self):
        tree = fixture_tree()
        assert predict(tree, fv(MorphClass.ASO)) == COV_POS
        assert predict(tree, fv(MorphClass.ASO_GGO)) == COV_POS
        assert predict(tree, fv(MorphClass.MISSING_ASO_GGO)) == COV_NEG
        assert predict(tree, fv(Infiltration=0.5, Emphysema=0.1)) == COV_POS
        assert predict(tree, fv(Infiltration=0.5, Emphysema=0.2)) == COV_NEG
        assert predict(tree, fv(Infiltration=0.2, Emphysema=0.2, Edema=0.1)) == COV_POS
        assert predict(tree, fv(Infiltration=0.2, Emphysema=0.2, Edema=0.05)) == COV_NEG
        assert predict(tree, fv(Infiltration=0.2, Emphysema=0.05)) == COV_NEG


class TestRules:
    def test_rule_fires(self):
        rules = extract_rules(fixture_tree())
        x = fv(MorphClass.ASO)
        fired = [r for r in rules if rule_fires(r, x)]
        assert len(fired) == 1
        assert fired[0].label == COV_POS
        assert fired[0].conditions == (("ASO", ">", 0.5),)

    def test_rules_partition_space(self):
        import numpy as np

        rules = extract_rules(fixture_tree())
        rng = np.random.default_rng(3)
        classes = list(MorphClass)
        for _ in range(50):
            x = FeatureVector(
                symptoms=SymptomVector(probs=tuple(float(v) for v in rng.uniform(0, 1, 14))),
                morph=MorphProbs.from_class(classes[int(rng.integers(0, 5))]),
            )
            assert sum(1 for r in rules if rule_fires(r, x)) == 1

    def test_rule_validation(self):
        with pytest.raises(DataError):
            Rule(label="COV?", conditions=())
        with pytest.raises(DataError):
            Rule(label=COV_POS, conditions=(("ASO", "==", 0.5),))
        with pytest.raises(DataError):
            Rule(label=COV_POS, conditions=(("Fever", ">", 0.5),))


class TestRendering:
    def test_threshold_trimming(self):
        rule = Rule(label=COV_POS, conditions=(("Edema", ">", 0.085),))
        assert render_rule(rule) == "COV+ because P(Edema) > 0.085"
        rule = Rule(label=COV_POS, conditions=(("ASO", ">", 0.5),))
        assert render_rule(rule) == "COV+ because P(ASO) > 0.5"
        rule = Rule(label=COV_NEG, conditions=(("Edema", "<=", 0.25),))
        assert render_rule(rule) == "COV- because P(Edema) <= 0.25"
        rule = Rule(label=COV_NEG, conditions=(("Edema", "<=", 1.0),))
        assert render_rule(rule) == "COV- because P(Edema) <= 1"

    def test_empty_rule(self):
        rule = Rule(label=COV_NEG, conditions=())
        assert render_rule(rule) == "COV- (no conditions)"


class TestTextualInductive:
    def test_missing_condition_suppressed(self):
        tree = fixture_tree()
        x = fv(Infiltration=0.5, Emphysema=0.1)
        ti = explain_textual_inductive(tree, x)
        assert ti.label == COV_POS
        assert MISSING_FEATURE not in ti.rendered
        assert ti.rendered == (
            "COV+ because P(ASO) <= 0.5 && P(Infiltration) > 0.406 && "
            "P(Emphysema) <= 0.122"
        )

    def test_missing_only_rule_collapses(self):
        tree = fixture_tree()
        ti = explain_textual_inductive(tree, fv(MorphClass.MISSING_ASO_GGO))
        # the fired path is ASO <= 0.5 && Missing > 0.5; only the Missing
        # condition is suppressed
        assert ti.rendered == "COV- because P(ASO) <= 0.5"

    def test_rule_index_matches_extraction(self):
        tree = fixture_tree()
        rules = extract_rules(tree)
        ti = explain_textual_inductive(tree, fv(MorphClass.ASO))
        assert rules[ti.rule_index].conditions == (("ASO", ">", 0.5),)


class TestBinning:
    @pytest.mark.parametrize(
        "value,expected",
        [
            (0.0, BIN_LOW),
            (0.33, BIN_LOW),
            (0.331, BIN_MEDIUM),
            (0.5, BIN_MEDIUM),
            (0.67, BIN_MEDIUM),
            (0.671, BIN_HIGH),
            (1.0, BIN_HIGH),
        ],
    )
    def test_boundaries(self, value, expected):
        assert bin_value(value) == expected

    def test_descriptive_rows(self):
        x = FeatureVector(
            symptoms=SymptomVector(probs=(0.0, 0.1, 0.2, 0.3, 0.33, 0.34, 0.4,
                                          0.5, 0.6, 0.67, 0.68, 0.7, 0.9, 1.0)),
            morph=MorphProbs(probs=(0.7, 0.1, 0.1, 0.05, 0.05)),
        )
        td = explain_textual_descriptive(x)
        assert [name for name, _ in td.rows] == list(DESCRIPTIVE_ROW_NAMES)
        bins = dict(td.rows)
        assert bins["Atelectasis"] == BIN_LOW
        assert bins["Effusion"] == BIN_LOW  # 0.33 inclusive
        assert bins["Emphysema"] == BIN_MEDIUM  # 0.34
        assert bins["Mass"] == BIN_MEDIUM  # 0.67 inclusive
        assert bins["Nodule"] == BIN_HIGH  # 0.68
        assert bins["P(ASO)"] == BIN_HIGH
        assert bins["P(GGO)"] == BIN_LOW
        assert bins["P(Missing)"] == BIN_LOW

    def test_csv_text(self):
        x = fv()
        text = descriptive_csv_text(explain_textual_descriptive(x))
        lines = text.splitlines()
        assert lines[0] == "feature,bin"
        assert len(lines) == 18
        assert lines[1] == "Atelectasis,Low"


class TestBundle:
    def test_bundle_assembly(self, small_cases, trained_models):
        s_model, r_model, _ = trained_models
        tree = fixture_tree()
        case = small_cases[0].case
        b = bundle(case, (s_model, r_model), tree)
        assert b.case_id == case.case_id
        assert b.prediction in (COV_POS, COV_NEG)
        assert b.prediction == b.textual_inductive.label
        assert len(b.textual_descriptive.rows) == 17
        assert b.visual_inductive.width == case.image.width
        assert b.visual_descriptive.width == case.image.width

    def test_prediction_label_consistency_enforced(self):
        ti = TextualInductive(label=COV_POS, rendered="COV+ (no conditions)", rule_index=0)
        with pytest.raises(DataError):
            ExplanationBundle(
                case_id="x",
                visual_inductive=None,
                visual_descriptive=None,
                textual_inductive=ti,
                textual_descriptive=explain_textual_descriptive(fv()),
                prediction=COV_NEG,
            )

    def test_write_bundle_layout(self, tmp_path, small_cases, trained_models):
        s_model, r_model, _ = trained_models
        case = small_cases[0].case
        b = bundle(case, (s_model, r_model), fixture_tree())
        out = tmp_path / case.case_id
        write_bundle(out, case, b)
        assert sorted(p.name for p in out.iterdir()) == sorted(BUNDLE_FILES)
        assert (out / "prediction.txt").read_text() == b.prediction + "\n"
        assert (out / "truth.txt").read_text() == case.truth + "\n"
        assert (out / "inductive.txt").read_text().rstrip("\n") == b.textual_inductive.rendered
