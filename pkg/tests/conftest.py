import pytest

from nsdiag.labels import (
    COHORT_COVID,
    COHORT_HEALTHY,
    COHORT_PNEUMONIA,
    COHORT_TB,
    NUM_MORPH_CLASSES,
    NUM_SYMPTOMS,
)
from nsdiag.neural import SynthSpec, init_model, predict_s, r_input, synth_dataset, train
from nsdiag.labels import MORPH_INDEX


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        verdict = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[{verdict}] {name}", flush=True)


SMALL_COUNTS = {
    COHORT_COVID: 12,
    COHORT_HEALTHY: 8,
    COHORT_TB: 6,
    COHORT_PNEUMONIA: 6,
}


@pytest.fixture(scope="session")
def small_cases():
    return synth_dataset(SynthSpec(counts=SMALL_COUNTS, seed=5))


@pytest.fixture(scope="session")
def trained_models(small_cases):
    """Quickly trained (s, r, e2e) stubs over the small synthetic set."""
    pixels = small_cases[0].case.image.size
    s0 = init_model("mlp1", pixels, NUM_SYMPTOMS, "binary_ce", hidden_dim=8, seed=(5, 10))
    s_model = train(s0, [(sc.case.image, sc.s_labels) for sc in small_cases], lr=0.1, epochs=120)

    r_data = [
        (r_input(sc.case.image, predict_s(s_model, sc.case.image)), MORPH_INDEX[sc.morph_class])
        for sc in small_cases
    ]
    r0 = init_model(
        "mlp1", pixels + NUM_SYMPTOMS, NUM_MORPH_CLASSES, "categorical_ce", hidden_dim=8, seed=(5, 20)
    )
    r_model = train(r0, r_data, lr=0.1, epochs=150)

    e0 = init_model("mlp1", pixels, 1, "binary_ce", hidden_dim=8, seed=(5, 30))
    e2e_model = train(
        e0,
        [(sc.case.image, [1.0 if sc.case.truth == "COV+" else 0.0]) for sc in small_cases],
        lr=0.1,
        epochs=120,
    )
    return s_model, r_model, e2e_model
