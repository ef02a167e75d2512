"""Desk-scale differentiable classifiers standing in for the deep feature models.

Two architectures cover the three stubs used by the pipeline:

* ``linear``  -- a single affine map,
* ``mlp1``    -- one tanh hidden layer (tanh keeps finite-difference
  gradient checks well conditioned).

The symptom stub scores 14 independent indications with sigmoid outputs and
binary cross-entropy; the morphology stub scores 5 classes with softmax and
categorical cross-entropy; the end-to-end baseline is a single sigmoid unit.
All gradients (parameters and inputs) are computed in closed form so they
can be verified against central finite differences. Training is full-batch
Adam, deterministic for a fixed seed.
"""

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .data import CaseRecord, MorphProbs, SymptomVector
from .errors import ConfigError, DataError, DimensionError, DivergenceError
from .images import GrayImage, read_pgm, write_pgm
from .labels import (
    COHORT_COVID,
    COHORT_HEALTHY,
    COHORT_PNEUMONIA,
    COHORT_TB,
    COHORTS,
    COV_NEG,
    COV_POS,
    MorphClass,
    NUM_MORPH_CLASSES,
    NUM_SYMPTOMS,
    SYMPTOM_INDEX,
    SYMPTOM_NAMES,
)

ARCHS = ("linear", "mlp1")
LOSS_KINDS = ("binary_ce", "categorical_ce")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

INIT_SCALE = 0.05


def param_count(arch, input_dim, hidden_dim, output_dim):
    if arch == "linear":
        return output_dim * (input_dim + 1)
    if arch == "mlp1":
        return hidden_dim * (input_dim + 1) + output_dim * (hidden_dim + 1)
    raise ConfigError(f"unknown architecture {arch!r}")


@dataclass(frozen=True)
class ToyModel:
    """Immutable flat-parameter classifier. hidden_dim is 0 for linear."""

    arch: str
    weights: tuple
    input_dim: int
    hidden_dim: int
    output_dim: int
    loss_kind: str

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ConfigError("input_dim and output_dim must be positive")
        if self.arch == "mlp1" and self.hidden_dim <= 0:
            raise ConfigError("mlp1 requires hidden_dim >= 1")
        expected = param_count(self.arch, self.input_dim, self.hidden_dim, self.output_dim)
        if len(self.weights) != expected:
            raise ConfigError(f"expected {expected} parameters, got {len(self.weights)}")

    def weight_array(self):
        return np.asarray(self.weights, dtype=np.float64)


def init_model(arch, input_dim, output_dim, loss_kind, hidden_dim=0, seed=0):
    """Fresh model with weights uniform in [-0.05, 0.05] from a seeded PRNG."""
    n = param_count(arch, input_dim, hidden_dim, output_dim)
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-INIT_SCALE, INIT_SCALE, size=n)
    return ToyModel(
        arch=arch,
        weights=tuple(float(w) for w in weights),
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        output_dim=output_dim,
        loss_kind=loss_kind,
    )


def _unpack(model, w):
    """Split the flat parameter vector into layer views."""
    d, h, k = model.input_dim, model.hidden_dim, model.output_dim
    if model.arch == "linear":
        end = k * d
        return {"W": w[:end].reshape(k, d), "b": w[end : end + k]}
    end1 = h * d
    end2 = end1 + h
    end3 = end2 + k * h
    return {
        "W1": w[:end1].reshape(h, d),
        "b1": w[end1:end2],
        "W2": w[end2:end3].reshape(k, h),
        "b2": w[end3 : end3 + k],
    }


def _forward(model, X, w=None):
    """Batched logits plus the activations needed for backprop."""
    if w is None:
        w = model.weight_array()
    layers = _unpack(model, w)
    if model.arch == "linear":
        logits = X @ layers["W"].T + layers["b"]
        cache = {"X": X}
    else:
        hidden = np.tanh(X @ layers["W1"].T + layers["b1"])
        logits = hidden @ layers["W2"].T + layers["b2"]
        cache = {"X": X, "hidden": hidden}
    return logits, cache, layers


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=-1, keepdims=True)


def _as_input_matrix(model, data_inputs):
    rows = []
    for x in data_inputs:
        if isinstance(x, GrayImage):
            x = x.to_array()
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != model.input_dim:
            raise DimensionError(f"input has {x.shape[0]} values, model expects {model.input_dim}")
        rows.append(x)
    return np.stack(rows)


def _as_targets(model, targets):
    n = len(targets)
    if model.loss_kind == "binary_ce":
        Y = np.asarray(targets, dtype=np.float64).reshape(n, -1)
        if Y.shape[1] != model.output_dim:
            raise DimensionError(
                f"binary targets have {Y.shape[1]} labels, model expects {model.output_dim}"
            )
        if not np.all((Y == 0.0) | (Y == 1.0)):
            raise DataError("binary targets must be 0/1")
        return Y
    Y = np.asarray(targets, dtype=np.int64).reshape(-1)
    if Y.shape[0] != n:
        raise DimensionError("one class index required per sample")
    if np.any(Y < 0) or np.any(Y >= model.output_dim):
        raise DataError(f"class index outside [0, {model.output_dim})")
    return Y


def loss_and_grads(model, X, Y, w=None):
    """Mean loss with gradients w.r.t. the flat parameters and the inputs.

    Binary cross-entropy averages over samples and output units; categorical
    cross-entropy averages over samples. Both are evaluated from logits in
    numerically stable form.
    """
    logits, cache, layers = _forward(model, X, w)
    n = X.shape[0]
    if model.loss_kind == "binary_ce":
        # elementwise: max(z,0) - z*y + log(1 + exp(-|z|))
        losses = np.maximum(logits, 0.0) - logits * Y + np.log1p(np.exp(-np.abs(logits)))
        loss = float(losses.sum() / (n * model.output_dim))
        dlogits = (_sigmoid(logits) - Y) / (n * model.output_dim)
    else:
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        loss = float((logsumexp - logits[np.arange(n), Y]).sum() / n)
        dlogits = _softmax(logits)
        dlogits[np.arange(n), Y] -= 1.0
        dlogits /= n

    if model.arch == "linear":
        dW = dlogits.T @ cache["X"]
        db = dlogits.sum(axis=0)
        dX = dlogits @ layers["W"]
        dparams = np.concatenate([dW.reshape(-1), db])
    else:
        hidden = cache["hidden"]
        dW2 = dlogits.T @ hidden
        db2 = dlogits.sum(axis=0)
        dhidden = dlogits @ layers["W2"]
        dpre = dhidden * (1.0 - hidden**2)
        dW1 = dpre.T @ cache["X"]
        db1 = dpre.sum(axis=0)
        dX = dpre @ layers["W1"]
        dparams = np.concatenate([dW1.reshape(-1), db1, dW2.reshape(-1), db2])
    return loss, dparams, dX


def output_probs(model, x):
    """Sigmoid or softmax outputs for one input vector."""
    X = _as_input_matrix(model, [x])
    logits, _, _ = _forward(model, X)
    if model.loss_kind == "binary_ce":
        return _sigmoid(logits)[0]
    return _softmax(logits)[0]


def class_logit_input_gradient(model, x, class_index):
    """Exact gradient of one output logit w.r.t. the input vector."""
    X = _as_input_matrix(model, [x])
    layers = _unpack(model, model.weight_array())
    if not (0 <= class_index < model.output_dim):
        raise ConfigError(f"class index {class_index} outside [0, {model.output_dim})")
    if model.arch == "linear":
        return layers["W"][class_index].copy()
    hidden = np.tanh(X[0] @ layers["W1"].T + layers["b1"])
    return (layers["W2"][class_index] * (1.0 - hidden**2)) @ layers["W1"]


def train(model, data, lr, epochs, seed=0):
    """Full-batch Adam training; returns a new model.

    ``data`` is a sequence of (input, target) pairs where an input is a
    GrayImage or a flat vector. ``epochs=0`` is a no-op and returns the
    initial model unchanged. The run is deterministic: full-batch updates
    need no sampling, so the seed only labels the run.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    if not data:
        raise ConfigError("empty training set")
    X = _as_input_matrix(model, [x for x, _ in data])
    Y = _as_targets(model, [y for _, y in data])

    w = model.weight_array()
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    for t in range(1, epochs + 1):
        loss, grad, _ = loss_and_grads(model, X, Y, w)
        if not np.isfinite(loss):
            raise DivergenceError(epoch=t)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad**2
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        w = w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return replace(model, weights=tuple(float(x) for x in w))


def mean_loss(model, data):
    """Mean training loss of a model on (input, target) pairs."""
    X = _as_input_matrix(model, [x for x, _ in data])
    Y = _as_targets(model, [y for _, y in data])
    loss, _, _ = loss_and_grads(model, X, Y)
    return loss


def predict_s(model, img):
    """14 sigmoid symptom probabilities for one image."""
    if model.loss_kind != "binary_ce" or model.output_dim != NUM_SYMPTOMS:
        raise ConfigError("not a symptom stub: needs binary_ce with 14 outputs")
    if model.input_dim != img.size:
        raise DimensionError(f"image has {img.size} pixels, model expects {model.input_dim}")
    probs = output_probs(model, img.to_array())
    return SymptomVector(probs=tuple(float(p) for p in probs))


def r_input(img, symptoms):
    """Morphology-stub input: image pixels then the 14 symptom probs."""
    return np.concatenate([img.to_array(), np.asarray(symptoms.probs, dtype=np.float64)])


def predict_r(model, img, symptoms):
    """5-class softmax morphology distribution for one image."""
    if model.loss_kind != "categorical_ce" or model.output_dim != NUM_MORPH_CLASSES:
        raise ConfigError("not a morphology stub: needs categorical_ce with 5 outputs")
    if model.input_dim != img.size + NUM_SYMPTOMS:
        raise DimensionError(
            f"input has {img.size + NUM_SYMPTOMS} values, model expects {model.input_dim}"
        )
    probs = output_probs(model, r_input(img, symptoms))
    return MorphProbs(probs=tuple(float(p) for p in probs))


@dataclass(frozen=True)
class SaliencyMap:
    """Absolute input-gradient of the winning class logit, max-normalized."""

    width: int
    height: int
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.width * self.height:
            raise DataError("saliency grid size mismatch")
        if any(v < 0.0 or v > 1.0 for v in self.values):
            raise DataError("saliency values must lie in [0, 1]")


@dataclass(frozen=True)
class SegmentationMask:
    """Binary per-pixel mask."""

    width: int
    height: int
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.width * self.height:
            raise DataError("mask grid size mismatch")
        if any(v not in (0, 1) for v in self.values):
            raise DataError("mask values must be 0 or 1")


def saliency(model, img, symptoms=None):
    """Input-gradient saliency over the image pixels.

    The explained class is the argmax of the model's output distribution;
    values are |d logit / d pixel| scaled so the maximum is 1. An all-zero
    gradient yields an all-zero map.
    """
    if symptoms is not None:
        x = r_input(img, symptoms)
    else:
        x = img.to_array()
    if x.shape[0] != model.input_dim:
        raise DimensionError(f"input has {x.shape[0]} values, model expects {model.input_dim}")
    probs = output_probs(model, x)
    class_index = int(np.argmax(probs))
    grad = class_logit_input_gradient(model, x, class_index)
    pixel_grad = np.abs(grad[: img.size])
    peak = pixel_grad.max()
    if peak > 0.0:
        pixel_grad = pixel_grad / peak
    return SaliencyMap(
        width=img.width, height=img.height, values=tuple(float(g) for g in pixel_grad)
    )


def segment(img, tau):
    """Threshold mask: 1 where pixel >= tau. tau must lie in [0, 1]."""
    if not (0.0 <= tau <= 1.0):
        raise DataError(f"threshold {tau} outside [0, 1]")
    values = tuple(1 if p >= tau else 0 for p in img.pixels)
    return SegmentationMask(width=img.width, height=img.height, values=values)


# ---------------------------------------------------------------------------
# Synthetic cases. Each cohort plants a bright block on a dim noisy
# background so every stub target is linearly separable:
#
#   top-left block      -> air-space opacification present
#   top-right block     -> ground glass opacity present
#   bottom-left block   -> tuberculosis pattern
#   bottom-right block  -> pneumonia pattern
#
# Covid cases cycle through ASO / GGO / both; healthy cases plant nothing.
# ---------------------------------------------------------------------------

DEFAULT_IMAGE_SIZE = 16

_BACKGROUND_RANGE = (0.05, 0.30)
_PATTERN_RANGE = (0.75, 0.95)

# Per-cohort symptom labels used as the symptom-stub training target.
COHORT_SYMPTOMS = {
    COHORT_COVID: ("Infiltration", "Edema"),
    COHORT_PNEUMONIA: ("Pneumonia", "Consolidation"),
    COHORT_TB: ("Fibrosis", "Nodule"),
    COHORT_HEALTHY: (),
}

_COVID_MORPH_CYCLE = (MorphClass.ASO, MorphClass.GGO, MorphClass.ASO_GGO)


@dataclass(frozen=True)
class SynthSpec:
    """Cohort counts plus seed for deterministic case synthesis."""

    counts: dict
    seed: int
    width: int = DEFAULT_IMAGE_SIZE
    height: int = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        for cohort, n in self.counts.items():
            if cohort not in COHORTS:
                raise ConfigError(f"unknown cohort {cohort!r}")
            if n < 0:
                raise ConfigError(f"negative count for {cohort}")
        if self.width < 8 or self.height < 8:
            raise ConfigError("images must be at least 8x8 to fit planted blocks")


@dataclass(frozen=True)
class SynthCase:
    """A synthetic case with its stub training targets."""

    case: CaseRecord
    s_labels: tuple  # 14 ints in SYMPTOM_NAMES order
    morph_class: MorphClass


def _block(width, height, corner):
    """Index array of a quarter-field block. corner in {tl, tr, bl, br}."""
    bw, bh = max(3, width // 3 - 1), max(3, height // 3 - 1)
    margin_x, margin_y = 2, 2
    if corner == "tl":
        rows, cols = range(margin_y, margin_y + bh), range(margin_x, margin_x + bw)
    elif corner == "tr":
        rows, cols = range(margin_y, margin_y + bh), range(width - margin_x - bw, width - margin_x)
    elif corner == "bl":
        rows, cols = range(height - margin_y - bh, height - margin_y), range(margin_x, margin_x + bw)
    else:
        rows, cols = (
            range(height - margin_y - bh, height - margin_y),
            range(width - margin_x - bw, width - margin_x),
        )
    return [r * width + c for r in rows for c in cols]


def _cohort_patterns(cohort, morph_class, width, height):
    if cohort == COHORT_TB:
        return [_block(width, height, "bl")]
    if cohort == COHORT_PNEUMONIA:
        return [_block(width, height, "br")]
    if cohort == COHORT_COVID:
        blocks = []
        if morph_class in (MorphClass.ASO, MorphClass.ASO_GGO):
            blocks.append(_block(width, height, "tl"))
        if morph_class in (MorphClass.GGO, MorphClass.ASO_GGO):
            blocks.append(_block(width, height, "tr"))
        return blocks
    return []


def synth_dataset(spec):
    """Deterministic synthetic cases with planted, learnable class signal.

    Case ids are neutral (no cohort hint) so prepared bundles can be shown
    to a reviewer without leaking the ground truth; the cohort stays on the
    server-side record. The case order is a seeded shuffle of the cohorts.
    """
    rng = np.random.default_rng(spec.seed)
    staged = []
    for cohort in COHORTS:
        for i in range(spec.counts.get(cohort, 0)):
            if cohort == COHORT_COVID:
                morph_class = _COVID_MORPH_CYCLE[i % len(_COVID_MORPH_CYCLE)]
            elif cohort == COHORT_HEALTHY:
                morph_class = MorphClass.NO_ASO_GGO
            else:
                morph_class = MorphClass.MISSING_ASO_GGO
            staged.append((cohort, morph_class))
    rng.shuffle(staged)

    cases = []
    for index, (cohort, morph_class) in enumerate(staged):
        pixels = rng.uniform(*_BACKGROUND_RANGE, size=spec.width * spec.height)
        for block in _cohort_patterns(cohort, morph_class, spec.width, spec.height):
            pixels[block] = rng.uniform(*_PATTERN_RANGE, size=len(block))
        image = GrayImage.from_array(pixels, width=spec.width, height=spec.height)
        labels = [0] * NUM_SYMPTOMS
        for name in COHORT_SYMPTOMS[cohort]:
            labels[SYMPTOM_INDEX[name]] = 1
        case = CaseRecord(
            case_id=f"case-{spec.seed}-{index:03d}",
            image=image,
            truth=COV_POS if cohort == COHORT_COVID else COV_NEG,
            cohort=cohort,
        )
        cases.append(SynthCase(case=case, s_labels=tuple(labels), morph_class=morph_class))
    return cases


SYNTH_MANIFEST = "cases.csv"


def write_synth_dir(directory, cases):
    """Persist synthetic cases: one PGM per case plus a manifest CSV."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, SYNTH_MANIFEST), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["case_id", "cohort", "truth", "morph_class", *SYMPTOM_NAMES])
        for sc in cases:
            case = sc.case
            writer.writerow(
                [case.case_id, case.cohort, case.truth, sc.morph_class.value, *sc.s_labels]
            )
            img = case.image
            write_pgm(os.path.join(directory, f"{case.case_id}.pgm"), img.width, img.height, img.pixels)


def read_synth_dir(directory):
    """Load cases written by write_synth_dir, in manifest order."""
    manifest = os.path.join(directory, SYNTH_MANIFEST)
    if not os.path.exists(manifest):
        raise DataError(f"no {SYNTH_MANIFEST} in {directory}")
    cases = []
    with open(manifest, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            labels = tuple(int(row[name]) for name in SYMPTOM_NAMES)
            image = read_pgm(os.path.join(directory, f"{row['case_id']}.pgm"))
            cases.append(
                SynthCase(
                    case=CaseRecord(
                        case_id=row["case_id"],
                        image=image,
                        truth=row["truth"],
                        cohort=row["cohort"],
                    ),
                    s_labels=labels,
                    morph_class=MorphClass(row["morph_class"]),
                )
            )
    return cases


def save_model(path, model):
    """JSON checkpoint; weights serialized with 17 significant digits."""
    payload = {
        "arch": model.arch,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "output_dim": model.output_dim,
        "loss_kind": model.loss_kind,
        "weights": [f"{w:.17g}" for w in model.weights],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    try:
        return ToyModel(
            arch=payload["arch"],
            weights=tuple(float(w) for w in payload["weights"]),
            input_dim=int(payload["input_dim"]),
            hidden_dim=int(payload["hidden_dim"]),
            output_dim=int(payload["output_dim"]),
            loss_kind=payload["loss_kind"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model checkpoint {path}: {exc}") from exc
