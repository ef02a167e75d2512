"""End-to-end run: synthesize cases, train stubs, fit the tree, evaluate.

The run mirrors the staged method the package implements: train the symptom
stub, train a 3x3 learning-rate/epoch grid of morphology stubs and keep the
one with the best validation accuracy, derive 17-feature vectors, fit the
decision tree, then score both the tree and a direct image->diagnosis stub
on the same held-out split. Everything is seeded, full-batch, and written
with fixed float formats, so a config run twice produces byte-identical
tree and metrics files.

Outputs are staged into ``<out>.partial`` and swapped in on success, so a
failed run leaves no half-written run directory behind.
"""

import hashlib
import json
import os
import shutil
from dataclasses import dataclass
from datetime import datetime, timezone
from itertools import product
from pathlib import Path

import numpy as np

from .data import FeatureVector, load_features
from .errors import ConfigError, StageError
from .evaluation import (
    accuracy,
    confusion,
    confusion_to_json,
)
from .explain import DEFAULT_TAU, bundle, write_bundle
from .labels import (
    COV_NEG,
    COV_POS,
    MORPH_INDEX,
    NUM_MORPH_CLASSES,
    NUM_SYMPTOMS,
)
from .neural import (
    SynthSpec,
    init_model,
    output_probs,
    predict_r,
    predict_s,
    r_input,
    save_model,
    synth_dataset,
    train,
)
from .tree import fit, predict, save_tree

DEFAULT_LR_GRID = (0.3, 0.1, 0.03)
DEFAULT_EPOCHS_GRID = (60, 120, 200)

SOURCE_SYNTH = "synth"
SOURCE_FEATURES = "features"

_FRACTION_TOL = 1e-9


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    source: dict
    out_dir: str = "run"
    train_fraction: float = 0.85
    val_fraction: float = 0.15
    arch: str = "mlp1"
    hidden_dim: int = 8
    s_lr: float = 0.1
    s_epochs: int = 150
    e2e_lr: float = 0.1
    e2e_epochs: int = 150
    lr_grid: tuple = DEFAULT_LR_GRID
    epochs_grid: tuple = DEFAULT_EPOCHS_GRID
    max_depth: int = 6
    max_leaves: int = 8
    tau: float = DEFAULT_TAU
    bundle_count: int = 0  # 0 = bundle every evaluation case

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0 and 0.0 < self.val_fraction < 1.0):
            raise ConfigError("split fractions must lie in (0, 1)")
        if abs(self.train_fraction + self.val_fraction - 1.0) > _FRACTION_TOL:
            raise ConfigError("split fractions must sum to 1")
        if not self.lr_grid or not self.epochs_grid:
            raise ConfigError("learning-rate and epoch grids must be nonempty")
        if not (0.0 <= self.tau <= 1.0):
            raise ConfigError(f"tau {self.tau} outside [0, 1]")
        kind = self.source.get("kind")
        if kind not in (SOURCE_SYNTH, SOURCE_FEATURES):
            raise ConfigError(f"source kind must be {SOURCE_SYNTH!r} or {SOURCE_FEATURES!r}")
        if kind == SOURCE_FEATURES and "path" not in self.source:
            raise ConfigError("features source needs a path")
        if kind == SOURCE_SYNTH and "counts" not in self.source:
            raise ConfigError("synth source needs cohort counts")

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "seed" not in known or "source" not in known:
            raise ConfigError("config requires seed and source")
        for grid_key in ("lr_grid", "epochs_grid"):
            if grid_key in known:
                known[grid_key] = tuple(known[grid_key])
        return cls(**known)

    def to_json(self):
        return {
            "seed": self.seed,
            "source": self.source,
            "out_dir": self.out_dir,
            "train_fraction": self.train_fraction,
            "val_fraction": self.val_fraction,
            "arch": self.arch,
            "hidden_dim": self.hidden_dim,
            "s_lr": self.s_lr,
            "s_epochs": self.s_epochs,
            "e2e_lr": self.e2e_lr,
            "e2e_epochs": self.e2e_epochs,
            "lr_grid": list(self.lr_grid),
            "epochs_grid": list(self.epochs_grid),
            "max_depth": self.max_depth,
            "max_leaves": self.max_leaves,
            "tau": self.tau,
            "bundle_count": self.bundle_count,
        }

    def content_hash(self):
        text = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    seed: int
    model_checksums: dict
    r_grid: tuple
    tree_path: str
    metrics_path: str
    metrics: dict
    counts: dict
    created_at: str


def _file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        digest.update(f.read())
    return digest.hexdigest()


def e2e_prob(model, img):
    """P(COV+) from the direct image->diagnosis stub."""
    return float(output_probs(model, img.to_array())[0])


def e2e_label(model, img):
    return COV_POS if e2e_prob(model, img) >= 0.5 else COV_NEG


def derive_features(s_model, r_model, case):
    symptoms = predict_s(s_model, case.image)
    morph = predict_r(r_model, case.image, symptoms)
    return FeatureVector(symptoms=symptoms, morph=morph)


def evaluate_split(tree, s_model, r_model, e2e_model, test_cases):
    """Confusion matrices for the tree path and the direct stub.

    Both matrices cover the same ordered case list; the caller guarantees
    the cases were held out of all training.
    """
    if not test_cases:
        raise ConfigError("empty evaluation set")
    tree_pairs = []
    e2e_pairs = []
    for case in test_cases:
        fv = derive_features(s_model, r_model, case)
        tree_pairs.append((case.truth, predict(tree, fv)))
        e2e_pairs.append((case.truth, e2e_label(e2e_model, case.image)))
    return confusion(tree_pairs), confusion(e2e_pairs)


def _split_cases(items, cfg):
    rng = np.random.default_rng((cfg.seed, 1))
    perm = rng.permutation(len(items))
    n_val = max(1, int(round(len(items) * cfg.val_fraction)))
    if n_val >= len(items):
        raise ConfigError(f"dataset of {len(items)} too small for the split")
    val = [items[i] for i in perm[:n_val]]
    train_part = [items[i] for i in perm[n_val:]]
    return train_part, val


def _metrics_csv_text(rows):
    lines = ["model,tp,fn,fp,tn,n,accuracy,sd"]
    for name, cm, est in rows:
        lines.append(
            f"{name},{cm.tp},{cm.fn},{cm.fp},{cm.tn},{est.n},{repr(est.p)},{repr(est.sd)}"
        )
    return "\n".join(lines) + "\n"


def _stage(name, fn):
    """Run one pipeline stage, tagging any failure with the stage name."""
    try:
        return fn()
    except Exception as exc:
        raise StageError(stage=name, cause=exc) from exc


def _run_synth(cfg, out):
    src = cfg.source
    spec = SynthSpec(
        counts=dict(src["counts"]),
        seed=cfg.seed,
        width=int(src.get("width", 16)),
        height=int(src.get("height", 16)),
    )

    stage = _stage
    cases = stage("load-data", lambda: synth_dataset(spec))
    train_cases, val_cases = stage("load-data", lambda: _split_cases(cases, cfg))
    train_ids = {sc.case.case_id for sc in train_cases}
    val_ids = {sc.case.case_id for sc in val_cases}
    if train_ids & val_ids:
        raise StageError(stage="load-data", cause=AssertionError("split overlap"))

    def train_s():
        data = [(sc.case.image, sc.s_labels) for sc in train_cases]
        model = init_model(
            cfg.arch,
            input_dim=spec.width * spec.height,
            output_dim=NUM_SYMPTOMS,
            loss_kind="binary_ce",
            hidden_dim=cfg.hidden_dim,
            seed=(cfg.seed, 10),
        )
        return train(model, data, lr=cfg.s_lr, epochs=cfg.s_epochs)

    s_model = stage("train-s", train_s)

    def train_r_grid():
        train_inputs = [
            (r_input(sc.case.image, predict_s(s_model, sc.case.image)), MORPH_INDEX[sc.morph_class])
            for sc in train_cases
        ]
        val_triples = [
            (sc.case.image, predict_s(s_model, sc.case.image), sc.morph_class)
            for sc in val_cases
        ]
        grid_log = []
        best = None
        for index, (lr, epochs) in enumerate(product(cfg.lr_grid, cfg.epochs_grid)):
            model = init_model(
                cfg.arch,
                input_dim=spec.width * spec.height + NUM_SYMPTOMS,
                output_dim=NUM_MORPH_CLASSES,
                loss_kind="categorical_ce",
                hidden_dim=cfg.hidden_dim,
                seed=(cfg.seed, 20, index),
            )
            fitted = train(model, train_inputs, lr=lr, epochs=epochs)
            hits = sum(
                1
                for img, symptoms, target in val_triples
                if predict_r(fitted, img, symptoms).argmax_class() == target
            )
            val_acc = hits / len(val_triples)
            grid_log.append({"lr": lr, "epochs": epochs, "val_accuracy": val_acc})
            if best is None or val_acc > best[0]:
                best = (val_acc, fitted)
        return best[1], tuple(grid_log)

    r_model, grid_log = stage("train-r", train_r_grid)

    def train_e2e():
        data = [
            (sc.case.image, [1.0 if sc.case.truth == COV_POS else 0.0]) for sc in train_cases
        ]
        model = init_model(
            cfg.arch,
            input_dim=spec.width * spec.height,
            output_dim=1,
            loss_kind="binary_ce",
            hidden_dim=cfg.hidden_dim,
            seed=(cfg.seed, 30),
        )
        return train(model, data, lr=cfg.e2e_lr, epochs=cfg.e2e_epochs)

    e2e_model = stage("train-e2e", train_e2e)

    def fit_tree():
        pairs = [
            (derive_features(s_model, r_model, sc.case), sc.case.truth) for sc in train_cases
        ]
        return fit(pairs, max_depth=cfg.max_depth, max_leaves=cfg.max_leaves, seed=cfg.seed)

    tree = stage("fit-tree", fit_tree)

    cm_tree, cm_e2e = stage(
        "evaluate",
        lambda: evaluate_split(tree, s_model, r_model, e2e_model, [sc.case for sc in val_cases]),
    )

    def emit():
        models_dir = out / "models"
        models_dir.mkdir(parents=True)
        save_model(models_dir / "s.json", s_model)
        save_model(models_dir / "r.json", r_model)
        save_model(models_dir / "e2e.json", e2e_model)
        save_tree(out / "tree.json", tree)
        est_tree, est_e2e = accuracy(cm_tree), accuracy(cm_e2e)
        with open(out / "metrics.csv", "w", encoding="utf-8") as f:
            f.write(_metrics_csv_text([("tree", cm_tree, est_tree), ("e2e", cm_e2e, est_e2e)]))
        limit = cfg.bundle_count if cfg.bundle_count > 0 else len(val_cases)
        for sc in val_cases[:limit]:
            b = bundle(sc.case, (s_model, r_model), tree, tau=cfg.tau)
            write_bundle(out / "bundles" / sc.case.case_id, sc.case, b)
        return {
            "models": {
                "s": _file_sha256(models_dir / "s.json"),
                "r": _file_sha256(models_dir / "r.json"),
                "e2e": _file_sha256(models_dir / "e2e.json"),
            },
            "metrics": {
                "tree": {
                    "cm": confusion_to_json(cm_tree),
                    "p": est_tree.p,
                    "sd": est_tree.sd,
                    "n": est_tree.n,
                },
                "e2e": {
                    "cm": confusion_to_json(cm_e2e),
                    "p": est_e2e.p,
                    "sd": est_e2e.sd,
                    "n": est_e2e.n,
                },
            },
        }

    emitted = stage("emit", emit)
    counts = {"train": len(train_cases), "val": len(val_cases)}
    return emitted, grid_log, counts


def _run_features(cfg, out):
    stage = _stage
    records = stage("load-data", lambda: load_features(cfg.source["path"]))
    train_rows, val_rows = stage("load-data", lambda: _split_cases(records, cfg))

    tree = stage(
        "fit-tree",
        lambda: fit(
            [(r.features, r.truth) for r in train_rows],
            max_depth=cfg.max_depth,
            max_leaves=cfg.max_leaves,
            seed=cfg.seed,
        ),
    )

    def evaluate():
        pairs = [(r.truth, predict(tree, r.features)) for r in val_rows]
        return confusion(pairs)

    cm_tree = stage("evaluate", evaluate)

    def emit():
        save_tree(out / "tree.json", tree)
        est = accuracy(cm_tree)
        with open(out / "metrics.csv", "w", encoding="utf-8") as f:
            f.write(_metrics_csv_text([("tree", cm_tree, est)]))
        return {
            "models": {},
            "metrics": {
                "tree": {"cm": confusion_to_json(cm_tree), "p": est.p, "sd": est.sd, "n": est.n},
                "e2e": None,
            },
        }

    emitted = stage("emit", emit)
    counts = {"train": len(train_rows), "val": len(val_rows)}
    return emitted, (), counts


def run_pipeline(cfg, out_dir=None):
    """Execute a full run into ``out_dir`` (default: cfg.out_dir).

    A feature-CSV source carries no images, so that mode fits and scores
    the tree only: no stubs, no bundles, and a single metrics row.
    """
    target = Path(out_dir if out_dir is not None else cfg.out_dir)
    partial = Path(str(target) + ".partial")
    if partial.exists():
        shutil.rmtree(partial)
    partial.mkdir(parents=True)
    try:
        if cfg.source["kind"] == SOURCE_SYNTH:
            emitted, grid_log, counts = _run_synth(cfg, partial)
        else:
            emitted, grid_log, counts = _run_features(cfg, partial)
        manifest = RunManifest(
            config_hash=cfg.content_hash(),
            seed=cfg.seed,
            model_checksums=emitted["models"],
            r_grid=grid_log,
            tree_path="tree.json",
            metrics_path="metrics.csv",
            metrics=emitted["metrics"],
            counts=counts,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        with open(partial / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(
                {
                    "config_hash": manifest.config_hash,
                    "seed": manifest.seed,
                    "model_checksums": manifest.model_checksums,
                    "r_grid": list(manifest.r_grid),
                    "tree_path": manifest.tree_path,
                    "metrics_path": manifest.metrics_path,
                    "metrics": manifest.metrics,
                    "counts": manifest.counts,
                    "created_at": manifest.created_at,
                },
                f,
                indent=2,
                sort_keys=True,
            )
            f.write("\n")
    except Exception:
        shutil.rmtree(partial, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    os.rename(partial, target)
    return manifest
