"""Command-line driver for every pipeline stage.

Exit codes: 0 on success, 1 for input/validation problems (bad files, bad
flags, constraint violations), 2 for runtime failures (diverged training,
aborted pipeline stages). File outputs are written to a temporary sibling
and renamed into place. Seeds resolve from --seed, then the DX_SEED
environment variable, then 0.
"""

import argparse
import json
import os
import shutil
import sys

from .data import (
    FeatureRecord,
    annotation_to_class,
    load_features,
    parse_covidr,
    write_features,
)
from .errors import ConfigError, DiagnosisError, ValidationError
from .evaluation import (
    accuracy,
    confusion_from_json,
    format_estimate,
    load_feedback_records,
    render_report_text,
    report_payload,
    significant_difference,
    write_report,
)
from .explain import DEFAULT_TAU, bundle, write_bundle
from .labels import COV_POS, MORPH_INDEX, NUM_MORPH_CLASSES, NUM_SYMPTOMS
from .neural import (
    SynthSpec,
    init_model,
    load_model,
    predict_s,
    r_input,
    read_synth_dir,
    save_model,
    synth_dataset,
    train,
    write_synth_dir,
)
from .pipeline import PipelineConfig, derive_features, run_pipeline
from .tree import fit, load_tree, save_tree, sweep, write_sweep_csv


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _resolve_seed(value):
    if value is not None:
        return value
    env = os.environ.get("DX_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"DX_SEED={env!r} is not an integer") from exc
    return 0


def _atomic_file(path, write_fn):
    tmp = f"{path}.tmp"
    write_fn(tmp)
    os.replace(tmp, path)


def _atomic_dir(path, build_fn):
    partial = f"{path}.partial"
    if os.path.exists(partial):
        shutil.rmtree(partial)
    build_fn(partial)
    if os.path.exists(path):
        shutil.rmtree(path)
    os.rename(partial, path)


def _load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def cmd_parse_covidr(args):
    annotations = parse_covidr(getattr(args, "in"))

    def write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="") as f:
            f.write("image_id,cohort,morph_class\n")
            for a in annotations:
                f.write(f"{a.image_id},{a.cohort},{annotation_to_class(a).value}\n")

    _atomic_file(args.out, write)
    print(f"mapped {len(annotations)} annotations -> {args.out}")
    return 0


def cmd_synth(args):
    spec_obj = _load_json(args.spec)
    try:
        spec = SynthSpec(
            counts=dict(spec_obj["counts"]),
            seed=int(spec_obj.get("seed", _resolve_seed(args.seed))),
            width=int(spec_obj.get("width", 16)),
            height=int(spec_obj.get("height", 16)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth spec {args.spec}: {exc}") from exc
    cases = synth_dataset(spec)
    _atomic_dir(args.out, lambda tmp: write_synth_dir(tmp, cases))
    print(f"wrote {len(cases)} cases -> {args.out}")
    return 0


def cmd_train_stub(args):
    seed = _resolve_seed(args.seed)
    cases = read_synth_dir(args.data)
    if not cases:
        raise ConfigError(f"no cases found in {args.data}")
    img = cases[0].case.image
    pixels = img.size

    if args.kind == "s":
        data = [(sc.case.image, sc.s_labels) for sc in cases]
        model = init_model(
            args.arch, pixels, NUM_SYMPTOMS, "binary_ce", hidden_dim=args.hidden, seed=seed
        )
    elif args.kind == "r":
        if not args.s:
            raise ConfigError("train-stub --kind r needs --s SYMPTOM_MODEL")
        s_model = load_model(args.s)
        data = [
            (r_input(sc.case.image, predict_s(s_model, sc.case.image)), MORPH_INDEX[sc.morph_class])
            for sc in cases
        ]
        model = init_model(
            args.arch,
            pixels + NUM_SYMPTOMS,
            NUM_MORPH_CLASSES,
            "categorical_ce",
            hidden_dim=args.hidden,
            seed=seed,
        )
    else:
        data = [(sc.case.image, [1.0 if sc.case.truth == COV_POS else 0.0]) for sc in cases]
        model = init_model(
            args.arch, pixels, 1, "binary_ce", hidden_dim=args.hidden, seed=seed
        )

    fitted = train(model, data, lr=args.lr, epochs=args.epochs, seed=seed)
    _atomic_file(args.out, lambda tmp: save_model(tmp, fitted))
    print(f"trained {args.kind}-stub on {len(data)} cases -> {args.out}")
    return 0


def cmd_features(args):
    s_model = load_model(args.s)
    r_model = load_model(args.r)
    cases = read_synth_dir(args.cases)
    records = [
        FeatureRecord(
            case_id=sc.case.case_id,
            features=derive_features(s_model, r_model, sc.case),
            truth=sc.case.truth,
        )
        for sc in cases
    ]
    _atomic_file(args.out, lambda tmp: write_features(tmp, records))
    print(f"derived features for {len(records)} cases -> {args.out}")
    return 0


def _load_feature_pairs(path):
    return [(r.features, r.truth) for r in load_features(path)]


def cmd_fit_tree(args):
    pairs = _load_feature_pairs(args.data)
    tree = fit(pairs, max_depth=args.max_depth, max_leaves=args.max_leaves, seed=_resolve_seed(args.seed))
    _atomic_file(args.out, lambda tmp: save_tree(tmp, tree))
    print(f"fit tree on {len(pairs)} rows -> {args.out}")
    return 0


def cmd_sweep(args):
    pairs = _load_feature_pairs(args.data)
    param = {"leaves": "max_leaves", "depth": "max_depth"}.get(args.param)
    if param is None:
        raise ConfigError(f"unknown sweep param {args.param!r}")
    try:
        values = [int(v) for v in args.values.split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"bad --values {args.values!r}") from exc
    results = sweep(pairs, param, values, eval_split=args.eval_split, seed=_resolve_seed(args.seed))
    _atomic_file(args.out, lambda tmp: write_sweep_csv(tmp, param, results))
    for value, acc in results:
        print(f"{param}={value}: accuracy {acc:.4f}")
    return 0


def cmd_explain(args):
    tree = load_tree(args.tree)
    s_model = load_model(args.s)
    r_model = load_model(args.r)
    cases = {sc.case.case_id: sc.case for sc in read_synth_dir(args.cases)}
    if args.case not in cases:
        raise ConfigError(f"case {args.case!r} not found in {args.cases}")
    case = cases[args.case]
    b = bundle(case, (s_model, r_model), tree, tau=args.tau)
    target = os.path.join(args.out, args.case)
    _atomic_dir(target, lambda tmp: write_bundle(tmp, case, b))
    print(f"explained {args.case} ({b.prediction}) -> {target}")
    return 0


def cmd_eval(args):
    est_a = accuracy(confusion_from_json(_load_json(args.pred_a)))
    est_b = accuracy(confusion_from_json(_load_json(args.pred_b)))
    significant = significant_difference(est_a, est_b)
    if args.json:
        print(
            json.dumps(
                {
                    "a": {"p": est_a.p, "sd": est_a.sd, "n": est_a.n},
                    "b": {"p": est_b.p, "sd": est_b.sd, "n": est_b.n},
                    "significant": significant,
                },
                sort_keys=True,
            )
        )
    else:
        print(f"a: {format_estimate(est_a)}")
        print(f"b: {format_estimate(est_b)}")
        print(f"difference: {'significant' if significant else 'not significant'}")
    return 0


def cmd_report(args):
    records = load_feedback_records(args.log)
    if args.json:
        print(json.dumps(report_payload(records), sort_keys=True))
    elif not args.out:
        print(render_report_text(records), end="")
    if args.out:
        _atomic_dir(args.out, lambda tmp: write_report(tmp, records))
        if not args.json:
            print(f"report over {len(records)} completed reviews -> {args.out}")
    return 0


def cmd_serve(args):
    from .service import serve

    serve(args.bundles, args.log, args.port)
    return 0


def cmd_run(args):
    cfg = PipelineConfig.from_json(_load_json(args.config))
    manifest = run_pipeline(cfg, out_dir=args.out)
    out = args.out if args.out is not None else cfg.out_dir
    tree_metrics = manifest.metrics["tree"]
    print(f"run complete -> {out}")
    print(f"tree accuracy: {tree_metrics['p']:.3f} ± {tree_metrics['sd']:.3f}")
    if manifest.metrics.get("e2e"):
        e2e = manifest.metrics["e2e"]
        print(f"e2e accuracy: {e2e['p']:.3f} ± {e2e['sd']:.3f}")
    return 0


def build_parser():
    parser = _Parser(prog="nsdiag", description="neural-symbolic diagnosis pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse-covidr", help="map annotation CSV to morphology classes")
    p.add_argument("--in", required=True, help="annotation CSV")
    p.add_argument("--out", required=True, help="output CSV (image_id,cohort,morph_class)")
    p.set_defaults(handler=cmd_parse_covidr)

    p = sub.add_parser("synth", help="generate a synthetic case directory")
    p.add_argument("--spec", required=True, help="JSON spec with cohort counts")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train-stub", help="train one toy model")
    p.add_argument("--kind", required=True, choices=("s", "r", "e2e"))
    p.add_argument("--data", required=True, help="synth case directory")
    p.add_argument("--lr", type=float, required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--arch", default="mlp1", choices=("linear", "mlp1"))
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--s", help="symptom model (required for --kind r)")
    p.set_defaults(handler=cmd_train_stub)

    p = sub.add_parser("features", help="derive the 17-feature CSV from stubs")
    p.add_argument("--s", required=True)
    p.add_argument("--r", required=True)
    p.add_argument("--cases", required=True, help="synth case directory")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_features)

    p = sub.add_parser("fit-tree", help="fit the decision tree")
    p.add_argument("--data", required=True, help="feature CSV")
    p.add_argument("--max-depth", type=int, required=True)
    p.add_argument("--max-leaves", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_fit_tree)

    p = sub.add_parser("sweep", help="accuracy curve over a tree constraint")
    p.add_argument("--data", required=True)
    p.add_argument("--param", required=True, choices=("leaves", "depth"))
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--eval-split", type=float, default=0.25)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("explain", help="write one case's explanation bundle")
    p.add_argument("--tree", required=True)
    p.add_argument("--s", required=True)
    p.add_argument("--r", required=True)
    p.add_argument("--cases", required=True, help="synth case directory")
    p.add_argument("--case", required=True, help="case id")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--out", required=True, help="bundles directory")
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser("eval", help="compare two confusion matrices")
    p.add_argument("--pred-a", required=True, help="confusion matrix JSON")
    p.add_argument("--pred-b", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("report", help="analytics over a feedback log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", help="report directory")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("serve", help="run the review service")
    p.add_argument("--bundles", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="run directory (defaults to config out_dir)")
    p.set_defaults(handler=cmd_run)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DiagnosisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
