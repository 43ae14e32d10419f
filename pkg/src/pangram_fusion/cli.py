"""Command-line entry point orchestrating the pipeline end to end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All artifacts are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import synth as synth_mod
from .acoustic import (
    ACOUSTIC_COLUMNS,
    AudioError,
    acoustic_vector_array,
    assemble_acoustic_vector,
    load_wav,
)
from .dataset import (
    FeatureMatrix,
    ManifestError,
    Split,
    deduplicate,
    kfold_participants,
    load_feature_csv,
    load_manifest,
    samples_in,
    save_feature_csv,
    save_manifest,
    split_participants,
)
from .error_analysis import build_error_tree, heatmap_matrix, write_heatmap_csv
from .hypertune import default_search_space, run_search, worker_limit
from .io_utils import atomic_path, atomic_write_text
from .metrics import write_roc_csv
from .pipeline import (
    ARCHITECTURES,
    checkpoint_document,
    evaluate_prepared,
    prepare,
    prepared_from_checkpoint,
    train_prepared,
)
from .stats import subgroup_bias_report, write_bias_csv
from .trainer import (
    TrainConfig,
    TrainingDiverged,
    checkpoint_from_json,
    predict,
    reference_best_config,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

HEATMAP_PAIRS = [
    ("sex", "ethnicity"),
    ("sex", "age"),
    ("age", "ethnicity"),
    ("sex", "label"),
    ("age", "label"),
    ("ethnicity", "label"),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class DataError(Exception):
    pass


def _parse_feature_args(pairs):
    out = []
    for pair in pairs or []:
        if "=" not in pair:
            raise DataError(f"--features expects name=path, got {pair!r}")
        name, path = pair.split("=", 1)
        out.append((name, path))
    return out


def _load_features(pairs):
    features = {}
    order = []
    for name, path in pairs:
        if not os.path.exists(path):
            raise DataError(f"feature file not found: {path}")
        features[name] = load_feature_csv(path, name)
        order.append(name)
    return features, order


def _load_records(path, dedup=True):
    if not path:
        raise DataError("--manifest is required")
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    records = load_manifest(path)
    return deduplicate(records) if dedup else records


def _load_config(args) -> TrainConfig:
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise DataError(f"config file not found: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            config = TrainConfig.from_json(fh.read())
    else:
        config = reference_best_config()
    return config


def _outdir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _ratios(args):
    return tuple(float(x) for x in args.ratios.split(","))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = _outdir(args)
    dims = dict(synth_mod.DEFAULT_DIMS)
    if args.sets:
        wanted = args.sets.split(",")
        dims = {name: dims.get(name, 64) for name in wanted}
    for override in args.dim or []:
        name, _, value = override.partition("=")
        dims[name] = int(value)
    spec = synth_mod.SynthSpec(
        n_participants=args.n,
        pd_fraction=args.pd_fraction,
        class_separation=args.delta,
        samples_per_participant=(args.min_samples, args.max_samples),
        dims=dims,
        seed=args.seed,
    )
    records, features = synth_mod.generate(spec)
    with atomic_path(os.path.join(out, "manifest.csv")) as tmp:
        save_manifest(records, tmp)
    for name, fm in features.items():
        with atomic_path(os.path.join(out, f"{name}.csv")) as tmp:
            save_feature_csv(fm, tmp)
    print(f"wrote manifest ({len(records)} samples) and "
          f"{len(features)} feature sets to {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    if not os.path.isdir(args.in_dir):
        raise DataError(f"not a directory: {args.in_dir}")
    wavs = sorted(f for f in os.listdir(args.in_dir) if f.endswith(".wav"))
    if not wavs:
        raise DataError(f"no .wav files in {args.in_dir}")
    rows = {}
    for fname in wavs:
        clip = load_wav(os.path.join(args.in_dir, fname))
        values = assemble_acoustic_vector(clip)
        rows[os.path.splitext(fname)[0]] = acoustic_vector_array(values)
    fm = FeatureMatrix("acoustic", list(ACOUSTIC_COLUMNS), rows)
    with atomic_path(args.out) as tmp:
        save_feature_csv(fm, tmp)
    print(f"extracted acoustic features for {len(rows)} clips -> {args.out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    records = _load_records(args.manifest)
    features, order = _load_features(_parse_feature_args(args.features))
    if not features:
        raise DataError("at least one --features name=path is required")
    config = _load_config(args)
    out = _outdir(args)
    split = split_participants(records, _ratios(args), args.seed)
    from .pipeline import fit_plans

    train_ids = [r.sample_id for r in samples_in(records, split.train)]
    plans = fit_plans(features, train_ids, config)
    for name in order:
        plan = plans[name]
        atomic_write_text(os.path.join(out, f"plan_{name}.json"), plan.to_json())
        transformed = plan.apply(features[name].matrix(list(features[name].rows)))
        fm = FeatureMatrix(
            name,
            [features[name].column_names[j] for j in plan.kept_columns],
            dict(zip(features[name].rows, transformed)),
        )
        with atomic_path(os.path.join(out, f"{name}_transformed.csv")) as tmp:
            save_feature_csv(fm, tmp)
        print(f"{name}: kept {len(plan.kept_columns)}/{features[name].dim} columns")
    return EXIT_OK


def cmd_train(args) -> int:
    records = _load_records(args.manifest)
    features, order = _load_features(_parse_feature_args(args.features))
    if not features:
        raise DataError("at least one --features name=path is required")
    config = _load_config(args)
    out = _outdir(args)
    ratios = _ratios(args)
    split = split_participants(records, ratios, args.seed)
    prepared = prepare(records, features, split, config, args.arch, order)
    params, history = train_prepared(prepared, config,
                                     shared_dim=args.shared_dim)
    atomic_write_text(
        os.path.join(out, "checkpoint.json"),
        checkpoint_document(params, config, prepared, split, ratios, history),
    )
    atomic_write_text(os.path.join(out, "history.csv"), history.to_csv())
    for name, plan in prepared.plans.items():
        atomic_write_text(os.path.join(out, f"plan_{name}.json"), plan.to_json())
    print(f"best epoch {history.best_epoch}: "
          f"validation AUROC {history.best_val_auroc:.4f}")
    return EXIT_OK


def _load_checkpoint_inputs(args):
    if not os.path.exists(args.checkpoint):
        raise DataError(f"checkpoint not found: {args.checkpoint}")
    with open(args.checkpoint, encoding="utf-8") as fh:
        params, _, doc = checkpoint_from_json(fh.read())
    records = _load_records(args.manifest)
    features, _ = _load_features(_parse_feature_args(args.features))
    needed = doc["meta"]["set_order"]
    missing = [n for n in needed if n not in features]
    if missing:
        raise DataError(f"checkpoint needs feature sets {missing}")
    prepared, split_records, _ = prepared_from_checkpoint(doc, records, features)
    return params, doc, prepared, split_records


def cmd_evaluate(args) -> int:
    params, doc, prepared, _ = _load_checkpoint_inputs(args)
    out = _outdir(args)
    report = evaluate_prepared(params, prepared, "test", args.threshold)
    atomic_write_text(os.path.join(out, "report.json"), report.to_json())
    with atomic_path(os.path.join(out, "roc.csv")) as tmp:
        write_roc_csv(report.roc_points, tmp)
    atomic_write_text(
        os.path.join(out, "confusion.csv"),
        "tp,fp,tn,fn\n" f"{report.tp},{report.fp},{report.tn},{report.fn}\n",
    )
    auroc_s = "n/a" if report.auroc is None else f"{report.auroc:.4f}"
    print(f"test AUROC {auroc_s}  accuracy {report.accuracy:.4f}  "
          f"(threshold {args.threshold})")
    return EXIT_OK


def _test_correctness(params, prepared, split_records, threshold):
    scores = predict(params, prepared.inputs["test"])
    correct = (scores >= threshold) == prepared.labels["test"].astype(bool)
    return split_records["test"], correct


def cmd_bias_test(args) -> int:
    params, doc, prepared, split_records = _load_checkpoint_inputs(args)
    out = _outdir(args)
    test_records, correct = _test_correctness(params, prepared, split_records,
                                              args.threshold)
    report = subgroup_bias_report(test_records, correct)
    with atomic_path(os.path.join(out, "bias.csv")) as tmp:
        write_bias_csv(report, tmp)
    for comp in report:
        if comp.computable:
            flag = "yes" if comp.significant else "no"
            print(f"{comp.property_name}: {comp.group_a} vs {comp.group_b} "
                  f"p={comp.p_value:.4f} significant={flag}")
        else:
            print(f"{comp.property_name}: {comp.group_a} vs {comp.group_b} "
                  f"not computable (empty group)")
    return EXIT_OK


def cmd_error_tree(args) -> int:
    params, doc, prepared, split_records = _load_checkpoint_inputs(args)
    out = _outdir(args)
    test_records, correct = _test_correctness(params, prepared, split_records,
                                              args.threshold)
    tree = build_error_tree(test_records, correct, max_depth=args.max_depth,
                            min_leaf=args.min_leaf)
    atomic_write_text(os.path.join(out, "error_tree.json"), tree.to_json())
    atomic_write_text(os.path.join(out, "error_tree.txt"), tree.render() + "\n")
    for attr_a, attr_b in HEATMAP_PAIRS:
        cells = heatmap_matrix(test_records, correct, attr_a, attr_b)
        path = os.path.join(out, f"heatmap_{attr_a}_{attr_b}.csv")
        with atomic_path(path) as tmp:
            write_heatmap_csv(cells, attr_a, attr_b, tmp)
    print(tree.render())
    return EXIT_OK


def cmd_tune(args) -> int:
    records = _load_records(args.manifest)
    features, order = _load_features(_parse_feature_args(args.features))
    if not features:
        raise DataError("at least one --features name=path is required")
    out = _outdir(args)
    ratios = _ratios(args)
    split = split_participants(records, ratios, args.seed)

    def train_fn(config: TrainConfig):
        prepared = prepare(records, features, split, config, args.arch, order)
        params, history = train_prepared(prepared, config,
                                         shared_dim=args.shared_dim)
        doc = checkpoint_document(params, config, prepared, split, ratios,
                                  history)
        return history.best_val_auroc, len(history.epochs), doc

    ranked, best = run_search(
        default_search_space(), train_fn, n_trials=args.trials,
        seed=args.seed, concurrency=args.concurrency,
        log_path=os.path.join(out, "trials.jsonl"), resume=args.resume,
    )
    if best is not None:
        atomic_write_text(os.path.join(out, "best_checkpoint.json"), best)
        atomic_write_text(os.path.join(out, "best_config.json"),
                          ranked[0].config.to_json())
    ok = [t for t in ranked if t.status == "ok"]
    print(f"{len(ok)}/{len(ranked)} trials succeeded")
    if ok:
        print(f"best trial {ok[0].index}: val AUROC {ok[0].best_val_auroc:.4f}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    records = _load_records(args.manifest)
    features, order = _load_features(_parse_feature_args(args.features))
    if not features:
        raise DataError("at least one --features name=path is required")
    config = _load_config(args)
    out = _outdir(args)
    folds = kfold_participants(records, args.k, args.seed)
    lines = ["fold,test_auroc,accuracy,sensitivity,specificity,ppv,npv"]
    aurocs = []
    for i, fold in enumerate(folds):
        # carve a validation slice out of the fold's training participants
        train_records = samples_in(records, fold.train)
        inner = split_participants(train_records, (0.70, 0.15, 0.15),
                                   args.seed + i)
        eff = Split(train=inner.train | inner.test,
                    validation=inner.validation,
                    test=fold.test, seed=fold.seed)
        prepared = prepare(records, features, eff, config, args.arch, order)
        params, history = train_prepared(prepared, config,
                                         shared_dim=args.shared_dim)
        report = evaluate_prepared(params, prepared, "test", args.threshold)

        def fmt(v):
            return "" if v is None else f"{v:.4f}"

        lines.append(
            f"{i},{fmt(report.auroc)},{fmt(report.accuracy)},"
            f"{fmt(report.sensitivity)},{fmt(report.specificity)},"
            f"{fmt(report.ppv)},{fmt(report.npv)}"
        )
        if report.auroc is not None:
            aurocs.append(report.auroc)
        print(f"fold {i}: test AUROC {fmt(report.auroc)}")
    atomic_write_text(os.path.join(out, "crossval.csv"), "\n".join(lines) + "\n")
    summary = {
        "k": args.k,
        "mean_auroc": float(np.mean(aurocs)) if aurocs else None,
        "std_auroc": float(np.std(aurocs)) if aurocs else None,
    }
    atomic_write_text(os.path.join(out, "crossval_summary.json"),
                      json.dumps(summary, indent=2))
    if aurocs:
        print(f"mean test AUROC over {args.k} folds: {np.mean(aurocs):.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="pangram-fusion",
                     description="speech-biomarker screening toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, features=True, config=True):
        p.add_argument("--manifest", help="manifest CSV path")
        if features:
            p.add_argument("--features", action="append", metavar="NAME=PATH",
                           help="feature CSV, repeatable")
        if config:
            p.add_argument("--config", help="TrainConfig JSON file")
        p.add_argument("--out", help="output directory", default=".")
        p.add_argument("--seed", type=int, default=42,
                       help="data seed (splits / generation)")
        p.add_argument("--ratios", default="0.70,0.15,0.15",
                       help="train,val,test ratios")
        p.add_argument("--arch", choices=ARCHITECTURES, default="fusion")
        p.add_argument("--shared-dim", type=int, default=512)
        p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--out", default=".")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--pd-fraction", type=float, default=0.3)
    p.add_argument("--delta", type=float, default=2.0,
                   help="class separation in within-class std units")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--sets", help="comma-separated feature sets to emit")
    p.add_argument("--dim", action="append", metavar="NAME=DIM",
                   help="override a feature set's width")
    p.add_argument("--min-samples", type=int, default=1)
    p.add_argument("--max-samples", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="WAV directory -> acoustic feature CSV")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("preprocess", help="fit preprocessing plans on the train split")
    add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on its test split")
    add_common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bias-test", help="demographic bias report on the test split")
    add_common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_bias_test)

    p = sub.add_parser("error-tree", help="cohort error tree and heatmaps")
    add_common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--min-leaf", type=int, default=10)
    p.set_defaults(func=cmd_error_tree)

    p = sub.add_parser("tune", help="random search over the tuning space")
    add_common(p, config=False)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("crossval", help="participant-level k-fold cross-validation")
    add_common(p)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_crossval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, ManifestError, AudioError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
