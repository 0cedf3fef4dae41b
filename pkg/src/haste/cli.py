"""Command-line entry point.

One process per run; every subcommand writes its resolved configuration as
``config.json`` next to its outputs so a run can be reproduced from the
output directory alone. No timestamps go into output files, which keeps
repeated runs byte-identical.

Exit codes: 0 success, 1 data or validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import evaluation, hardness, metrics, synthetic, tensor_store

DEFAULT_FRACTION = 0.2
DEFAULT_RIDGE = 1e-6
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500


def _json_value(x):
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return x


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, default=_json_value) + "\n"
    )


def _prepare_out(out: str, default_name: str | None = None) -> tuple[Path, Path | None]:
    """Resolve --out into (directory, optional explicit file path)."""
    out_path = Path(out)
    if default_name is not None and out_path.suffix == ".json":
        out_path.parent.mkdir(parents=True, exist_ok=True)
        return out_path.parent, out_path
    out_path.mkdir(parents=True, exist_ok=True)
    if default_name is None:
        return out_path, None
    return out_path, out_path / default_name


def _write_config(out_dir: Path, subcommand: str, resolved: dict) -> None:
    _write_json(out_dir / "config.json", {"subcommand": subcommand, **resolved})


def _final_layer(embeddings: tensor_store.EmbeddingSet, layer: str | None) -> np.ndarray:
    if layer is None:
        return embeddings.layers[-1][1]
    return embeddings.layer(layer)


def _load_labels(args, manifest_path: str) -> tensor_store.LabelVector:
    if getattr(args, "labels", None):
        return tensor_store.read_labels(args.labels)
    return tensor_store.read_manifest_labels(manifest_path)


def _compute_hardness(args) -> hardness.HardnessVector:
    target = tensor_store.read_embedding_set(args.manifest)
    if args.hardness_method == "ca":
        if not args.source_manifest:
            raise ValueError("class-agnostic hardness requires --source-manifest")
        source = tensor_store.read_embedding_set(args.source_manifest)
        if args.source_fraction < 1.0:
            source_labels = tensor_store.read_manifest_labels(args.source_manifest)
            keep = hardness.subsample_source(
                source_labels, args.source_fraction, args.seed
            )
            source = tensor_store.EmbeddingSet(
                layers=tuple(
                    (name, block[keep.indices]) for name, block in source.layers
                ),
                n=len(keep),
            )
        sim = hardness.similarity_matrix(
            hardness.normalize_per_layer(source),
            hardness.normalize_per_layer(target),
        )
        return hardness.hardness_class_agnostic(sim)
    labels = _load_labels(args, args.manifest)
    features = _final_layer(target, args.layer).astype(np.float64)
    gaussians = hardness.class_gaussians(
        features, labels, mode=args.cov, ridge=args.ridge
    )
    return hardness.hardness_class_specific(features, labels, gaussians)


def _hardness_params(args) -> dict:
    if args.hardness_method == "ca":
        return {
            "source_manifest": args.source_manifest,
            "source_fraction": args.source_fraction,
            "seed": args.seed,
        }
    return {"cov": args.cov, "ridge": args.ridge, "layer": args.layer}


def cmd_hardness(args) -> int:
    out_dir, _ = _prepare_out(args.out)
    h = _compute_hardness(args)
    tensor_store.write_tensor(out_dir / "hardness.hste", h.scores)
    _write_json(
        out_dir / "hardness.json",
        {"method": h.method, "params": _hardness_params(args)},
    )
    _write_config(
        out_dir,
        "hardness",
        {
            "manifest": args.manifest,
            "hardness_method": args.hardness_method,
            **_hardness_params(args),
        },
    )
    return 0


def _read_hardness_file(path: str) -> hardness.HardnessVector:
    scores = tensor_store.read_tensor(path)
    if scores.ndim != 1:
        raise ValueError(f"{path}: hardness tensor must be one-dimensional")
    sidecar = Path(path).with_suffix(".json")
    method = "cs"
    if sidecar.exists():
        method = json.loads(sidecar.read_text()).get("method", "cs")
    return hardness.HardnessVector(scores=scores.astype(np.float64), method=method)


def cmd_subset(args) -> int:
    out_dir, out_file = _prepare_out(args.out, "subset.json")
    h = _read_hardness_file(args.hardness)
    subset = hardness.select_hard_subset(h, args.fraction)
    if args.easy_fraction > 0.0:
        subset = hardness.augment_with_easy(subset, h, args.easy_fraction, args.seed)
    tensor_store.write_subset(out_file, subset)
    _write_config(
        out_dir,
        "subset",
        {
            "hardness": args.hardness,
            "fraction": args.fraction,
            "easy_fraction": args.easy_fraction,
            "seed": args.seed,
        },
    )
    return 0


def cmd_bucket(args) -> int:
    out_dir, _ = _prepare_out(args.out)
    h = _read_hardness_file(args.hardness)
    buckets = hardness.bucketize(h, args.buckets)
    for i, subset in enumerate(buckets, start=1):
        tensor_store.write_subset(out_dir / f"bucket_{i:02d}.json", subset)
    _write_config(
        out_dir, "bucket", {"hardness": args.hardness, "buckets": args.buckets}
    )
    return 0


def _score_row(candidate: str, score: metrics.MetricScore) -> tuple:
    return (candidate, score.metric, score.value, None)


def _emit_score(out_dir: Path, candidate: str, score: metrics.MetricScore, resolved: dict) -> None:
    row = _score_row(candidate, score)
    tensor_store.write_scores(out_dir / "scores.csv", [row])
    _write_json(
        out_dir / "score.json",
        {
            "candidate": candidate,
            "metric": score.metric,
            "value": score.value,
            "subset_size": score.subset_size,
            "total_n": score.total_n,
            "params": score.params,
        },
    )
    _write_config(out_dir, resolved.pop("_subcommand"), resolved)
    print(f"{candidate},{score.metric},{score.value!r},")


def cmd_score(args) -> int:
    out_dir, _ = _prepare_out(args.out)
    candidate = args.candidate or Path(args.manifest).stem
    labels = _load_labels(args, args.manifest)
    subset = tensor_store.read_subset(args.subset) if args.subset else None
    wrapped = subset is None and args.hardness_method is not None
    if wrapped:
        h = _compute_hardness(args)
        subset = hardness.select_hard_subset(h, args.fraction)
    if args.metric in ("leep", "nce"):
        preds = tensor_store.read_manifest_predictions(args.manifest)
        if args.metric == "leep":
            score = metrics.leep(preds, labels, subset)
        else:
            score = metrics.nce(preds, labels, subset)
    elif args.metric == "gbc":
        embeddings = tensor_store.read_embedding_set(args.manifest)
        features = _final_layer(embeddings, args.layer).astype(np.float64)
        score = metrics.gbc(
            features, labels, subset, mode=args.cov, ridge=args.ridge
        )
    else:
        raise ValueError(
            f"metric {args.metric!r} needs ensemble-score, not score"
        )
    if wrapped:
        score = metrics.MetricScore(
            metric=f"haste-{score.metric}",
            value=score.value,
            subset_size=score.subset_size,
            total_n=score.total_n,
            params={
                **score.params,
                "hardness_method": args.hardness_method,
                "fraction": args.fraction,
            },
        )
    _emit_score(
        out_dir,
        candidate,
        score,
        {
            "_subcommand": "score",
            "manifest": args.manifest,
            "metric": args.metric,
            "subset": args.subset,
            "hardness_method": args.hardness_method,
            "fraction": args.fraction,
            "cov": args.cov,
            "ridge": args.ridge,
        },
    )
    return 0


def cmd_ensemble_score(args) -> int:
    out_dir, _ = _prepare_out(args.out)
    candidate = args.candidate or "ensemble"
    member_preds = [
        tensor_store.read_manifest_predictions(m) for m in args.manifest
    ]
    labels = _load_labels(args, args.manifest[0])
    subsets = [tensor_store.read_subset(s) for s in args.subset or []]
    if args.metric == "ms-leep":
        if len(subsets) == 0:
            member_subsets = None
        elif len(subsets) == 1:
            member_subsets = [subsets[0]] * len(member_preds)
        elif len(subsets) == len(member_preds):
            member_subsets = subsets
        else:
            raise ValueError(
                f"{len(subsets)} subsets for {len(member_preds)} members"
            )
        score = metrics.ms_leep(member_preds, labels, member_subsets)
    elif args.metric == "e-leep":
        common = metrics.union_subsets(subsets) if subsets else None
        score = metrics.e_leep(member_preds, labels, common)
    else:
        raise ValueError(f"metric {args.metric!r} is not an ensemble metric")
    _emit_score(
        out_dir,
        candidate,
        score,
        {
            "_subcommand": "ensemble-score",
            "manifest": list(args.manifest),
            "metric": args.metric,
            "subset": list(args.subset or []),
        },
    )
    return 0


def _bound_row(candidate: str, report: bounds_mod.BoundReport) -> list:
    def fmt(x):
        if x is None:
            return ""
        if math.isinf(x):
            return "-inf" if x < 0 else "inf"
        return repr(float(x))

    return [
        candidate,
        fmt(report.haste_leep),
        fmt(report.lower_bound),
        fmt(report.upper_bound_hard),
        fmt(report.upper_bound_full),
        fmt(report.slacks.get("score_minus_lower")),
        fmt(report.slacks.get("upper_hard_minus_score")),
    ]


def cmd_bounds(args) -> int:
    out_dir, _ = _prepare_out(args.out)
    subset = tensor_store.read_subset(args.subset) if args.subset else None
    reports = {}
    rows = []
    for manifest in args.manifest:
        candidate = Path(manifest).stem if len(args.manifest) > 1 else (
            args.candidate or Path(manifest).stem
        )
        preds = tensor_store.read_manifest_predictions(manifest)
        labels = _load_labels(args, manifest)
        report = bounds_mod.bound_report(
            preds, labels, subset, tol=args.tol, max_iter=args.max_iter
        )
        reports[candidate] = {
            "haste_leep": report.haste_leep,
            "lower_bound": report.lower_bound,
            "upper_hard": report.upper_bound_hard,
            "upper_full": report.upper_bound_full,
            "slacks": report.slacks,
            "em": {"iters": report.em.get("iterations"), "converged": report.em.get("converged")},
        }
        rows.append(_bound_row(candidate, report))
    _write_json(out_dir / "bounds.json", reports)
    header = "candidate,score,lower_bound,upper_hard,upper_full,slack_lower,slack_upper"
    lines = [header] + [",".join(r) for r in rows]
    (out_dir / "bounds.csv").write_text("\n".join(lines) + "\n", newline="\n")
    _write_config(
        out_dir,
        "bounds",
        {
            "manifest": list(args.manifest),
            "subset": args.subset,
            "tol": args.tol,
            "max_iter": args.max_iter,
        },
    )
    return 0


def _parse_baselines(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(
                f"--baseline expects MODIFIED=BASELINE, got {pair!r}"
            )
        modified, baseline = pair.split("=", 1)
        out[modified] = baseline
    return out


def cmd_eval(args) -> int:
    out_dir, _ = _prepare_out(args.out)
    baseline_pairs = _parse_baselines(args.baseline or [])
    reports = []
    payload = {"coefficient": args.coef, "experiments": {}}
    for scores_path in args.scores:
        rows = tensor_store.read_scores(scores_path)
        records = []
        for candidate, metric, score, accuracy in rows:
            if accuracy is None:
                raise ValueError(
                    f"{scores_path}: record ({candidate}, {metric}) has no accuracy"
                )
            records.append(
                evaluation.ExperimentRecord(candidate, metric, score, accuracy)
            )
        report = evaluation.evaluate(records, args.coef, baseline_pairs)
        reports.append(report)
        payload["experiments"][Path(scores_path).stem] = {
            "coefficients": report.coefficients,
            "improvements": report.improvements,
            "num_candidates": report.num_candidates,
        }
        print(evaluation.format_report(report))
    if baseline_pairs:
        payload["summary"] = evaluation.summarize_improvements(reports, baseline_pairs)
    _write_json(out_dir / "report.json", payload)
    tables = "\n\n".join(evaluation.format_report(r) for r in reports)
    (out_dir / "report.txt").write_text(tables + "\n", newline="\n")
    _write_config(
        out_dir,
        "eval",
        {
            "scores": list(args.scores),
            "coef": args.coef,
            "baseline": dict(baseline_pairs),
        },
    )
    return 0


def cmd_synth(args) -> int:
    out_dir, _ = _prepare_out(args.out)
    config = synthetic.SynthConfig(
        num_classes=args.classes,
        feature_dim=args.dim,
        n_train=args.samples,
        num_candidates=args.candidates,
        contamination=args.contamination,
        fraction=args.fraction,
        hardness_method=args.hardness_method,
    )
    records, bundle = synthetic.synth_experiment(config, args.seed)
    rows = [(r.candidate, r.metric, r.score, r.accuracy) for r in records]
    tensor_store.write_scores(out_dir / "scores.csv", rows)

    tensor_store.write_labels(out_dir / "labels.csv", bundle.labels_train)
    tensor_store.write_tensor(out_dir / "features.hste", bundle.features_train)
    for m, name in enumerate(bundle.candidates):
        cand_dir = out_dir / name
        cand_dir.mkdir(exist_ok=True)
        tensor_store.write_tensor(
            cand_dir / "predictions.hste", bundle.preds_train[m].rows
        )
        tensor_store.write_manifest(
            cand_dir / "manifest.json",
            layers=[("features", "../features.hste", config.feature_dim)],
            n=config.n_train,
            labels="../labels.csv",
            predictions="predictions.hste",
        )
    source_dir = out_dir / "source"
    source_dir.mkdir(exist_ok=True)
    src_block = bundle.source_embeddings.layers[0][1]
    tensor_store.write_tensor(source_dir / "features.hste", src_block)
    tensor_store.write_manifest(
        source_dir / "manifest.json",
        layers=[("features", "features.hste", src_block.shape[1])],
        n=src_block.shape[0],
    )
    tensor_store.write_tensor(out_dir / "hardness.hste", bundle.hardness.scores)
    _write_json(
        out_dir / "hardness.json",
        {"method": bundle.hardness.method, "params": {"generator": "synth"}},
    )
    tensor_store.write_subset(out_dir / "subset.json", bundle.hard_subset)
    _write_config(
        out_dir,
        "synth",
        {
            "seed": args.seed,
            "classes": args.classes,
            "dim": args.dim,
            "samples": args.samples,
            "candidates": args.candidates,
            "contamination": args.contamination,
            "fraction": args.fraction,
            "hardness_method": args.hardness_method,
        },
    )
    print(f"synth,{args.seed},{len(records)} records,{out_dir}")
    return 0


def _add_common_hardness_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--hardness-method", choices=["ca", "cs"], default=None)
    parser.add_argument("--source-manifest", default=None)
    parser.add_argument("--source-fraction", type=float, default=1.0)
    parser.add_argument("--layer", default=None)
    parser.add_argument("--cov", choices=["full", "spherical"], default="full")
    parser.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="haste",
        description="Transferability estimation on hard subsets of target data.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("hardness", help="compute per-sample hardness scores")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", default=None)
    _add_common_hardness_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_hardness)
    # hardness-method is required here, unlike in `score`
    p.set_defaults(hardness_method_required=True)

    p = sub.add_parser("subset", help="select the hard subset from a hardness file")
    p.add_argument("--hardness", required=True)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    p.add_argument("--easy-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_subset)

    p = sub.add_parser("bucket", help="split samples into hardness buckets")
    p.add_argument("--hardness", required=True)
    p.add_argument("--buckets", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bucket)

    p = sub.add_parser("score", help="compute a single-model metric")
    p.add_argument("--metric", choices=["leep", "nce", "gbc"], required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--subset", default=None)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    p.add_argument("--candidate", default=None)
    _add_common_hardness_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("ensemble-score", help="compute an ensemble metric")
    p.add_argument("--metric", choices=["ms-leep", "e-leep"], required=True)
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--subset", action="append", default=None)
    p.add_argument("--candidate", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ensemble_score)

    p = sub.add_parser("bounds", help="verify the score bound sandwich")
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--subset", default=None)
    p.add_argument("--candidate", default=None)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("eval", help="correlate scores with accuracies")
    p.add_argument("--scores", action="append", required=True)
    p.add_argument(
        "--coef", choices=["pearson", "kendall", "wkendall"], default="pearson"
    )
    p.add_argument("--baseline", action="append", default=None,
                   help="MODIFIED=BASELINE metric pair, repeatable")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic selection experiment")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--samples", type=int, default=600)
    p.add_argument("--candidates", type=int, default=10)
    p.add_argument("--contamination", type=float, default=0.3)
    p.add_argument("--fraction", type=float, default=0.25)
    p.add_argument("--hardness-method", choices=["ca", "cs"], default="cs")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "hardness_method_required", False) and args.hardness_method is None:
        parser.error("hardness requires --hardness-method {ca,cs}")
    try:
        return args.fn(args)
    except (ValueError, OSError, KeyError, AssertionError) as exc:
        print(f"haste: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
