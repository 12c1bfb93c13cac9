"""Command-line workflows: synth / train / eval / prioritize / explain / ablate.

Shared flags: ``--config <file>`` (flat key = value, namespaced keys),
``--seed <n>`` (the single entropy source), ``--out <dir>``. Exit codes:
0 success, 1 runtime failure, 2 usage error. Every artifact-producing
command writes a run manifest alongside its outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, build_section, read_config_file
from .dataset import (
    FEATURE_NAMES,
    DataError,
    SnapshotSeries,
    apply_standardizer,
    assign_windows,
    build_windows,
    default_split,
    drop_features,
    fit_standardizer,
    load_snapshots,
    read_observation_file,
    select_features,
)
from .decision import build_profile, safety_report, top_k_critical
from .explain import explain_node, permutation_importance
from .graph import GraphError, RoadGraph, load_graph, read_edge_file
from .manifest import write_manifest
from .metrics import rec_curve, regression_report, taylor_stats
from .model import VARIANTS, ModelConfig, predict
from .synthdata import SynthConfig, generate
from .training import TrainConfig, train


class UsageError(Exception):
    """Bad command usage detected after argparse (exit 2)."""


# Feature-drop groups of the ablation harness. The structural list follows
# the published grouping verbatim; its overlap with the condition-history
# group (crack/IRI) is intentional and documented.
FEATURE_GROUPS: dict[str, tuple[str, ...]] = {
    "no_structural": (
        "material",
        "agg_type",
        "age_yrs",
        "ept_mm",
        "base_modulus",
        "crack_area_pct",
        "iri",
        "flood_risk",
        "proximity_quarry",
    ),
    "no_traffic": ("traffic_aadt", "truck_factor"),
    "no_condition": ("crack_area_pct", "iri"),
}

ABLATION_AXES = {
    "variant": list(VARIANTS),
    "t0": [1, 2],
    "heads": [1, 2, 4, 8],
    "gat_hidden": [32, 64, 128, 256],
    "gru_hidden": [32, 64, 128, 256, 512, 1024],
    "dropout": [0.0, 0.1, 0.2, 0.3],
    "lr": None,  # any positive float
    "weight_decay": None,
    "features": ["all"] + sorted(FEATURE_GROUPS),
}


def _write_csv(path: Path, header: list[str], rows: list[list], comments: list[str] | None = None):
    with open(path, "w", newline="") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_tables(args) -> tuple[RoadGraph, SnapshotSeries, Path, Path]:
    data_dir = Path(args.data)
    obs_path = Path(args.observations) if args.observations else data_dir / "observations.csv"
    edge_path = Path(args.edges) if args.edges else data_dir / "edges.csv"
    records = read_observation_file(obs_path)
    node_ids = sorted({r["segment_id"] for r in records})
    graph = load_graph(node_ids, read_edge_file(edge_path))
    series = load_snapshots(records, graph)
    return graph, series, obs_path, edge_path


def _file_config(args) -> dict[str, str]:
    return read_config_file(args.config) if args.config else {}


def _prepare_training_data(series, graph, t0):
    split = default_split(series.years)
    standardizer = fit_standardizer(series, split.train_years)
    samples = build_windows(series, t0)
    train_w, val_w, test_w = assign_windows(samples, split)
    std = lambda windows: [apply_standardizer(standardizer, s) for s in windows]
    return standardizer, std(train_w), std(val_w), test_w


def cmd_synth(args) -> int:
    cfg: SynthConfig = build_section(
        "synth",
        _file_config(args),
        seed=args.seed,
        num_segments=args.nodes,
        num_years=args.years,
        directed_arcs=args.arcs,
        gamma=args.gamma,
        drift_std=args.drift_std,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph, series = generate(cfg)

    obs_path = out / "observations.csv"
    rows = []
    for k, year in enumerate(series.years):
        for i, seg in enumerate(graph.node_ids):
            rows.append(
                [seg, year]
                + [repr(float(series.features[k, i, f])) for f in range(len(FEATURE_NAMES))]
                + [repr(float(series.targets[k, i]))]
            )
    _write_csv(obs_path, ["segment_id", "year", *FEATURE_NAMES, "pci"], rows)

    edge_path = out / "edges.csv"
    edge_rows = []
    for i, j in graph.edges:  # both directions: the arc count is the contract
        edge_rows.append([graph.node_ids[i], graph.node_ids[j]])
        edge_rows.append([graph.node_ids[j], graph.node_ids[i]])
    _write_csv(edge_path, ["src_segment_id", "dst_segment_id"], edge_rows)

    prov_path = out / "provenance.txt"
    lines = [f"synth.{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(cfg)
             if f.name not in ("marginals", "dynamics")]
    lines += [f"synth.dynamics.{f.name} = {getattr(cfg.dynamics, f.name)}"
              for f in dataclasses.fields(cfg.dynamics)]
    prov_path.write_text("\n".join(lines) + "\n")

    write_manifest(
        out, "synth", cfg.seed, {"synth": dataclasses.asdict(cfg.dynamics) | {
            k: v for k, v in dataclasses.asdict(cfg).items() if k not in ("marginals", "dynamics")
        }},
        inputs=[], outputs=[obs_path, edge_path, prov_path],
    )
    print(f"wrote {obs_path} ({series.targets.size} observations), {edge_path}")
    return 0


def _model_config_from(args, file_cfg) -> ModelConfig:
    return build_section(
        "model",
        file_cfg,
        heads=args.heads,
        d_head=args.gat_hidden,
        gru_hidden=args.gru_hidden,
        dropout=args.dropout,
    )


def cmd_train(args) -> int:
    file_cfg = _file_config(args)
    train_cfg: TrainConfig = build_section(
        "train",
        file_cfg,
        seed=args.seed,
        t0=args.t0,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        max_epochs=args.max_epochs,
    )
    model_cfg = _model_config_from(args, file_cfg)
    graph, series, obs_path, edge_path = _load_tables(args)
    if args.drop_features:
        series = drop_features(series, FEATURE_GROUPS[args.drop_features])

    standardizer, train_w, val_w, _ = _prepare_training_data(series, graph, train_cfg.t0)
    params, report = train(
        args.variant, train_w, val_w, graph if args.variant != "mlp" else graph,
        train_cfg, model_cfg,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.npz"
    save_checkpoint(ckpt_path, params, standardizer, feature_names=series.feature_names)
    report_path = out / "train_report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")

    write_manifest(
        out, "train", train_cfg.seed,
        {"train": dataclasses.asdict(train_cfg), "model": dataclasses.asdict(model_cfg),
         "variant": args.variant},
        inputs=[obs_path, edge_path], outputs=[ckpt_path, report_path],
    )
    print(
        f"trained {args.variant}: best val loss {report.best_val_loss:.6f} "
        f"at epoch {report.best_epoch} ({report.stopping_reason}); wrote {ckpt_path}"
    )
    return 0


def _windows_for_split(series, graph, params, standardizer, split_name):
    split = default_split(series.years)
    samples = build_windows(series, params.t0)
    train_w, val_w, test_w = assign_windows(samples, split)
    chosen = {"train": train_w, "val": val_w, "test": test_w}[split_name]
    if not chosen:
        raise UsageError(f"no {split_name} windows available for years {series.years}")
    return chosen


def _restrict_to_checkpoint_features(series, meta):
    names = tuple(meta.get("feature_names") or ())
    if names and names != series.feature_names:
        series = select_features(series, names)
    return series


def cmd_eval(args) -> int:
    params, standardizer, meta = load_checkpoint(args.checkpoint)
    graph, series, obs_path, edge_path = _load_tables(args)
    series = _restrict_to_checkpoint_features(series, meta)
    windows = _windows_for_split(series, graph, params, standardizer, args.split)

    preds, actuals, seg_rows = [], [], []
    for sample in windows:
        std_sample = apply_standardizer(standardizer, sample)
        pred = standardizer.inverse_transform_target(predict(params, std_sample, graph))
        preds.append(pred)
        actuals.append(sample.target)
        seg_rows += [
            [graph.node_ids[i], sample.target_year, repr(float(pred[i])), repr(float(sample.target[i]))]
            for i in range(len(pred))
        ]
    pred = np.concatenate(preds)
    actual = np.concatenate(actuals)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = regression_report(pred, actual)
    metrics_path = out / "metrics.csv"
    _write_csv(metrics_path, ["metric", "value"], [[k, repr(v)] for k, v in report.as_rows()])

    rec = rec_curve(pred, actual)
    rec_path = out / "rec_curve.csv"
    _write_csv(
        rec_path,
        ["tolerance", "coverage"],
        [[repr(float(t)), repr(float(c))] for t, c in zip(rec.tolerances, rec.coverage)],
    )

    stats = taylor_stats(pred, actual)
    taylor_path = out / "taylor.csv"
    _write_csv(
        taylor_path,
        ["series", "std", "correlation", "centered_rmse"],
        [
            ["prediction", repr(stats.pred_std), repr(stats.correlation), repr(stats.centered_rmse)],
            ["reference", repr(stats.ref_std), repr(1.0), repr(0.0)],
        ],
    )
    pred_path = out / "predictions.csv"
    _write_csv(pred_path, ["segment_id", "year", "predicted_pci", "actual_pci"], seg_rows)

    write_manifest(
        out, "eval", args.seed or 0, {"split": args.split, "checkpoint": str(args.checkpoint)},
        inputs=[Path(args.checkpoint), obs_path, edge_path],
        outputs=[metrics_path, rec_path, taylor_path, pred_path],
    )
    print(f"{args.split} metrics: mse={report.mse:.4f} rmse={report.rmse:.4f} "
          f"mae={report.mae:.4f} r2={report.r2:.4f}")
    return 0


def cmd_prioritize(args) -> int:
    params, standardizer, meta = load_checkpoint(args.checkpoint)
    graph, series, obs_path, edge_path = _load_tables(args)
    series = _restrict_to_checkpoint_features(series, meta)
    samples = build_windows(series, params.t0)
    matching = [s for s in samples if s.target_year == args.year]
    if not matching:
        raise UsageError(
            f"no window targets year {args.year}; available targets: "
            f"{[s.target_year for s in samples]}"
        )
    sample = matching[0]
    std_sample = apply_standardizer(standardizer, sample)
    pred = standardizer.inverse_transform_target(predict(params, std_sample, graph))
    profile = build_profile(pred, graph.node_ids, actual_pci=sample.target)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profile_path = out / "profile.csv"
    rows = [
        [
            e.segment_id,
            repr(e.predicted_pci),
            e.predicted_class.label,
            e.predicted_class.recommended_action,
            e.priority_rank,
            repr(e.actual_pci),
            e.actual_class.label,
        ]
        for e in profile.by_priority()
    ]
    _write_csv(
        profile_path,
        ["segment_id", "predicted_pci", "predicted_class", "recommended_action",
         "priority_rank", "actual_pci", "actual_class"],
        rows,
    )

    safety = safety_report(profile)
    safety_path = out / "safety_report.csv"
    safety_rows = [["exact_match", repr(safety.exact_match)],
                   ["adjacent_match", repr(safety.adjacent_match)],
                   ["critical_misclassification", repr(safety.critical_misclassification)]]
    labels = ["Excellent", "Good", "Fair", "Poor", "VeryPoor"]
    for i, actual_label in enumerate(labels):
        for j, pred_label in enumerate(labels):
            safety_rows.append([f"confusion[{actual_label}->{pred_label}]",
                                int(safety.confusion[i, j])])
    _write_csv(safety_path, ["quantity", "value"], safety_rows)

    longitudinal_path = out / "longitudinal.csv"
    long_rows = [
        [i, repr(float(pred[i])), repr(float(sample.target[i]))] for i in range(len(pred))
    ]
    _write_csv(
        longitudinal_path,
        ["segment_index", "predicted_pci", "actual_pci"],
        long_rows,
        comments=[
            f"longitudinal maintenance profile for target year {args.year}",
            "severity thresholds (PCI): Excellent>=85, Good>=70, Fair>=55, Poor>=40, VeryPoor<40",
        ],
    )

    top_path = out / "top_segments.csv"
    top = top_k_critical(profile, min(args.k, len(profile.entries)))
    _write_csv(
        top_path,
        ["segment_id", "predicted_pci", "predicted_class", "recommended_action", "priority_rank"],
        [[e.segment_id, repr(e.predicted_pci), e.predicted_class.label,
          e.predicted_class.recommended_action, e.priority_rank] for e in top],
    )

    write_manifest(
        out, "prioritize", args.seed or 0,
        {"year": args.year, "k": args.k, "checkpoint": str(args.checkpoint)},
        inputs=[Path(args.checkpoint), obs_path, edge_path],
        outputs=[profile_path, safety_path, longitudinal_path, top_path],
    )
    print(f"exact={safety.exact_match:.3f} adjacent={safety.adjacent_match:.3f} "
          f"critical={safety.critical_misclassification:.3f}; wrote {profile_path}")
    return 0


def cmd_explain(args) -> int:
    if (args.node is None) == (not args.global_importance):
        raise UsageError("exactly one of --node or --global is required")
    file_cfg = _file_config(args)
    explain_cfg = build_section("explain", file_cfg, seed=args.seed, steps=args.steps)
    params, standardizer, meta = load_checkpoint(args.checkpoint)
    graph, series, obs_path, edge_path = _load_tables(args)
    series = _restrict_to_checkpoint_features(series, meta)
    windows = _windows_for_split(series, graph, params, standardizer, "test")
    sample = windows[-1]
    std_sample = apply_standardizer(standardizer, sample)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.global_importance:
        importance = permutation_importance(
            params, standardizer, std_sample, graph, sample.target,
            seed=explain_cfg.seed, repeats=args.repeats,
            feature_names=series.feature_names,
        )
        out_path = out / "global_importance.csv"
        _write_csv(out_path, ["feature", "score"],
                   [[name, repr(score)] for name, score in importance.ranked()])
        label = "global"
    else:
        node_index = graph.index_of(args.node)
        masks = explain_node(params, std_sample, graph, node_index, explain_cfg)
        total = masks.feature_mask.sum()
        shares = masks.feature_mask / total if total > 0 else masks.feature_mask
        order = np.argsort(-shares)
        out_path = out / f"local_importance_{args.node}.csv"
        _write_csv(out_path, ["feature", "score"],
                   [[series.feature_names[i], repr(float(shares[i]))] for i in order])
        label = f"node {args.node}"

    write_manifest(
        out, "explain", explain_cfg.seed,
        {"mode": "global" if args.global_importance else f"node:{args.node}",
         "checkpoint": str(args.checkpoint)},
        inputs=[Path(args.checkpoint), obs_path, edge_path], outputs=[out_path],
    )
    print(f"wrote {label} importance to {out_path}")
    return 0


def _parse_axis(spec: str) -> tuple[str, list[str]]:
    if "=" not in spec:
        raise UsageError(f"axis spec {spec!r} must look like name=v1,v2")
    name, _, values = spec.partition("=")
    name = name.strip()
    if name not in ABLATION_AXES:
        raise UsageError(f"unknown ablation axis {name!r}; known: {sorted(ABLATION_AXES)}")
    parsed = [v.strip() for v in values.split(",") if v.strip()]
    if not parsed:
        raise UsageError(f"axis {name!r} has no values")
    allowed = ABLATION_AXES[name]
    if allowed is not None:
        for v in parsed:
            try:
                typed = type(allowed[0])(v) if not isinstance(allowed[0], str) else v
            except ValueError:
                raise UsageError(f"axis {name!r}: cannot parse value {v!r}") from None
            if typed not in allowed:
                raise UsageError(f"axis {name!r}: value {v!r} not in {allowed}")
    return name, parsed


def cmd_ablate(args) -> int:
    file_cfg = _file_config(args)
    axes = [_parse_axis(spec) for spec in args.axis or []]
    if not axes:
        raise UsageError("at least one --axis is required")
    graph, series, obs_path, edge_path = _load_tables(args)

    base_train: TrainConfig = build_section("train", file_cfg, seed=args.seed,
                                            max_epochs=args.max_epochs)
    base_model: ModelConfig = build_section("model", file_cfg)

    def run_cell(axis: str, value: str) -> list:
        train_kw = dataclasses.asdict(base_train)
        model_kw = dataclasses.asdict(base_model)
        variant = args.variant
        cell_series = series
        if axis == "variant":
            variant = value
        elif axis == "t0":
            train_kw["t0"] = int(value)
        elif axis == "heads":
            model_kw["heads"] = int(value)
        elif axis == "gat_hidden":
            model_kw["d_head"] = int(value)
        elif axis == "gru_hidden":
            model_kw["gru_hidden"] = int(value)
        elif axis == "dropout":
            model_kw["dropout"] = float(value)
        elif axis == "lr":
            train_kw["learning_rate"] = float(value)
        elif axis == "weight_decay":
            train_kw["weight_decay"] = float(value)
        elif axis == "features":
            if value != "all":
                cell_series = drop_features(series, FEATURE_GROUPS[value])
        tc = TrainConfig(**train_kw)
        mc = ModelConfig(**model_kw)
        standardizer, train_w, val_w, _ = _prepare_training_data(cell_series, graph, tc.t0)
        params, _ = train(variant, train_w, val_w, graph, tc, mc)
        preds, actuals = [], []
        for sample in val_w:
            pred_std = predict(params, sample, graph)
            preds.append(standardizer.inverse_transform_target(pred_std))
            actuals.append(standardizer.inverse_transform_target(sample.target))
        rep = regression_report(np.concatenate(preds), np.concatenate(actuals))
        return [axis, value, repr(rep.mse), repr(rep.rmse), repr(rep.mae), repr(rep.r2)]

    rows = [run_cell(axis, value) for axis, values in axes for value in values]
    rows.sort(key=lambda r: (r[0], r[1]))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / "ablation.csv"
    _write_csv(table_path, ["axis", "setting", "mse", "rmse", "mae", "r2"], rows)
    write_manifest(
        out, "ablate", base_train.seed,
        {"axes": dict(axes), "variant": args.variant},
        inputs=[obs_path, edge_path], outputs=[table_path],
    )
    print(f"wrote {len(rows)} grid cells to {table_path}")
    return 0


def _add_data_args(p):
    p.add_argument("--data", default=".", help="directory holding observations.csv and edges.csv")
    p.add_argument("--observations", help="explicit observation file path")
    p.add_argument("--edges", help="explicit edge file path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pavegraph",
        description="Pavement-condition forecasting, prioritization, and explanation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="seed for all randomness")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--years", type=int, default=None)
    p.add_argument("--arcs", type=int, default=None, help="directed adjacency record count")
    p.add_argument("--gamma", type=float, default=None, help="spatial contagion strength")
    p.add_argument("--drift-std", dest="drift_std", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model variant")
    common(p)
    _add_data_args(p)
    p.add_argument("--variant", choices=VARIANTS, default="full")
    p.add_argument("--t0", type=int, default=None, help="temporal window length")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--gat-hidden", dest="gat_hidden", type=int, default=None,
                   help="attention dimension per head")
    p.add_argument("--gru-hidden", dest="gru_hidden", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--drop-features", dest="drop_features",
                   choices=sorted(FEATURE_GROUPS), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("prioritize", help="rank segments for maintenance")
    common(p)
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--year", type=int, required=True, help="target year to predict")
    p.add_argument("--k", type=int, default=10, help="top critical segments to list")
    p.set_defaults(func=cmd_prioritize)

    p = sub.add_parser("explain", help="feature importance (local mask or global permutation)")
    common(p)
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--node", help="segment id for a local explanation")
    p.add_argument("--global", dest="global_importance", action="store_true",
                   help="global permutation importance")
    p.add_argument("--steps", type=int, default=None, help="mask optimization steps")
    p.add_argument("--repeats", type=int, default=10, help="permutation repeats")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ablate", help="one-at-a-time hyperparameter / variant grids")
    common(p)
    _add_data_args(p)
    p.add_argument("--axis", action="append",
                   help="grid axis, e.g. variant=full,mlp or heads=1,2,4,8 (repeatable)")
    p.add_argument("--variant", choices=VARIANTS, default="full",
                   help="base variant for non-variant axes")
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DataError, GraphError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
