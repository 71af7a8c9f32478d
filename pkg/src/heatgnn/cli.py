"""Command-line entry point.

Subcommands: prepare, train, evaluate, ablate, sweep, simulate, inspect-mag,
baseline, timing, plot. Every command takes an optional `--config FILE` of
flat key=value pairs; flags override file values which override defaults.
Exit codes: 0 success, 1 usage/configuration, 2 data validation, 3 training
divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import build_experiment_config, config_hash, parse_kv_file
from .data import chronological_split, fit_normalization, make_windows, write_csv, SplitSpec
from .errors import ConfigurationError, DataValidationError, TrainingDivergedError
from . import experiments


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value experiment config file")
    p.add_argument("--dataset", help="dataset name (looked up in the registry)")
    p.add_argument("--counts-csv", dest="counts_csv")
    p.add_argument("--adjacency-csv", dest="adjacency_csv")
    p.add_argument("--registry", help="dataset registry file")
    p.add_argument("--outdir")
    p.add_argument("--window", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--lambda", dest="lambda_", type=float, help="physics loss weight")
    p.add_argument("--delta", type=float, help="affinity sparsification threshold")
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--variant", choices=experiments.ABLATION_VARIANTS)
    p.add_argument("--residual-mode", dest="residual_mode", choices=("observed", "predicted"))
    p.add_argument("--d1", type=int)
    p.add_argument("--d2", type=int)
    p.add_argument("--d3", type=int)


_FLAG_TO_KEY = {
    "dataset": "dataset", "counts_csv": "counts_csv", "adjacency_csv": "adjacency_csv",
    "registry": "registry", "outdir": "outdir", "window": "window", "horizon": "horizon",
    "lambda_": "lambda", "delta": "delta", "seed": "seed", "lr": "lr",
    "weight_decay": "weight_decay", "batch_size": "batch_size",
    "max_epochs": "max_epochs", "patience": "patience", "variant": "variant",
    "residual_mode": "residual_mode", "d1": "d1", "d2": "d2", "d3": "d3",
}


def _experiment_config(args):
    file_values = parse_kv_file(args.config) if args.config else {}
    overrides = {}
    for attr, key in _FLAG_TO_KEY.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return build_experiment_config(file_values, overrides)


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _cmd_prepare(args) -> int:
    cfg = _experiment_config(args)
    bundle = experiments.load_dataset(cfg)
    tc = cfg.train
    splits = chronological_split(
        bundle.series, SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac),
        min_rows=tc.window + tc.horizon,
    )
    stats = fit_normalization(splits[0])
    values = bundle.series.values
    summary = {
        "dataset": cfg.dataset,
        "weeks": bundle.series.n_steps,
        "locations": bundle.series.n_locations,
        "min": float(values.min()),
        "max": float(values.max()),
        "mean": float(values.mean()),
        "sd": float(values.std()),
        "split_rows": {"train": splits[0].n_steps, "val": splits[1].n_steps,
                       "test": splits[2].n_steps},
        "windows": {
            part: s.n_steps - tc.window - tc.horizon + 1
            for part, s in zip(("train", "val", "test"), splits)
        },
        "constant_locations": int((stats.spread == 0).sum()),
        "config_hash": config_hash(cfg),
    }
    _emit(summary)
    return 0


def _cmd_train(args) -> int:
    cfg = _experiment_config(args)
    if not cfg.outdir:
        raise ConfigurationError("train needs an outdir (flag --outdir or config key)")
    run = experiments.run_experiment(cfg)
    payload = run.metrics_json()
    payload["checkpoint"] = run.checkpoint_path
    payload["best_epoch"] = run.train_result.best_epoch
    payload["epochs_run"] = run.train_result.epochs_run
    _emit(payload)
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _experiment_config(args)
    payload = experiments.evaluate_checkpoint(args.checkpoint, cfg)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    _emit(payload)
    return 0


def _cmd_ablate(args) -> int:
    cfg = _experiment_config(args)
    seeds = _parse_int_list(args.seeds) if args.seeds else None
    rows = experiments.run_ablation(cfg, seeds=seeds)
    if args.out:
        _write_rows_csv(
            args.out,
            [{"variant": v, "rmse": r["rmse"], "pcc": r["pcc"]} for v, r in rows.items()],
        )
    _emit(rows)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    values = _parse_value_list(args.values) if args.values else experiments.SWEEP_DEFAULTS[args.param]
    rows = experiments.run_sweep(cfg, args.param, values, workers=args.workers)
    if args.out:
        _write_rows_csv(args.out, rows)
    _emit(rows)
    return 0


def _cmd_simulate(args) -> int:
    from .simulate import default_benchmark, ring_adjacency, write_rates_csv
    from .data import EpidemicSeries

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    traj = default_benchmark(dt=args.dt, seed=args.seed or 0)
    series = traj.to_series()
    write_csv(series, outdir / "synthetic.csv")
    adj = ring_adjacency(traj.n_locations)
    with (outdir / "synthetic_adj.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in adj:
            writer.writerow([int(v) for v in row])
    write_rates_csv(traj, outdir / "synthetic_rates.csv")
    _emit({
        "counts_csv": str(outdir / "synthetic.csv"),
        "adjacency_csv": str(outdir / "synthetic_adj.csv"),
        "rates_csv": str(outdir / "synthetic_rates.csv"),
        "weeks": traj.n_steps,
        "locations": traj.n_locations,
    })
    return 0


def _cmd_inspect_mag(args) -> int:
    import torch
    from .data import apply_normalization
    from .model import load_checkpoint
    from .training import windows_to_tensors

    model, stats, stored_cfg, _ = load_checkpoint(args.checkpoint)
    if not model.uses_transmission:
        raise ConfigurationError(
            f"variant {model.variant!r} has no affinity graph to inspect"
        )
    cfg = _experiment_config(args)
    bundle = experiments.load_dataset(cfg)
    w, h = int(stored_cfg["window"]), int(stored_cfg["horizon"])
    splits = chronological_split(
        bundle.series, SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac),
        min_rows=w + h,
    )
    part = {"train": 0, "val": 1, "test": 2}[args.split]
    windows = make_windows(apply_normalization(splits[part], stats), w, h,
                           allow_horizon_one=True)
    if not 0 <= args.index < len(windows):
        raise ConfigurationError(
            f"window index {args.index} out of range [0, {len(windows)})"
        )
    hist, _, _ = windows_to_tensors([windows[args.index]], model.dtype)
    with torch.no_grad():
        out = model(hist)
    matrix = out.mag.matrix.squeeze(0).numpy()
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_path, matrix, delimiter=",", fmt="%.8g")
    _emit({
        "out": str(out_path),
        "split": args.split,
        "index": args.index,
        "threshold": out.mag.threshold_used,
        "nonzero": int((matrix != 0).sum()),
    })
    return 0


def _cmd_baseline(args) -> int:
    cfg = _experiment_config(args)
    rows = experiments.run_baselines(cfg)
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2), encoding="utf-8")
    _emit(rows)
    return 0


def _cmd_timing(args) -> int:
    sizes = _parse_int_list(args.sizes)
    rows = experiments.measure_forward_latency(
        sizes, window=args.window or 20, repeats=args.repeats
    )
    if args.out:
        _write_rows_csv(args.out, rows)
    _emit(rows)
    return 0


def _cmd_plot(args) -> int:
    from . import plots

    if args.kind == "sweep":
        with open(args.input, newline="", encoding="utf-8") as fh:
            rows = []
            for row in csv.DictReader(fh):
                rows.append({
                    "param": row.get("param", "value"),
                    "value": float(row["value"]),
                    "rmse": float(row["rmse"]),
                    "pcc": float(row["pcc"]) if row.get("pcc") not in (None, "", "None") else None,
                })
        path = plots.plot_sweep(rows, args.out)
        _emit({"out": str(path)})
        return 0

    from .model import load_checkpoint, predict_series

    model, stats, stored_cfg, location_ids = load_checkpoint(args.checkpoint)
    cfg = _experiment_config(args)
    bundle = experiments.load_dataset(cfg)
    w, h = int(stored_cfg["window"]), int(stored_cfg["horizon"])
    splits = chronological_split(
        bundle.series, SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac),
        min_rows=w + h,
    )
    preds, truth, anchors = predict_series(model, splits[2], stats, w, h)
    locations = _parse_int_list(args.locations) if args.locations else None
    paths = plots.plot_forecasts(preds, truth, anchors, location_ids, args.out, h,
                                 locations=locations)
    _emit({"out": [str(p) for p in paths]})
    return 0


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _parse_value_list(text: str) -> list[float]:
    """Comma list ('0,0.2,0.4') or inclusive integer range ('1..6')."""
    text = text.strip()
    if ".." in text and "," not in text:
        lo, hi = text.split("..", 1)
        return [float(v) for v in range(int(lo), int(hi) + 1)]
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _write_rows_csv(path: str, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def build_parser() -> _Parser:
    parser = _Parser(prog="heatgnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate a dataset and print its census")
    _add_override_flags(p)
    p.set_defaults(fn=_cmd_prepare)

    p = sub.add_parser("train", help="train one model; writes checkpoint + logs")
    _add_override_flags(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("evaluate", help="metrics JSON for a stored checkpoint")
    _add_override_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("ablate", help="run the full/no_pl/no_tg/no_tp variants")
    _add_override_flags(p)
    p.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
    p.add_argument("--out", help="write variant metrics CSV here")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("sweep", help="iterate one hyperparameter over a grid")
    _add_override_flags(p)
    p.add_argument("--param", required=True, choices=sorted(experiments.SWEEP_DEFAULTS))
    p.add_argument("--values", help="comma list (0,0.2,0.4) or int range (1..6)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write metric rows CSV here")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("simulate", help="emit the synthetic benchmark dataset")
    p.add_argument("--outdir", required=True)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("inspect-mag", help="dump one window's affinity graph as CSV")
    _add_override_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_inspect_mag)

    p = sub.add_parser("baseline", help="AR/GAR/persistence metrics on the test split")
    _add_override_flags(p)
    p.add_argument("--out", help="write baseline metrics JSON here")
    p.set_defaults(fn=_cmd_baseline)

    p = sub.add_parser("timing", help="forward-pass latency vs location count")
    p.add_argument("--sizes", default="10,20,50,100")
    p.add_argument("--window", type=int)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--out", help="write timing rows CSV here")
    p.set_defaults(fn=_cmd_timing)

    p = sub.add_parser("plot", help="render forecast or sweep figures to files")
    _add_override_flags(p)
    p.add_argument("kind", choices=("forecasts", "sweep"))
    p.add_argument("--checkpoint", help="checkpoint (forecasts)")
    p.add_argument("--input", help="sweep CSV (sweep)")
    p.add_argument("--locations", help="comma-separated location indices")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
