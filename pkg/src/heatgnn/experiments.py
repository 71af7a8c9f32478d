"""Experiment orchestration: wiring data, model, trainer and metrics together
for the CLI commands (train/evaluate/ablate/sweep) and the test harness."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import metrics as metrics_mod
from .config import ExperimentConfig, config_hash, resolve_dataset_paths
from .data import (
    EpidemicSeries, NormalizationStats, SplitSpec, apply_normalization,
    chronological_split, fit_normalization, load_csv, make_windows,
)
from .errors import ConfigurationError
from .geo import GeoAdjacency, load_adjacency
from .metrics import MetricReport
from .model import HeatGNN, load_checkpoint, predict_series, save_checkpoint
from .training import TrainConfig, TrainResult, train, windows_to_tensors

ABLATION_VARIANTS = ("full", "no_pl", "no_tg", "no_tp")
SWEEP_DEFAULTS = {
    "window": [20, 30, 40, 50, 60],
    "horizon": [1, 2, 3, 4, 5, 6],
    "lambda": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
    "delta": [0.0, 0.2, 0.4, 0.6, 0.8],
}


@dataclass
class DatasetBundle:
    series: EpidemicSeries
    adjacency: GeoAdjacency
    name: str


@dataclass
class PreparedData:
    stats: NormalizationStats
    splits: tuple[EpidemicSeries, EpidemicSeries, EpidemicSeries]
    train_tensors: tuple
    val_tensors: tuple


@dataclass
class ForecastRun:
    """Artifacts of one (dataset, horizon) experiment."""

    config: dict
    config_hash: str
    metrics: MetricReport
    predictions: np.ndarray
    truth: np.ndarray
    train_result: TrainResult
    checkpoint_path: str | None = None

    def metrics_json(self) -> dict:
        return {
            "dataset": self.config.get("dataset"),
            "horizon": self.config.get("horizon"),
            "seed": self.config.get("seed"),
            "rmse": self.metrics.rmse,
            "pcc": self.metrics.pcc,
            "n_samples": self.metrics.n_samples,
            "config_hash": self.config_hash,
        }


def load_dataset(cfg: ExperimentConfig) -> DatasetBundle:
    counts_path, adjacency_path = resolve_dataset_paths(cfg)
    series = load_csv(counts_path)
    adjacency = load_adjacency(adjacency_path)
    if adjacency.n_locations != series.n_locations:
        raise ConfigurationError(
            f"adjacency is {adjacency.n_locations}x{adjacency.n_locations} but the "
            f"series has {series.n_locations} locations"
        )
    return DatasetBundle(series=series, adjacency=adjacency, name=cfg.dataset)


def prepare_data(
    series: EpidemicSeries, tc: TrainConfig, split: SplitSpec,
    dtype: torch.dtype = torch.float32,
) -> PreparedData:
    """Chronological split, train-only normalization, per-split windowing."""
    min_rows = tc.window + tc.horizon
    splits = chronological_split(series, split, min_rows=min_rows)
    stats = fit_normalization(splits[0])
    allow_h1 = tc.horizon == 1
    windows = [
        make_windows(apply_normalization(part, stats), tc.window, tc.horizon,
                     allow_horizon_one=allow_h1)
        for part in splits
    ]
    return PreparedData(
        stats=stats,
        splits=splits,
        train_tensors=windows_to_tensors(windows[0], dtype),
        val_tensors=windows_to_tensors(windows[1], dtype),
    )


def build_model(adjacency: GeoAdjacency, tc: TrainConfig,
                dtype: torch.dtype = torch.float32) -> HeatGNN:
    """Seeded construction so Xavier draws are reproducible."""
    torch.manual_seed(tc.seed)
    return HeatGNN(
        adjacency,
        d1=tc.d1, d2=tc.d2, d3=tc.d3, htgn_channels=tc.htgn_channels,
        mag_threshold=tc.mag_threshold, variant=tc.variant,
        head_layers=tc.head_layers, dtype=dtype,
    )


def run_experiment(cfg: ExperimentConfig, bundle: DatasetBundle | None = None,
                   write_artifacts: bool = True) -> ForecastRun:
    """Train one model and evaluate it on the test split in real units."""
    if bundle is None:
        bundle = load_dataset(cfg)
    tc = cfg.train
    prepared = prepare_data(bundle.series, tc, _split_spec(cfg))
    model = build_model(bundle.adjacency, tc)

    outdir = Path(cfg.outdir) if cfg.outdir and write_artifacts else None
    log_path = outdir / "train_log.csv" if outdir else None
    result = train(model, prepared.train_tensors, prepared.val_tensors, tc,
                   log_path=log_path)

    test_series = prepared.splits[2]
    preds, truth, _ = predict_series(model, test_series, prepared.stats,
                                     tc.window, tc.horizon)
    run = ForecastRun(
        config=cfg.to_flat_dict(),
        config_hash=config_hash(cfg),
        metrics=metrics_mod.report(preds, truth),
        predictions=preds,
        truth=truth,
        train_result=result,
    )
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
        ckpt = outdir / "checkpoint.pt"
        save_checkpoint(ckpt, model, prepared.stats, run.config,
                        bundle.series.location_ids, bundle.adjacency)
        run.checkpoint_path = str(ckpt)
        (outdir / "metrics.json").write_text(
            json.dumps(run.metrics_json(), indent=2), encoding="utf-8"
        )
    return run


def _split_spec(cfg: ExperimentConfig) -> SplitSpec:
    return SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac)


def run_ablation(cfg: ExperimentConfig, seeds: list[int] | None = None) -> dict[str, dict]:
    """Train {full, no_pl, no_tg, no_tp} under the same seeds; mean metrics."""
    bundle = load_dataset(cfg)
    seeds = seeds or [cfg.train.seed]
    rows: dict[str, dict] = {}
    for variant in ABLATION_VARIANTS:
        per_seed = []
        for seed in seeds:
            variant_cfg = _with_train(cfg, variant=variant, seed=seed)
            run = run_experiment(variant_cfg, bundle=bundle, write_artifacts=False)
            per_seed.append(run.metrics_json())
        rows[variant] = {
            "rmse": float(np.mean([r["rmse"] for r in per_seed])),
            "pcc": _mean_or_none([r["pcc"] for r in per_seed]),
            "seeds": seeds,
            "per_seed": per_seed,
        }
    return rows


def run_sweep(cfg: ExperimentConfig, param: str, values: list[float],
              workers: int = 1) -> list[dict]:
    """Train once per grid value of one hyperparameter; returns metric rows."""
    if param not in SWEEP_DEFAULTS:
        raise ConfigurationError(
            f"sweep parameter must be one of {sorted(SWEEP_DEFAULTS)}, got {param!r}"
        )
    jobs = [(cfg, param, value) for value in values]
    if workers > 1:
        import concurrent.futures
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, jobs))
    return [_sweep_cell(job) for job in jobs]


def _sweep_cell(job) -> dict:
    cfg, param, value = job
    updates = {
        "window": {"window": int(value)},
        "horizon": {"horizon": int(value)},
        "lambda": {"physics_weight": float(value)},
        "delta": {"mag_threshold": float(value)},
    }[param]
    run = run_experiment(_with_train(cfg, **updates), write_artifacts=False)
    row = run.metrics_json()
    row["param"] = param
    row["value"] = value
    return row


def _with_train(cfg: ExperimentConfig, **updates) -> ExperimentConfig:
    train_dict = cfg.train.to_dict()
    train_dict.update(updates)
    return ExperimentConfig(
        dataset=cfg.dataset, counts_csv=cfg.counts_csv, adjacency_csv=cfg.adjacency_csv,
        outdir=cfg.outdir, registry=cfg.registry,
        train_frac=cfg.train_frac, val_frac=cfg.val_frac, test_frac=cfg.test_frac,
        train=TrainConfig(**train_dict),
    )


def _mean_or_none(values) -> float | None:
    kept = [v for v in values if v is not None]
    return float(np.mean(kept)) if kept else None


def run_baselines(cfg: ExperimentConfig) -> dict[str, dict]:
    """AR, GAR and persistence baselines on the test split."""
    bundle = load_dataset(cfg)
    tc = cfg.train
    splits = chronological_split(bundle.series, _split_spec(cfg),
                                 min_rows=tc.window + tc.horizon)
    out = {}
    for name, fn in (("ar", metrics_mod.ar_baseline), ("gar", metrics_mod.gar_baseline)):
        rep = fn(splits[0], splits[1], splits[2], tc.window, tc.horizon)
        out[name] = rep.to_dict()
    out["persistence"] = metrics_mod.persistence_baseline(
        splits[2], tc.window, tc.horizon
    ).to_dict()
    return out


def measure_forward_latency(sizes: list[int], window: int = 20, repeats: int = 20,
                            seed: int = 0) -> list[dict]:
    """Median forward-pass wall time against the number of locations."""
    from .simulate import ring_adjacency

    rows = []
    for n in sizes:
        torch.manual_seed(seed)
        adjacency = GeoAdjacency(matrix=ring_adjacency(n))
        model = HeatGNN(adjacency)
        history = torch.rand(1, window, n)
        with torch.no_grad():
            for _ in range(3):
                model(history)
            times = []
            for _ in range(repeats):
                start = time.perf_counter()
                model(history)
                times.append(time.perf_counter() - start)
        rows.append({"n_locations": n, "median_seconds": float(np.median(times)),
                     "repeats": repeats})
    return rows


def evaluate_checkpoint(checkpoint: str | Path, cfg: ExperimentConfig) -> dict:
    """Metrics JSON for a stored checkpoint on the configured dataset."""
    model, stats, stored_cfg, _ = load_checkpoint(checkpoint)
    bundle = load_dataset(cfg)
    w, h = int(stored_cfg["window"]), int(stored_cfg["horizon"])
    splits = chronological_split(bundle.series, _split_spec(cfg), min_rows=w + h)
    preds, truth, _ = predict_series(model, splits[2], stats, w, h)
    rep = metrics_mod.report(preds, truth)
    return {
        "dataset": cfg.dataset or stored_cfg.get("dataset"),
        "horizon": h,
        "seed": stored_cfg.get("seed"),
        "rmse": rep.rmse,
        "pcc": rep.pcc,
        "n_samples": rep.n_samples,
        "config_hash": config_hash(stored_cfg),
    }
