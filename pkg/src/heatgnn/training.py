"""Optimization loop: Adam with weight decay, seeded shuffling, validation
early stopping with best-epoch restoration, plus grid search and multi-seed
averaging helpers."""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .data import WindowedSample, stack_windows
from .errors import ConfigurationError, TrainingDivergedError
from .losses import combined_loss, forecast_loss, RESIDUAL_MODES
from .model import HeatGNN, VARIANTS


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    lr: float = 1e-3
    weight_decay: float = 5e-4
    batch_size: int = 32
    max_epochs: int = 1500
    patience: int = 200
    physics_weight: float = 0.5
    mag_threshold: float = 0.2
    window: int = 20
    horizon: int = 5
    seed: int = 0
    d1: int = 32
    d2: int = 16
    d3: int = 32
    htgn_channels: int = 16
    head_layers: int = 2
    variant: str = "full"
    residual_mode: str = "observed"

    def __post_init__(self):
        positives = {
            "lr": self.lr, "batch_size": self.batch_size, "max_epochs": self.max_epochs,
            "patience": self.patience, "window": self.window, "horizon": self.horizon,
            "d1": self.d1, "d2": self.d2, "d3": self.d3,
            "htgn_channels": self.htgn_channels, "head_layers": self.head_layers,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if self.weight_decay < 0 or self.physics_weight < 0:
            raise ConfigurationError("weight_decay and physics_weight must be nonnegative")
        if not 0.0 <= self.mag_threshold <= 1.0:
            raise ConfigurationError(f"mag_threshold must lie in [0, 1], got {self.mag_threshold}")
        if self.patience > self.max_epochs:
            raise ConfigurationError(
                f"patience {self.patience} exceeds max_epochs {self.max_epochs}"
            )
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.residual_mode not in RESIDUAL_MODES:
            raise ConfigurationError(
                f"residual_mode must be one of {RESIDUAL_MODES}, got {self.residual_mode!r}"
            )

    @property
    def effective_physics_weight(self) -> float:
        """The loss weight actually applied: 0 for variants without physics."""
        return 0.0 if self.variant in ("no_pl", "no_tp") else self.physics_weight

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    l_g: float
    l_d: float
    l_o: float
    l_p: float
    total: float
    val_loss: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = math.inf
    epochs_run: int = 0
    stopped_early: bool = False

    @property
    def val_curve(self) -> list[float]:
        return [rec.val_loss for rec in self.history]


def windows_to_tensors(
    samples: Sequence[WindowedSample], dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(histories, targets, prev targets) as stacked tensors."""
    hist, tgt, prev = stack_windows(list(samples))
    return (
        torch.as_tensor(hist, dtype=dtype),
        torch.as_tensor(tgt, dtype=dtype),
        torch.as_tensor(prev, dtype=dtype),
    )


def _batch_breakdown(model, hist, tgt, prev, cfg):
    out = model(hist)
    return combined_loss(
        out.y_hat, tgt, out.sir, prev,
        lam=cfg.effective_physics_weight, residual_mode=cfg.residual_mode,
    )


def _check_finite(breakdown, epoch):
    for term in ("l_g", "l_d", "l_o", "total"):
        value = float(getattr(breakdown, term))
        if not math.isfinite(value):
            raise TrainingDivergedError(epoch, term, value)


def validation_forecast_loss(model, val_tensors) -> float:
    """Forecast MAE (normalized units) over the whole validation set."""
    hist, tgt, _ = val_tensors
    model.eval()
    with torch.no_grad():
        loss = float(forecast_loss(model(hist).y_hat, tgt))
    model.train()
    return loss


def train(
    model: HeatGNN,
    train_samples: Sequence[WindowedSample] | tuple,
    val_samples: Sequence[WindowedSample] | tuple,
    cfg: TrainConfig,
    val_loss_fn: Callable[[HeatGNN, int], float] | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Minimize the combined loss; restore the best-validation parameters.

    Validation uses the forecast MAE by default; a custom val_loss_fn(model,
    epoch) can replace it (the early-stopping harness does). Stops after
    `patience` epochs without improvement and raises TrainingDivergedError
    on a non-finite loss term.
    """
    train_tensors = (
        train_samples if isinstance(train_samples, tuple)
        else windows_to_tensors(train_samples, model.dtype)
    )
    val_tensors = (
        val_samples if isinstance(val_samples, tuple)
        else windows_to_tensors(val_samples, model.dtype)
    )
    hist, tgt, prev = train_tensors
    n_samples = hist.shape[0]
    if n_samples == 0:
        raise ConfigurationError("no training samples")

    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay
    )
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult()
    best_state = copy.deepcopy(model.state_dict())

    writer = None
    log_file = None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_file = log_path.open("w", newline="", encoding="utf-8")
        writer = csv.writer(log_file)
        writer.writerow(["epoch", "l_g", "l_d", "l_o", "l_p", "total", "val_loss"])

    try:
        for epoch in range(1, cfg.max_epochs + 1):
            perm = rng.permutation(n_samples)
            sums = {"l_g": 0.0, "l_d": 0.0, "l_o": 0.0, "l_p": 0.0, "total": 0.0}
            n_batches = 0
            for start in range(0, n_samples, cfg.batch_size):
                idx = torch.as_tensor(perm[start : start + cfg.batch_size])
                breakdown = _batch_breakdown(model, hist[idx], tgt[idx], prev[idx], cfg)
                _check_finite(breakdown, epoch)
                optimizer.zero_grad()
                breakdown.total.backward()
                optimizer.step()
                for key in sums:
                    sums[key] += float(getattr(breakdown, key))
                n_batches += 1

            if val_loss_fn is not None:
                val = float(val_loss_fn(model, epoch))
            else:
                val = validation_forecast_loss(model, val_tensors)
            if not math.isfinite(val):
                raise TrainingDivergedError(epoch, "val_loss", val)

            record = EpochRecord(
                epoch=epoch,
                **{k: v / n_batches for k, v in sums.items()},
                val_loss=val,
            )
            result.history.append(record)
            result.epochs_run = epoch
            if writer is not None:
                writer.writerow([
                    record.epoch, record.l_g, record.l_d, record.l_o,
                    record.l_p, record.total, record.val_loss,
                ])

            if val < result.best_val:
                result.best_val = val
                result.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
            elif epoch - result.best_epoch >= cfg.patience:
                result.stopped_early = True
                break
    finally:
        if log_file is not None:
            log_file.close()

    model.load_state_dict(best_state)
    return result


@dataclass
class GridSearchResult:
    best_config: TrainConfig
    best_score: float
    scores: list[float]


def grid_search(
    configs: Sequence[TrainConfig], evaluate: Callable[[TrainConfig], float]
) -> GridSearchResult:
    """Exhaustive search; ties keep the earliest grid entry."""
    configs = list(configs)
    if not configs:
        raise ConfigurationError("empty hyperparameter grid")
    scores = [float(evaluate(cfg)) for cfg in configs]
    best_idx = min(range(len(scores)), key=lambda k: (scores[k], k))
    return GridSearchResult(
        best_config=configs[best_idx], best_score=scores[best_idx], scores=scores
    )


def average_over_seeds(
    run: Callable[[int], dict], seeds: Sequence[int]
) -> dict:
    """Run one experiment per seed and average numeric metrics.

    `run(seed)` must return a flat dict of metric values (None entries are
    skipped). Returns {"per_seed": [...], "mean": {...}, "std": {...}}.
    """
    if not seeds:
        raise ConfigurationError("no seeds given")
    per_seed = [run(seed) for seed in seeds]
    keys = [k for k, v in per_seed[0].items() if isinstance(v, (int, float))]
    mean, std = {}, {}
    for key in keys:
        values = [r[key] for r in per_seed if r.get(key) is not None]
        if values:
            mean[key] = float(np.mean(values))
            std[key] = float(np.std(values))
    return {"per_seed": per_seed, "mean": mean, "std": std}
