"""End-to-end model assembly, prediction helpers and checkpoint archive.

The forward pass chains the spatio-temporal encoder, the SIR heads, the
affinity graph pipeline and the transmission network, then decodes the
concatenated embeddings with a single affine map. Ablation variants drop
parts of that chain:

  full   - everything
  no_pl  - same architecture, physics loss weight forced to 0 by the trainer
  no_tg  - no affinity graph / transmission network; SIR heads kept so the
           physics loss still guides the encoder
  no_tp  - encoder and decoder only
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .data import EpidemicSeries, NormalizationStats, apply_normalization, invert_normalization, make_windows, stack_windows
from .eiel import EielModule, SIRPrediction
from .errors import ConfigurationError
from .geo import GeoAdjacency, propagation_operator
from .htgn import HTGN
from .mag import AffinityGraph, build_affinity_graph
from .st_encoder import STEncoder

VARIANTS = ("full", "no_pl", "no_tg", "no_tp")


@dataclass
class ForecastOutput:
    """One forward pass: decoder output plus the intermediate products."""

    y_hat: torch.Tensor
    sir: SIRPrediction | None
    mag: AffinityGraph | None


def xavier_init_(module: nn.Module) -> None:
    """Xavier-uniform weights, zero biases, on every parameterized layer."""
    if isinstance(module, (nn.Linear, nn.Conv1d)):
        nn.init.xavier_uniform_(module.weight)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


class HeatGNN(nn.Module):
    """Heterogeneity-aware epidemic forecaster.

    Args:
        adjacency: geographic adjacency for the encoder.
        d1/d2/d3: encoder, SIR-head and transmission embedding widths.
        htgn_channels: hidden width of the first transmission block.
        mag_threshold: affinity sparsification threshold.
        variant: one of VARIANTS.
        head_layers: hidden layers per SIR head.
    """

    def __init__(
        self,
        adjacency: GeoAdjacency,
        d1: int = 32,
        d2: int = 16,
        d3: int = 32,
        htgn_channels: int = 16,
        mag_threshold: float = 0.2,
        variant: str = "full",
        head_layers: int = 2,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        if variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
        if not 0.0 <= mag_threshold <= 1.0:
            raise ConfigurationError(f"mag threshold must lie in [0, 1], got {mag_threshold}")
        self.variant = variant
        self.mag_threshold = mag_threshold
        self.n_locations = adjacency.n_locations
        self.register_buffer(
            "geo_prop", torch.as_tensor(propagation_operator(adjacency), dtype=dtype)
        )

        self.st_encoder = STEncoder(d1=d1)
        self.uses_sir = variant != "no_tp"
        self.uses_transmission = variant in ("full", "no_pl")
        self.eiel = EielModule(d1=d1, d2=d2) if self.uses_sir else None
        self.htgn = HTGN(channels=htgn_channels, d3=d3) if self.uses_transmission else None
        decoder_in = d1 + (d3 if self.uses_transmission else 0)
        self.decoder = nn.Linear(decoder_in, 1)

        self.apply(xavier_init_)
        self.to(dtype)

    def forward(self, history: torch.Tensor) -> ForecastOutput:
        """history: (w, N) or (B, w, N) normalized counts."""
        squeeze = history.dim() == 2
        if squeeze:
            history = history.unsqueeze(0)
        if history.shape[-1] != self.n_locations:
            raise ValueError(
                f"history has {history.shape[-1]} locations, model expects {self.n_locations}"
            )
        p = self.st_encoder(self.geo_prop, history)

        sir = None
        mag = None
        parts = [p]
        if self.uses_sir:
            emb = self.eiel.embed(p)
            sir = self.eiel.predict(emb)
            if self.uses_transmission:
                mag = build_affinity_graph(emb, self.mag_threshold)
                parts.append(self.htgn(mag.matrix, history))
        y_hat = self.decoder(torch.cat(parts, dim=-1)).squeeze(-1)

        if squeeze:
            y_hat = y_hat.squeeze(0)
            if sir is not None:
                sir = SIRPrediction(
                    s=sir.s.squeeze(0), i_prev=sir.i_prev.squeeze(0), i=sir.i.squeeze(0),
                    r=sir.r.squeeze(0), beta=sir.beta.squeeze(0), gamma=sir.gamma.squeeze(0),
                )
            if mag is not None:
                mag = AffinityGraph(mag.matrix.squeeze(0), mag.threshold_used)
        return ForecastOutput(y_hat=y_hat, sir=sir, mag=mag)

    @property
    def dtype(self) -> torch.dtype:
        return self.geo_prop.dtype


def predict_series(
    model: HeatGNN,
    series: EpidemicSeries,
    stats: NormalizationStats,
    w: int,
    h: int,
    batch_size: int = 256,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forecast every window of a raw-count series and invert to real units.

    Returns (predictions, truth, anchors), predictions and truth with shape
    (n_windows, N) in persons/week.
    """
    normalized = apply_normalization(series, stats)
    samples = make_windows(normalized, w, h, allow_horizon_one=True)
    hist, _, _ = stack_windows(samples)
    anchors = np.array([s.anchor_t for s in samples])
    preds = []
    model.eval()
    with torch.no_grad():
        for start in range(0, hist.shape[0], batch_size):
            chunk = torch.as_tensor(hist[start : start + batch_size], dtype=model.dtype)
            preds.append(model(chunk).y_hat.numpy())
    model.train()
    pred_norm = np.concatenate(preds, axis=0)
    pred_real = invert_normalization(pred_norm, stats)
    truth_real = series.values[anchors + h]
    return pred_real, truth_real, anchors


def save_checkpoint(
    path: str | Path,
    model: HeatGNN,
    stats: NormalizationStats,
    config: dict,
    location_ids: list[str],
    adjacency: GeoAdjacency,
) -> None:
    """Single self-describing archive: parameters + config + normalization."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state_dict": model.state_dict(),
            "config": dict(config),
            "location_ids": list(location_ids),
            "adjacency": adjacency.matrix.tolist(),
            "norm_min": stats.per_location_min.tolist(),
            "norm_max": stats.per_location_max.tolist(),
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[HeatGNN, NormalizationStats, dict, list[str]]:
    """Rebuild a model (and its normalization stats) from a checkpoint."""
    payload = torch.load(Path(path), weights_only=False)
    cfg = payload["config"]
    adjacency = GeoAdjacency(matrix=np.asarray(payload["adjacency"]))
    model = HeatGNN(
        adjacency,
        d1=cfg["d1"], d2=cfg["d2"], d3=cfg["d3"],
        htgn_channels=cfg.get("htgn_channels", 16),
        mag_threshold=cfg["delta"],
        variant=cfg.get("variant", "full"),
    )
    model.load_state_dict(payload["state_dict"])
    stats = NormalizationStats(
        per_location_min=np.asarray(payload["norm_min"]),
        per_location_max=np.asarray(payload["norm_max"]),
    )
    return model, stats, cfg, payload["location_ids"]
