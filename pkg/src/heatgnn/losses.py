"""Physics-informed training objective.

The total loss combines the forecast MAE with a physics term built from the
SIR heads: a data term tying the predicted infected level to the observed
target, and an ODE residual tying the discrete infected-level derivative to
the SIR right-hand side. All terms operate in normalized units and average
over locations (and over the batch when one is present).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .eiel import SIRPrediction
from .errors import ConfigurationError

RESIDUAL_MODES = ("observed", "predicted")


@dataclass
class LossBreakdown:
    """Scalar loss terms for one batch; total = l_g + lam * l_p."""

    l_g: torch.Tensor
    l_d: torch.Tensor
    l_o: torch.Tensor
    l_p: torch.Tensor
    total: torch.Tensor
    lam: float

    def to_floats(self) -> dict:
        return {
            "l_g": float(self.l_g), "l_d": float(self.l_d), "l_o": float(self.l_o),
            "l_p": float(self.l_p), "total": float(self.total), "lambda": self.lam,
        }


def forecast_loss(y_hat: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """MAE between the decoder output and the observed target."""
    if y_hat.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(y_hat.shape)} vs {tuple(target.shape)}")
    return (y_hat - target).abs().mean()


def data_loss(sir: SIRPrediction, target: torch.Tensor) -> torch.Tensor:
    """MAE between the predicted infected level and the observed target."""
    if sir.i.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(sir.i.shape)} vs {tuple(target.shape)}")
    return (sir.i - target).abs().mean()


def ode_residual_loss(
    sir: SIRPrediction, prev_target: torch.Tensor, mode: str = "observed"
) -> torch.Tensor:
    """Mean absolute residual of the infected-level equation.

    The discrete derivative is the predicted infected level minus the value
    one step earlier: the observed count in "observed" mode (ground truth at
    the previous step exists during training), or the dedicated previous-step
    head output in "predicted" mode. The right-hand side is evaluated with
    the predicted rates and compartments at the target step, dt = 1 week.
    """
    if mode not in RESIDUAL_MODES:
        raise ConfigurationError(f"residual mode must be one of {RESIDUAL_MODES}, got {mode!r}")
    prev = prev_target if mode == "observed" else sir.i_prev
    if sir.i.shape != prev.shape:
        raise ValueError(f"shape mismatch {tuple(sir.i.shape)} vs {tuple(prev.shape)}")
    d_i = sir.i - prev
    rhs = sir.beta * sir.s * sir.i - sir.gamma * sir.i
    return (d_i - rhs).abs().mean()


def combined_loss(
    y_hat: torch.Tensor,
    target: torch.Tensor,
    sir: SIRPrediction | None,
    prev_target: torch.Tensor,
    lam: float,
    residual_mode: str = "observed",
    conservation_weight: float = 0.0,
    population: torch.Tensor | None = None,
) -> LossBreakdown:
    """Assemble the full objective. With sir=None (no SIR heads in the
    variant) the physics terms are zero. The optional conservation penalty
    |S+I+R - population| is off by default; the benchmark datasets publish
    no population, so it only applies when the caller supplies one."""
    if lam < 0:
        raise ConfigurationError(f"loss weight must be nonnegative, got {lam}")
    l_g = forecast_loss(y_hat, target)
    zero = torch.zeros((), dtype=y_hat.dtype, device=y_hat.device)
    if sir is None:
        l_d = l_o = zero
    else:
        l_d = data_loss(sir, target)
        l_o = ode_residual_loss(sir, prev_target, mode=residual_mode)
    l_p = l_d + l_o
    if conservation_weight > 0.0:
        if sir is None or population is None:
            raise ConfigurationError(
                "conservation penalty needs SIR heads and a population vector"
            )
        l_p = l_p + conservation_weight * (sir.s + sir.i + sir.r - population).abs().mean()
    total = l_g + lam * l_p
    return LossBreakdown(l_g=l_g, l_d=l_d, l_o=l_o, l_p=l_p, total=total, lam=lam)
