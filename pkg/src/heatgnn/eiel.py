"""Epidemiology-informed embedding heads.

Five independent MLP stacks map each location's spatio-temporal embedding to
one embedding block per SIR quantity (susceptible, infected, recovered,
infection rate, recovery rate), and per-variable output layers turn those
blocks into the predicted quantities. Output activations enforce the sign
constraints the SIR equations presume: softplus for compartments, sigmoid
for rates. The infected head emits two values, the infected level at the
target step and at the step before it, so a discrete time derivative is
available to the ODE residual.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

VARIABLE_ORDER = ("susceptible", "infected", "recovered", "infection_rate", "recovery_rate")


@dataclass
class SIRPrediction:
    """Per-location predicted SIR quantities at the target step.

    All tensors share shape (N,) or (B, N). Compartments are in normalized
    infection units; beta/gamma are weekly rates strictly inside (0, 1).
    """

    s: torch.Tensor
    i_prev: torch.Tensor
    i: torch.Tensor
    r: torch.Tensor
    beta: torch.Tensor
    gamma: torch.Tensor


class EielModule(nn.Module):
    """The five per-variable head networks.

    Args:
        d1: input embedding width.
        d2: per-variable embedding width.
        n_layers: hidden layers per head (tanh).
    """

    def __init__(self, d1: int = 32, d2: int = 16, n_layers: int = 2):
        super().__init__()
        self.d2 = d2

        def stack():
            layers = []
            width = d1
            for _ in range(n_layers):
                layers += [nn.Linear(width, d2), nn.Tanh()]
                width = d2
            return nn.Sequential(*layers)

        self.heads = nn.ModuleList(stack() for _ in VARIABLE_ORDER)
        # infected output is 2-wide: (level at step t+h-1, level at step t+h)
        out_widths = (1, 2, 1, 1, 1)
        self.outputs = nn.ModuleList(nn.Linear(d2, k) for k in out_widths)

    def embed(self, st: torch.Tensor) -> torch.Tensor:
        """(..., D1) -> (..., 5*D2), blocks ordered as VARIABLE_ORDER."""
        return torch.cat([head(st) for head in self.heads], dim=-1)

    def predict(self, emb: torch.Tensor) -> SIRPrediction:
        """Per-variable output layers on the matching embedding blocks."""
        if emb.shape[-1] != 5 * self.d2:
            raise ValueError(f"expected last dim {5 * self.d2}, got {emb.shape[-1]}")
        blocks = emb.split(self.d2, dim=-1)
        s = F.softplus(self.outputs[0](blocks[0])).squeeze(-1)
        i_pair = F.softplus(self.outputs[1](blocks[1]))
        r = F.softplus(self.outputs[2](blocks[2])).squeeze(-1)
        beta = torch.sigmoid(self.outputs[3](blocks[3])).squeeze(-1)
        gamma = torch.sigmoid(self.outputs[4](blocks[4])).squeeze(-1)
        return SIRPrediction(
            s=s, i_prev=i_pair[..., 0], i=i_pair[..., 1], r=r, beta=beta, gamma=gamma
        )

    def forward(self, st: torch.Tensor) -> tuple[torch.Tensor, SIRPrediction]:
        emb = self.embed(st)
        return emb, self.predict(emb)
