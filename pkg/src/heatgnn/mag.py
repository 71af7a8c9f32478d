"""Mechanistic affinity graph construction.

Pairwise cosine similarity between epidemiology-informed embeddings, clamped
to be nonnegative, symmetrically degree-normalized and threshold-sparsified.
All steps are differentiable almost everywhere so gradients reach the
embeddings that produced the graph. The graph is rebuilt from the current
embeddings on every forward pass, never cached across parameter updates.
"""

import warnings
from dataclasses import dataclass

import torch

from .errors import ConfigurationError

_EPS = 1e-12


@dataclass
class AffinityGraph:
    """Sparsified affinity matrix plus the threshold that produced it."""

    matrix: torch.Tensor
    threshold_used: float


def cosine_affinity(emb: torch.Tensor) -> torch.Tensor:
    """Pairwise cosine similarity of embedding rows, negatives clamped to 0.

    emb: (..., N, D). Returns (..., N, N) with unit diagonal. An all-zero
    row yields zero off-diagonal affinities (with a warning), not an error.
    """
    if emb.dim() < 2:
        raise ValueError(f"embeddings must be at least 2-D, got {tuple(emb.shape)}")
    norms = emb.norm(dim=-1, keepdim=True)
    if (norms.detach() == 0).any():
        warnings.warn("zero-norm embedding row; its affinities are set to 0")
    unit = emb / norms.clamp_min(_EPS)
    m = unit @ unit.transpose(-1, -2)
    m = 0.5 * (m + m.transpose(-1, -2))
    m = m.clamp(0.0, 1.0)
    eye = torch.eye(m.shape[-1], dtype=m.dtype, device=m.device)
    return m * (1.0 - eye) + eye


def normalize_affinity(m: torch.Tensor) -> torch.Tensor:
    """Symmetric degree normalization D^{-1/2} M D^{-1/2}.

    Zero-degree rows map to zero rows instead of dividing by zero. For
    nonnegative symmetric input the result stays symmetric with entries
    in [0, 1] (each entry is bounded by its own row/column degrees).
    """
    deg = m.sum(dim=-1)
    d_inv_sqrt = deg.clamp_min(_EPS).rsqrt() * (deg > 0)
    return d_inv_sqrt.unsqueeze(-1) * m * d_inv_sqrt.unsqueeze(-2)


def sparsify(m_norm: torch.Tensor, delta: float) -> AffinityGraph:
    """Zero out entries below delta, keep the rest verbatim. delta=0 is the
    identity; the diagonal gets no special treatment."""
    if not 0.0 <= delta <= 1.0:
        raise ConfigurationError(f"sparsity threshold must lie in [0, 1], got {delta}")
    mask = (m_norm >= delta).to(m_norm.dtype)
    return AffinityGraph(matrix=m_norm * mask, threshold_used=delta)


def build_affinity_graph(emb: torch.Tensor, delta: float) -> AffinityGraph:
    """Full pipeline: cosine similarity -> degree normalization -> sparsify."""
    return sparsify(normalize_affinity(cosine_affinity(emb)), delta)
