"""Spatio-temporal encoder over the geographic graph.

Maps a history window and the geographic propagation operator to one
embedding row per location: a causal temporal convolution stack shared
across locations, then graph mixing layers with residual connections,
then mean pooling over time. Bounded (tanh) activations keep the output
well scaled for the downstream cosine-affinity computation.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F


class STEncoder(nn.Module):
    """Spatio-temporal graph encoder producing N x D1 embeddings.

    Args:
        d1: embedding width per location.
        temporal_layers: number of causal Conv1d layers (kernel 3).
        graph_layers: number of residual graph mixing layers.
    """

    def __init__(self, d1: int = 32, temporal_layers: int = 2, graph_layers: int = 2,
                 kernel_size: int = 3):
        super().__init__()
        self.kernel_size = kernel_size
        convs = []
        for i in range(temporal_layers):
            convs.append(nn.Conv1d(1 if i == 0 else d1, d1, kernel_size))
        self.temporal = nn.ModuleList(convs)
        self.graph = nn.ModuleList(nn.Linear(d1, d1) for _ in range(graph_layers))

    def forward(self, prop: torch.Tensor, history: torch.Tensor) -> torch.Tensor:
        """prop: (N, N) propagation matrix; history: (w, N) or (B, w, N).

        Returns (N, D1) or (B, N, D1) matching the input batchness.
        """
        squeeze = history.dim() == 2
        if squeeze:
            history = history.unsqueeze(0)
        if history.dim() != 3:
            raise ValueError(f"history must be (w, N) or (B, w, N), got {tuple(history.shape)}")
        b, w, n = history.shape
        if prop.shape != (n, n):
            raise ValueError(
                f"propagation matrix {tuple(prop.shape)} does not match {n} locations"
            )
        # shared per-location temporal convs; left padding keeps them causal
        x = history.permute(0, 2, 1).reshape(b * n, 1, w)
        for conv in self.temporal:
            x = torch.tanh(conv(F.pad(x, (self.kernel_size - 1, 0))))
        d1 = x.shape[1]
        x = x.reshape(b, n, d1, w).permute(0, 3, 1, 2)  # (B, w, N, D1)
        for lin in self.graph:
            x = torch.tanh(lin(torch.einsum("ij,bwjd->bwid", prop, x)) + x)
        out = x.mean(dim=1)
        return out.squeeze(0) if squeeze else out
