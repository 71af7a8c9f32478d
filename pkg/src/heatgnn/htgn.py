"""Heterogeneous transmission graph network.

Two spatio-temporal convolution blocks propagate the raw history window over
the mechanistic affinity graph: gated (GLU) temporal convolution, graph
convolution over the self-loop-augmented renormalized affinity matrix, then
another gated temporal convolution. Temporal convolutions use kernel 3 with
no padding, so the window must keep at least one step after two blocks
(w >= 9). Mean pooling over the remaining steps yields N x D3 embeddings.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F


def affinity_propagation(mag: torch.Tensor) -> torch.Tensor:
    """Self-loop-augmented symmetric renormalization of an affinity matrix.

    mag: (..., N, N) nonnegative. Differentiable w.r.t. the entries; degrees
    stay >= 1 thanks to the added self-loops.
    """
    eye = torch.eye(mag.shape[-1], dtype=mag.dtype, device=mag.device)
    a_hat = mag + eye
    d_inv_sqrt = a_hat.sum(dim=-1).rsqrt()
    return d_inv_sqrt.unsqueeze(-1) * a_hat * d_inv_sqrt.unsqueeze(-2)


class GatedTemporalConv(nn.Module):
    """Conv1d with GLU gating, shrinking the sequence by kernel_size - 1."""

    def __init__(self, c_in, c_out, kernel_size=3):
        super().__init__()
        self.conv = nn.Conv1d(c_in, 2 * c_out, kernel_size)

    def forward(self, x):
        return F.glu(self.conv(x), dim=1)


class STBlock(nn.Module):
    """Gated temporal conv -> graph conv (ReLU) -> gated temporal conv."""

    def __init__(self, c_in, c_out, kernel_size=3):
        super().__init__()
        self.t_in = GatedTemporalConv(c_in, c_out, kernel_size)
        self.spatial = nn.Linear(c_out, c_out)
        self.t_out = GatedTemporalConv(c_out, c_out, kernel_size)

    def forward(self, x, prop):
        # x: (B, N, C, L); prop: (B, N, N)
        b, n, c, length = x.shape
        y = self.t_in(x.reshape(b * n, c, length))
        c2, l2 = y.shape[1], y.shape[2]
        y = y.reshape(b, n, c2, l2).permute(0, 3, 1, 2)  # (B, L2, N, C2)
        y = F.relu(self.spatial(torch.einsum("bij,bljc->blic", prop, y)))
        y = y.permute(0, 2, 3, 1).reshape(b * n, c2, l2)
        y = self.t_out(y)
        return y.reshape(b, n, y.shape[1], y.shape[2])


class HTGN(nn.Module):
    """Transmission embedding network over the mechanistic affinity graph.

    Args:
        channels: hidden width of the first block.
        d3: output width (second block).
    """

    def __init__(self, channels: int = 16, d3: int = 32, kernel_size: int = 3):
        super().__init__()
        self.min_window = 4 * (kernel_size - 1) + 1
        self.block1 = STBlock(1, channels, kernel_size)
        self.block2 = STBlock(channels, d3, kernel_size)

    def forward(self, mag: torch.Tensor, history: torch.Tensor) -> torch.Tensor:
        """mag: (N, N) or (B, N, N); history: (w, N) or (B, w, N).

        Returns (N, D3) or (B, N, D3).
        """
        squeeze = history.dim() == 2
        if squeeze:
            history = history.unsqueeze(0)
        if mag.dim() == 2:
            mag = mag.unsqueeze(0)
        b, w, n = history.shape
        if mag.shape[-1] != n or mag.shape[-2] != n:
            raise ValueError(
                f"affinity matrix {tuple(mag.shape)} does not match {n} locations"
            )
        if mag.shape[0] == 1 and b > 1:
            mag = mag.expand(b, n, n)
        if w < self.min_window:
            raise ValueError(f"window {w} too short; temporal convs need >= {self.min_window}")
        prop = affinity_propagation(mag)
        x = history.permute(0, 2, 1).unsqueeze(2)  # (B, N, 1, w)
        x = self.block1(x, prop)
        x = self.block2(x, prop)
        out = x.mean(dim=-1)
        return out.squeeze(0) if squeeze else out
