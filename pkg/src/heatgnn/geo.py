"""Static geographic adjacency: loading, validation and the propagation operator."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError


@dataclass(frozen=True)
class GeoAdjacency:
    """Symmetric binary N x N adjacency with a zero diagonal. Self-loops are
    added by consumers (inside the propagation operator), never stored here."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DataValidationError(f"adjacency must be square, got shape {m.shape}")
        if not np.isin(m, (0.0, 1.0)).all():
            raise DataValidationError("adjacency entries must be 0 or 1")
        if not np.array_equal(m, m.T):
            raise DataValidationError("adjacency must be symmetric")
        if np.diagonal(m).any():
            raise DataValidationError("adjacency diagonal must be zero")

    @property
    def n_locations(self) -> int:
        return self.matrix.shape[0]


def load_adjacency(path: str | Path) -> GeoAdjacency:
    """Read an N x N 0/1 CSV (no header). Asymmetric input is symmetrized by
    logical OR with a warning; nonzero diagonals are dropped with a warning."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"adjacency file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataValidationError(f"{path}: empty adjacency file")
    n = len(rows)
    matrix = np.zeros((n, n), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise DataValidationError(
                f"{path}: line {i + 1}: expected {n} fields, got {len(row)} (matrix must be square)"
            )
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise DataValidationError(f"{path}: line {i + 1}: non-numeric entry {cell!r}") from None
            if value not in (0.0, 1.0):
                raise DataValidationError(
                    f"{path}: line {i + 1}: entry {value} is not binary"
                )
            matrix[i, j] = value
    if not np.array_equal(matrix, matrix.T):
        warnings.warn(f"{path}: asymmetric adjacency symmetrized by logical OR")
        matrix = np.maximum(matrix, matrix.T)
    if np.diagonal(matrix).any():
        warnings.warn(f"{path}: dropping nonzero diagonal entries (self-loops)")
        np.fill_diagonal(matrix, 0.0)
    return GeoAdjacency(matrix=matrix)


def propagation_operator(adj: GeoAdjacency) -> np.ndarray:
    """Symmetrically normalized propagation matrix D^{-1/2} (A + I) D^{-1/2}
    where D is the degree matrix of A + I. Isolated nodes reduce to a pure
    self-loop row."""
    a_hat = adj.matrix + np.eye(adj.n_locations)
    deg = a_hat.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    return d_inv_sqrt[:, None] * a_hat * d_inv_sqrt[None, :]
