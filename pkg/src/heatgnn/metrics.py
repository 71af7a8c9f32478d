"""Evaluation metrics in real (denormalized) units, plus statistical baselines.

RMSE and PCC are computed over the flattened (time x location) test
predictions, one number per (dataset, horizon) cell. The AR/GAR baselines fit
direct multi-step lag regressions; persistence simply repeats the last
observed value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import EpidemicSeries
from .errors import ConfigurationError, DataValidationError

_RIDGE = 1e-6


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    pcc: float | None
    n_samples: int

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "pcc": self.pcc, "n_samples": self.n_samples}


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Root mean squared error over flattened vectors."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.size == 0:
        raise DataValidationError("rmse of empty input")
    if pred.shape != truth.shape:
        raise DataValidationError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def pcc(pred: np.ndarray, truth: np.ndarray) -> float | None:
    """Pearson correlation coefficient, or None when either side has zero
    variance (undefined; never a silent NaN)."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.size == 0:
        raise DataValidationError("pcc of empty input")
    if pred.shape != truth.shape:
        raise DataValidationError(f"shape mismatch {pred.shape} vs {truth.shape}")
    dp = pred - pred.mean()
    dt = truth - truth.mean()
    denom = np.sqrt((dp**2).sum()) * np.sqrt((dt**2).sum())
    if denom == 0.0:
        return None
    return float((dp * dt).sum() / denom)


def report(pred: np.ndarray, truth: np.ndarray) -> MetricReport:
    return MetricReport(rmse=rmse(pred, truth), pcc=pcc(pred, truth),
                        n_samples=int(np.asarray(pred).size))


def _lag_design(values: np.ndarray, order: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Direct multi-step design: rows [x_{t-order+1..t}, 1] -> x_{t+h},
    per location, stacked along axis 0 as (n_anchors, N, order+1)."""
    t_len, n = values.shape
    anchors = range(order - 1, t_len - h)
    feats = np.stack([values[a - order + 1 : a + 1].T for a in anchors])  # (S, N, order)
    ones = np.ones((*feats.shape[:2], 1))
    targets = np.stack([values[a + h] for a in anchors])  # (S, N)
    return np.concatenate([feats, ones], axis=2), targets


def _solve_least_squares(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        warnings.warn("singular lag regression; falling back to ridge 1e-6")
        gram = x.T @ x + _RIDGE * np.eye(x.shape[1])
        coef = np.linalg.solve(gram, x.T @ y)
    return coef


def _fit_predict_lags(
    fit_values: np.ndarray, eval_values: np.ndarray, order: int, h: int, shared: bool
) -> tuple[np.ndarray, np.ndarray]:
    if fit_values.shape[0] < order + h:
        raise ConfigurationError(
            f"fit region has {fit_values.shape[0]} rows, needs {order + h}"
        )
    x_fit, y_fit = _lag_design(fit_values, order, h)
    x_eval, y_eval = _lag_design(eval_values, order, h)
    n = fit_values.shape[1]
    preds = np.empty_like(y_eval)
    if shared:
        coef = _solve_least_squares(
            x_fit.reshape(-1, order + 1), y_fit.reshape(-1)
        )
        preds = x_eval.reshape(-1, order + 1) @ coef
        preds = preds.reshape(y_eval.shape)
    else:
        for j in range(n):
            coef = _solve_least_squares(x_fit[:, j, :], y_fit[:, j])
            preds[:, j] = x_eval[:, j, :] @ coef
    return preds, y_eval


def ar_baseline(
    train: EpidemicSeries, val: EpidemicSeries, test: EpidemicSeries,
    w: int, h: int, order: int | None = None,
) -> MetricReport:
    """Per-location direct multi-step lag regression fitted on train+val rows,
    evaluated on windows inside the test split. order defaults to w so sample
    alignment matches the learned model's test windows."""
    return _baseline(train, val, test, w, h, order, shared=False)


def gar_baseline(
    train: EpidemicSeries, val: EpidemicSeries, test: EpidemicSeries,
    w: int, h: int, order: int | None = None,
) -> MetricReport:
    """Like ar_baseline but with one coefficient vector shared across locations."""
    return _baseline(train, val, test, w, h, order, shared=True)


def _baseline(train, val, test, w, h, order, shared) -> MetricReport:
    order = w if order is None else order
    if order > w:
        raise ConfigurationError(f"lag order {order} exceeds window {w}")
    fit_values = np.vstack([train.values, val.values])
    preds, truth = _fit_predict_lags(fit_values, test.values, order, h, shared)
    # align with learned-model windows: anchors with a full w-row history
    skip = w - order
    preds, truth = preds[skip:], truth[skip:]
    return report(preds, truth)


def persistence_baseline(test: EpidemicSeries, w: int, h: int) -> MetricReport:
    """Forecast y_{t+h} = x_t over the test windows; the weakest sane reference."""
    values = test.values
    t_len = values.shape[0]
    if t_len < w + h:
        raise ConfigurationError(f"test split has {t_len} rows, needs {w + h}")
    anchors = np.arange(w - 1, t_len - h)
    preds = values[anchors]
    truth = values[anchors + h]
    return report(preds, truth)
