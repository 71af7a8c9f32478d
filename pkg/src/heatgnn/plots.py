"""File-based figure rendering for forecasts and sensitivity sweeps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def plot_forecasts(
    predictions: np.ndarray,
    truth: np.ndarray,
    anchors: np.ndarray,
    location_ids: list[str],
    outdir: str | Path,
    horizon: int,
    locations: list[int] | None = None,
) -> list[Path]:
    """One forecast-vs-truth line chart per requested location."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    locations = locations if locations is not None else list(range(predictions.shape[1]))
    weeks = anchors + horizon
    paths = []
    for loc in locations:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ax.plot(weeks, truth[:, loc], label="observed", color="black", lw=1.5)
        ax.plot(weeks, predictions[:, loc], label="forecast", color="tab:red", lw=1.2)
        ax.set_xlabel("week")
        ax.set_ylabel("infections / week")
        ax.set_title(f"{location_ids[loc]} (h={horizon})")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = outdir / f"forecast_{loc:03d}_{location_ids[loc]}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_sweep(rows: list[dict], out_path: str | Path) -> Path:
    """RMSE and PCC against one swept hyperparameter."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    values = [row["value"] for row in rows]
    rmses = [row["rmse"] for row in rows]
    pccs = [row["pcc"] if row["pcc"] is not None else np.nan for row in rows]
    param = rows[0].get("param", "value") if rows else "value"

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.plot(values, rmses, marker="o", color="tab:blue")
    ax1.set_xlabel(param)
    ax1.set_ylabel("RMSE")
    ax2.plot(values, pccs, marker="o", color="tab:orange")
    ax2.set_xlabel(param)
    ax2.set_ylabel("PCC")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
