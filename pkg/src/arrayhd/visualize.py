from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_density_comparison(
    path: str | Path,
    x1: np.ndarray,
    x2: np.ndarray,
    analytic: np.ndarray,
    simulated: np.ndarray,
    title: str = "",
) -> None:
    """Analytic and reconstructed densities side by side, analytic contours on both."""
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    extent = (float(x1[0]), float(x1[-1]), float(x2[0]), float(x2[-1]))
    vmax = float(max(np.max(analytic), np.max(simulated)))
    fig, axes = plt.subplots(1, 2, figsize=(11, 5), sharey=True)
    for ax, values, label in zip(axes, (analytic, simulated), ("analytic", "simulated")):
        im = ax.imshow(values.T, origin="lower", extent=extent, cmap="viridis", vmin=0.0, vmax=vmax, aspect="equal")
        ax.contour(x1, x2, analytic.T, levels=6, colors="white", linewidths=0.6)
        ax.set_title(label)
        ax.set_xlabel("x1")
    axes[0].set_ylabel("x2")
    fig.colorbar(im, ax=axes, shrink=0.8, label="p(x1, x2)")
    if title:
        fig.suptitle(title)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def save_delta_map(path: str | Path, x1: np.ndarray, x2: np.ndarray, delta: np.ndarray) -> None:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    extent = (float(x1[0]), float(x1[-1]), float(x2[0]), float(x2[-1]))
    bound = float(np.max(np.abs(delta))) or 1.0
    plt.figure(figsize=(6, 5))
    plt.imshow(delta.T, origin="lower", extent=extent, cmap="coolwarm", vmin=-bound, vmax=bound)
    plt.colorbar(label="analytic - oracle")
    plt.xlabel("x1")
    plt.ylabel("x2")
    plt.tight_layout()
    plt.savefig(out_path, dpi=150)
    plt.close()
