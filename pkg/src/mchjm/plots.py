"""Static diagnostic figures rendered to files next to the CSV artifacts."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "plot_envelope_fan",
    "plot_coverage_series",
    "plot_parameter_history",
    "plot_factor_history",
]


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_envelope_fan(
    s: np.ndarray,
    mean: np.ndarray,
    bands: dict[float, tuple[np.ndarray, np.ndarray]],
    current: np.ndarray | None = None,
    title: str = "",
    ylabel: str = "rate",
    path: str | Path = "envelope.svg",
) -> Path:
    """Forecast mean across buckets with shaded coverage bands."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for p in sorted(bands, reverse=True):
        lo, hi = bands[p]
        ax.fill_between(s, lo, hi, alpha=0.25, label=f"{100 * p:g}% band")
    ax.plot(s, mean, "k-", lw=1.5, label="forecast mean")
    if current is not None:
        ax.plot(s, current, "b--", lw=1.0, label="current")
    ax.set_xlabel("time to maturity (years)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_coverage_series(
    dates,
    lower: np.ndarray,
    upper: np.ndarray,
    realized: np.ndarray,
    title: str = "",
    path: str | Path = "coverage.svg",
) -> Path:
    """Rolling envelope vs realizations for one bucket, exceedances marked."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    realized = np.asarray(realized, dtype=float)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.fill_between(dates, lower, upper, alpha=0.3, label="envelope")
    ax.plot(dates, realized, "k-", lw=1.0, label="realized")
    out = (realized < lower) | (realized > upper)
    if out.any():
        idx = np.nonzero(out)[0]
        ax.plot(
            [dates[i] for i in idx], realized[out], "rx", ms=6, label="exceedance"
        )
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.autofmt_xdate()
    return _save(fig, path)


def plot_parameter_history(
    dates,
    values: np.ndarray,
    labels: list[str],
    title: str = "parameter estimates",
    path: str | Path = "params.svg",
) -> Path:
    """One line per parameter across rolling estimation windows."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    fig, ax = plt.subplots(figsize=(8, 4))
    for j, lbl in enumerate(labels):
        ax.plot(dates, values[:, j], lw=1.0, label=lbl)
    ax.set_title(title)
    if len(labels) <= 12:
        ax.legend(fontsize=7, ncol=2)
    fig.autofmt_xdate()
    return _save(fig, path)


def plot_factor_history(
    dates,
    F: np.ndarray,
    phi: np.ndarray | None = None,
    path: str | Path = "pca.svg",
) -> Path:
    """Minimal component count per window, optionally with explained variance."""
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.step(dates, F, where="post", label="components F")
    ax.set_ylabel("F")
    if phi is not None:
        ax2 = ax.twinx()
        ax2.plot(dates, 100.0 * np.asarray(phi), "g--", lw=1.0)
        ax2.set_ylabel("explained variance (%)", color="g")
    ax.set_title("minimal component count at threshold")
    fig.autofmt_xdate()
    return _save(fig, path)
