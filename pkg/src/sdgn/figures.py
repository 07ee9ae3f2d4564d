"""Figure rendering for the CLI report path.

Every plot is derived from the same rows that land in the delimited tables,
so the figures are a view of the artifacts, never a second computation.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ValidationError

_META = {"Software": "sdgn"}
_DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_META)
    plt.close(fig)


def fig_ssi_grid(rows: list[dict], path) -> None:
    """Mean SSI vs node count, one line per sparsity level.

    rows: dicts with nodes, sparsity, ssi (one per run; seeds are averaged).
    """
    if not rows:
        raise ValidationError("no rows to plot")
    sparsities = sorted({r["sparsity"] for r in rows})
    nodes = sorted({r["nodes"] for r in rows})
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    for s in sparsities:
        means = []
        for n in nodes:
            vals = [r["ssi"] for r in rows if r["nodes"] == n and r["sparsity"] == s]
            means.append(np.mean(vals) if vals else np.nan)
        ax.plot(nodes, means, marker="o", label=f"sparsity {s:g}")
    ax.set_xlabel("number of nodes")
    ax.set_ylabel("mean SSI")
    ax.set_xticks(nodes)
    ax.legend(fontsize=8)
    _save(fig, path)


def fig_ssi_windows(window_ssi: list[float], path) -> None:
    """SSI of each estimated graph window against its ground-truth epoch."""
    if not window_ssi:
        raise ValidationError("no windows to plot")
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    idx = np.arange(len(window_ssi))
    ax.bar(idx, window_ssi, color="tab:blue", width=0.7)
    ax.set_xlabel("graph window")
    ax.set_ylabel("SSI")
    ax.set_xticks(idx)
    ax.set_ylim(0, max(1.0, max(window_ssi) * 1.1))
    _save(fig, path)


def fig_rmse_models(rmse_by_model: dict[str, float], path) -> None:
    """Next-event RMSE per model on one run (evaluate command)."""
    if not rmse_by_model:
        raise ValidationError("no models to plot")
    names = list(rmse_by_model)
    vals = [rmse_by_model[k] for k in names]
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.bar(names, vals, color="tab:orange", width=0.6)
    ax.set_ylabel("next-event RMSE (s)")
    ax.tick_params(axis="x", rotation=20)
    _save(fig, path)


def fig_ablation(stats: dict[str, tuple[float, float]], path) -> None:
    """Mean RMSE with standard-error whiskers per ablation mode / baseline.

    stats: mode -> (mean, standard error) over seeds.
    """
    if not stats:
        raise ValidationError("no ablation stats to plot")
    names = list(stats)
    means = [stats[k][0] for k in names]
    errs = [stats[k][1] for k in names]
    fig, ax = plt.subplots(figsize=(4.6, 3.0))
    ax.bar(names, means, yerr=errs, capsize=4, color="tab:green", width=0.6)
    ax.set_ylabel("next-event RMSE (s)")
    ax.tick_params(axis="x", rotation=20)
    _save(fig, path)


def fig_prediction_scatter(actual: np.ndarray, predicted: np.ndarray, path) -> None:
    """Predicted vs actual inter-event gaps with the identity line."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.size == 0 or actual.shape != predicted.shape:
        raise ValidationError("prediction scatter needs matching non-empty arrays")
    fig, ax = plt.subplots(figsize=(3.6, 3.4))
    ax.scatter(actual, predicted, s=6, alpha=0.4, edgecolors="none")
    hi = float(max(actual.max(), predicted.max())) * 1.05
    ax.plot([0, hi], [0, hi], color="k", lw=0.8, ls="--")
    ax.set_xlabel("actual gap (s)")
    ax.set_ylabel("predicted gap (s)")
    ax.set_xlim(0, hi)
    ax.set_ylim(0, hi)
    _save(fig, path)
