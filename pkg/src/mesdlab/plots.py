"""Figure rendering for the report path.

Every figure is derived from the same rows the CSV files carry, rendered
headlessly and with the PNG ``Software`` tag stripped so repeated runs
produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be fixed first)
import numpy as np  # noqa: E402

_SAVE = {"dpi": 150, "metadata": {"Software": None}}


def render_heatmaps(path: str | Path, estimates) -> None:
    """Measured and theoretical advantage over the (c, eps) plane."""
    c = np.array([pe.c for pe in estimates])
    eps = np.array([pe.epsilon for pe in estimates])
    ds_exp = np.array([pe.ds_exp for pe in estimates])
    ds_th = np.array([pe.ds_theory for pe in estimates])
    lo = min(ds_exp.min(), ds_th.min())
    hi = max(ds_exp.max(), ds_th.max())
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.8), sharey=True)
    for ax, values, title in (
        (axes[0], ds_exp, "measured advantage"),
        (axes[1], ds_th, "theory advantage"),
    ):
        sc = ax.scatter(c, eps, c=values, cmap="viridis", vmin=lo, vmax=hi, s=36)
        ax.set_xlabel("confusability c")
        ax.set_title(title)
    axes[0].set_ylabel("measurement error eps")
    fig.colorbar(sc, ax=axes, label="ds")
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def render_slices(path: str | Path, slices: dict[float, list[tuple]]) -> None:
    """Success probability against c at fixed alpha, with both bounds.

    ``slices`` maps alpha to rows of (c, s_exp, std_s, s_nc, s_q).
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for alpha, rows in sorted(slices.items()):
        rows = sorted(rows)
        c = [r[0] for r in rows]
        ax.errorbar(
            c,
            [r[1] for r in rows],
            yerr=[r[2] for r in rows],
            fmt="o",
            markersize=3.5,
            capsize=2,
            label=f"alpha = {alpha:g}",
        )
        ax.plot(c, [r[3] for r in rows], ls="--", lw=0.9, color="gray")
        ax.plot(c, [r[4] for r in rows], ls="-", lw=0.9, color="black", alpha=0.5)
    ax.set_xlabel("confusability c")
    ax.set_ylabel("success probability s")
    ax.legend(fontsize=8)
    ax.set_title("measured s vs c (dashed: noncontextual bound, solid: quantum)")
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def render_sweep(path: str | Path, p_values, ds_values, p_star) -> None:
    """Advantage against depolarizing strength with the zero crossing."""
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.plot(p_values, ds_values, "o-", ms=4)
    ax.axhline(0.0, color="gray", lw=0.8)
    if p_star is not None:
        ax.axvline(p_star, color="crimson", ls=":", lw=1.0)
        ax.annotate(f"p* = {p_star:.4f}", (p_star, 0.0), textcoords="offset points",
                    xytext=(6, 8), fontsize=9, color="crimson")
    ax.set_xlabel("depolarizing p")
    ax.set_ylabel("ds_exp")
    ax.set_title("contextual advantage under depolarization")
    fig.savefig(path, **_SAVE)
    plt.close(fig)
