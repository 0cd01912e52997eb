"""Figures for benchmark tables (matplotlib, non-interactive backend)."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _brands(table, algorithm, statistic):
    return [r.brand for r in table.select(algorithm, statistic)]


def plot_bounds(table, path):
    """Mean lower and upper bounds per brand, one marker pair per algorithm."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    algos = [a for a in dict.fromkeys(r.algorithm for r in table.rows) if table.select(a, "upper")]
    width = 0.8 / max(len(algos), 1)
    for k, algo in enumerate(algos):
        brands = _brands(table, algo, "upper")
        pos = np.arange(len(brands)) + (k - (len(algos) - 1) / 2) * width
        lo, hi = table.means(algo, "lower"), table.means(algo, "upper")
        ax.vlines(pos, lo, hi, colors=f"C{k}", linewidth=3, alpha=0.6)
        ax.errorbar(pos, hi, yerr=table.stds(algo, "upper"), fmt="v", color=f"C{k}", label=f"{algo} upper")
        ax.errorbar(pos, lo, yerr=table.stds(algo, "lower"), fmt="^", color=f"C{k}", mfc="white",
                    label=f"{algo} lower")
        ax.set_xticks(np.arange(len(brands)), brands)
    ax.set_xlabel("brand")
    ax.set_ylabel("mean utility")
    ax.set_title(f"{table.experiment}: identified-set bounds ({table.reps} replications)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_gaps(table, path):
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for k, algo in enumerate(a for a in dict.fromkeys(r.algorithm for r in table.rows) if table.select(a, "gap")):
        brands = _brands(table, algo, "gap")
        ax.plot(brands, table.means(algo, "gap"), "o-", color=f"C{k}", label=algo)
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.set_xlabel("brand")
    ax.set_ylabel("mean upper - lower")
    ax.set_title(f"{table.experiment}: width of the identified set")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_rmse(table, path):
    rows = table.select(statistic="rmse")
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    names = [r.algorithm for r in rows]
    ax.bar(names, [r.mean for r in rows], yerr=[r.std for r in rows], color=[f"C{k}" for k in range(len(rows))])
    ax.set_ylabel("RMSE of delta")
    ax.set_title(f"{table.experiment}: accuracy ({table.reps} replications)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_figures(table, directory, stem=None):
    """Write every figure that applies to ``table``; returns the file paths."""
    os.makedirs(directory, exist_ok=True)
    stem = stem or table.experiment
    out = []
    if table.select(statistic="upper"):
        out.append(plot_bounds(table, os.path.join(directory, f"{stem}_bounds.png")))
    if table.select(statistic="gap"):
        out.append(plot_gaps(table, os.path.join(directory, f"{stem}_gaps.png")))
    if table.select(statistic="rmse"):
        out.append(plot_rmse(table, os.path.join(directory, f"{stem}_rmse.png")))
    return out
