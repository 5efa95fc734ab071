"""Render coverage-accuracy figures next to the delimited results.

Figures are written to files (Agg backend, no display); the CSV stays the
canonical output and the plots are generated from the same curve objects.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METHOD_COLORS = {"ltd": "#0173b2", "lta_seq": "#de8f05", "lta_joint": "#029e73"}
_FALLBACK_COLORS = ("#d55e00", "#cc78bc", "#ca9161")


def _color_for(key, i):
    return METHOD_COLORS.get(key, _FALLBACK_COLORS[i % len(_FALLBACK_COLORS)])


def coverage_figure(curves, path, title: str = "", by: str = "method") -> Path:
    """Accuracy vs coverage, one band per method (or per delta when
    `by='delta'`), mean +- std across seeds, with the solo baselines dashed.
    """
    path = Path(path)
    groups: dict = {}
    for curve in curves:
        key = curve.method if by == "method" else f"delta={curve.delta:g}"
        groups.setdefault(key, []).append(curve)

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for i, (key, group) in enumerate(sorted(groups.items())):
        betas = [p.beta for p in group[0].points]
        accs = np.array([[p.system_accuracy for p in c.points] for c in group])
        coverage = 1.0 - np.asarray(betas)
        mean, std = accs.mean(axis=0), accs.std(axis=0)
        color = _color_for(key, i)
        ax.plot(coverage, mean, label=key, color=color, marker="o", ms=3)
        ax.fill_between(coverage, mean - std, mean + std, alpha=0.2,
                        color=color, linewidth=0)

    expert = np.mean([c.expert_alone for c in curves])
    machine = np.mean([c.machine_alone for c in curves])
    if np.isfinite(expert):
        ax.axhline(expert, ls=":", color="0.45", lw=1.2, label="expert alone")
    if np.isfinite(machine):
        ax.axhline(machine, ls="--", color="0.45", lw=1.2, label="machine alone")

    ax.set_xlabel("coverage (1 - budget)")
    ax.set_ylabel("accuracy")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def oracle_demo_figure(rows, path, title: str = "oracle strategies") -> Path:
    """Grouped bars: machine / expert / defer oracle / ask oracle per task,
    with std error bars."""
    path = Path(path)
    labels = ("machine", "expert", "LtD*", "LtA*")
    colors = ("#0173b2", "#de8f05", "#029e73", "#d55e00")
    fig, ax = plt.subplots(figsize=(1.8 * max(4, len(rows)), 4.0))
    xs = np.arange(len(rows))
    width = 0.2
    for j, label in enumerate(labels):
        vals = [(r.machine, r.expert, r.ltd_star, r.lta_star)[j] for r in rows]
        errs = [(r.machine_std, r.expert_std, r.ltd_star_std,
                 r.lta_star_std)[j] for r in rows]
        ax.bar(xs + (j - 1.5) * width, vals, width, yerr=errs, capsize=2,
               label=label, color=colors[j])
    ax.set_xticks(xs, [r.task for r in rows], rotation=10)
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
