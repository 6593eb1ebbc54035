"""Figures for benchmark and state-prediction reports."""

from __future__ import annotations

import math
import statistics
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from irplan.benchmark import BenchmarkReport  # noqa: E402
from irplan.metrics import F1Report  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}

BAR_COLOR = "#4C72B0"
FAIL_COLOR = "#C44E52"


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    # No Software/date chunks, so reruns write identical bytes.
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_benchmark(report: BenchmarkReport, path: str | Path) -> Path:
    """Two panels per incident: mean recovery time with std bars, and percent failed."""
    incidents = sorted({e.incident for e in report.episodes})
    means, stds, fails = [], [], []
    for inc in incidents:
        times = [e.recovery_time for e in report.episodes if e.incident == inc]
        means.append(math.fsum(times) / len(times))
        stds.append(statistics.pstdev(times) if len(times) > 1 else 0.0)
        eps = [e for e in report.episodes if e.incident == inc]
        fails.append(100.0 * sum(e.failed for e in eps) / len(eps))

    with plt.rc_context(STYLE):
        fig, (ax_t, ax_f) = plt.subplots(1, 2, figsize=(8, 3.2))
        x = range(len(incidents))
        ax_t.bar(x, means, yerr=stds, color=BAR_COLOR, capsize=3)
        ax_t.axhline(report.mean, color="black", lw=0.8, ls="--", label=f"mean {report.mean:.2f}")
        ax_t.set_ylabel("recovery time")
        ax_t.set_title("Recovery time")
        ax_t.legend(frameon=False)
        ax_f.bar(x, fails, color=FAIL_COLOR)
        ax_f.set_ylim(0, 100)
        ax_f.set_ylabel("% failed recoveries")
        ax_f.set_title("Failed recoveries")
        for ax in (ax_t, ax_f):
            ax.set_xticks(list(x))
            ax.set_xticklabels(incidents, rotation=30, ha="right")
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_f1(report: F1Report, path: str | Path) -> Path:
    names = list(report.per_entry)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.bar(range(len(names)), [report.per_entry[n] for n in names], color=BAR_COLOR)
        ax.axhline(report.caa_f1, color="black", lw=0.8, ls="--", label=f"caa {report.caa_f1:.4f}")
        ax.axhline(report.csa_f1, color="gray", lw=0.8, ls=":", label=f"csa {report.csa_f1:.4f}")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("F1")
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        return _save(fig, Path(path))
