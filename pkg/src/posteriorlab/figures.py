"""Figure rendering for the report path: one PNG per summary statistic,
written next to the delimited output.  The CSV stays the contract; figures
are a convenience view of the same rows."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .experiments import ExperimentReport


def render_figures(report: ExperimentReport, out_dir: str) -> list[str]:
    """Plot every summary statistic with at least one (n, value) point
    against n; returns the written file paths."""
    series = defaultdict(list)
    for _, kind, n, _, statistic, value in report.rows:
        if kind.startswith("summary") or kind == "rc":
            if isinstance(value, (int, float)) and n >= 0:
                series[statistic].append((n, float(value)))
    paths = []
    for statistic, points in sorted(series.items()):
        points.sort()
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o")
        ax.set_xlabel("n")
        ax.set_ylabel(statistic)
        ax.set_title(f"{report.experiment}: {statistic}")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{report.experiment}_{statistic}.png")
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths
