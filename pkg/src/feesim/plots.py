"""Figure rendering for report outputs.

Every function writes a file and never opens a window; the Agg backend is
forced before pyplot is imported so the CLI works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["save_curve_figure", "save_sweep_figure", "save_report_figure"]

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.linestyle": "--",
    "grid.alpha": 0.4,
    "savefig.dpi": 150,
}


def _new_axes():
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
    return fig, ax


def save_curve_figure(points, path, *, title: str = "", ylabel: str = "expected utility"):
    """Utility (left axis) and chosen fee (right axis) against elapsed time."""
    fig, ax = _new_axes()
    x = [p.elapsed for p in points]
    ax.plot(x, [p.utility for p in points], marker="o", color="#1f77b4", label="utility")
    ax.set_xlabel("elapsed time since last block")
    ax.set_ylabel(ylabel)
    twin = ax.twinx()
    twin.plot(x, [p.fee for p in points], marker="s", color="#d62728",
              linestyle=":", label="fee")
    twin.set_ylabel("chosen fee")
    lines = ax.get_lines() + twin.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="best")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_sweep_figure(points, path, *, xlabel: str, title: str = ""):
    """Per-round utility against the swept fee-bumping parameter."""
    fig, ax = _new_axes()
    ax.plot([p.value for p in points], [p.utility for p in points],
            marker="o", color="#2ca02c")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("expected utility per round")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_report_figure(report, path, *, title: str = ""):
    """Monte Carlo mean with a three-standard-error bar."""
    fig, ax = _new_axes()
    ax.errorbar([0], [report.mean_utility], yerr=[3.0 * report.utility_stderr],
                fmt="o", capsize=6, color="#1f77b4")
    ax.set_xticks([0])
    ax.set_xticklabels([f"{report.trials} trials"])
    ax.set_ylabel("mean utility (3 s.e.)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
