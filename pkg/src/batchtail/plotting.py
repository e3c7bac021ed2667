"""Figure rendering for the command line report paths.

Every function writes a PNG next to the delimited output it depicts
and returns the path(s) written.  The CSV files remain the data
interface; these figures are companion renderings of the same numbers.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

__all__ = ["plot_run", "plot_sweep", "plot_fit"]


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_run(record, out_dir: Path) -> list[Path]:
    """Render a run's final-regret histogram and, when kept, its curve.

    Parameters
    ----------
    record : RunRecord
        A replicated experiment.
    out_dir : path
        Directory already holding the run's CSV output.

    Returns
    -------
    list of Path
        ``finals.png`` always; ``curve.png`` when curve data exists.
    """
    out_dir = Path(out_dir)
    written = []

    finals = np.asarray(record.final_regrets, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(finals, bins="auto", color="#4878a8", edgecolor="white")
    ax.set_xlabel("final regret")
    ax.set_ylabel("replications")
    label = record.config.get("label") or "final regret over replications"
    ax.set_title(label)
    written.append(_save(fig, out_dir / "finals.png"))

    if record.curve is not None:
        t = np.asarray(record.curve["t"], dtype=float)
        mean = np.asarray(record.curve["mean_cum_regret"], dtype=float)
        p_lo = np.asarray(record.curve["p5"], dtype=float)
        p_hi = np.asarray(record.curve["p95"], dtype=float)
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(t, mean, color="#a84848", label="mean")
        ax.fill_between(t, p_lo, p_hi, color="#a84848", alpha=0.2, label="p5 to p95")
        ax.set_xlabel("step")
        ax.set_ylabel("cumulative regret")
        ax.set_title(label)
        ax.legend(loc="upper left")
        written.append(_save(fig, out_dir / "curve.png"))

    return written


def plot_sweep(rows, axis_name: str, path: Path) -> Path:
    """Render mean regret with a one-std band against the swept axis.

    ``rows`` is a list of ``(axis_value, mean_regret, std)`` triples.
    Axes switch to log scale when every plotted value allows it.
    """
    values = np.asarray([row[0] for row in rows], dtype=float)
    means = np.asarray([row[1] for row in rows], dtype=float)
    stds = np.asarray([row[2] for row in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(values, means, yerr=stds, marker="o", color="#4878a8", capsize=3)
    if np.all(values > 0):
        ax.set_xscale("log")
    if np.all(means - stds > 0):
        ax.set_yscale("log")
    ax.set_xlabel(axis_name)
    ax.set_ylabel("mean final regret")
    ax.set_title(f"regret vs {axis_name}")
    return _save(fig, Path(path))


def plot_fit(points, fit, path: Path) -> Path:
    """Render fitted points and the power-law line on log-log axes.

    ``points`` is a list of dicts with ``horizon`` and ``mean_regret``;
    ``fit`` carries ``slope``/``intercept``/``r_squared`` on the log scale.
    """
    horizons = np.asarray([row["horizon"] for row in points], dtype=float)
    means = np.asarray([row["mean_regret"] for row in points], dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(horizons, means, "o", color="#4878a8", label="mean regret")
    line_x = np.linspace(horizons.min(), horizons.max(), 64)
    line_y = np.exp(fit.intercept) * line_x**fit.slope
    ax.loglog(
        line_x,
        line_y,
        "-",
        color="#a84848",
        label=f"slope {fit.slope:.3f} (r² {fit.r_squared:.3f})",
    )
    ax.set_xlabel("horizon")
    ax.set_ylabel("mean final regret")
    ax.legend(loc="upper left")
    return _save(fig, Path(path))
