"""Matplotlib renderings of trial and safety-study reports.

Figures land next to the delimited artifacts. Rendering is deterministic:
fixed DPI, no timestamps in metadata, Agg backend.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .safety_mc import SafetyMCReport
from .trial import RANGE_HI, RANGE_LO, SEVERE_HYPO, TrialReport

IN_RANGE_COLOR = "#2e7d32"
ABOVE_COLOR = "#f9a825"
BELOW_COLOR = "#c62828"

_SAVE_KWARGS = {"dpi": 110, "metadata": {"Software": "doseguide"}}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    return path


def render_trial_figures(report: TrialReport, outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [
        _glucose_band(report, outdir / "glucose_band.png"),
        _range_bars(report, outdir / "range_bars.png"),
        _patient_grid(report, outdir / "patients.png"),
    ]


def _glucose_band(report: TrialReport, path: Path) -> Path:
    days = report.band_times / 1440.0
    fig, ax = plt.subplots(figsize=(10, 4), constrained_layout=True)
    ax.fill_between(
        days, report.band_lo, report.band_hi, color="#90caf9", alpha=0.6,
        label="5-95% cohort band",
    )
    ax.plot(days, report.band_median, color="#1565c0", lw=1.0, label="median")
    ax.axhline(RANGE_HI, color=ABOVE_COLOR, ls="--", lw=0.8)
    ax.axhline(RANGE_LO, color=BELOW_COLOR, ls="--", lw=0.8)
    ax.axhline(SEVERE_HYPO, color=BELOW_COLOR, ls=":", lw=0.8)
    ax.set_xlabel("day")
    ax.set_ylabel("glucose (mg/dl)")
    ax.set_xlim(0, report.days)
    ax.set_ylim(40, max(400.0, float(report.band_hi.max()) + 20))
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("Cohort glucose over the trial")
    return _save(fig, path)


def _range_bars(report: TrialReport, path: Path) -> Path:
    days = np.arange(1, len(report.daily) + 1)
    tir = np.array([d[0] for d in report.daily])
    tar = np.array([d[1] for d in report.daily])
    tbr = np.array([d[2] for d in report.daily])
    fig, ax = plt.subplots(figsize=(10, 4), constrained_layout=True)
    ax.bar(days, tir, color=IN_RANGE_COLOR, label="% in range")
    ax.bar(days, tar, bottom=tir, color=ABOVE_COLOR, label="% above range")
    ax.bar(days, tbr, bottom=tir + tar, color=BELOW_COLOR, label="% below range")
    weeks = report.weekly_median_tir
    if len(weeks) > 1:
        xw = [7 * (w + 0.5) + 0.5 for w in range(len(weeks))]
        ax.plot(xw, weeks, "o-", color="black", lw=1.2, label="weekly median %TIR")
    ax.set_xlabel("day")
    ax.set_ylabel("% of samples")
    ax.set_ylim(0, 102)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("Daily time in / above / below range (cohort pooled)")
    return _save(fig, path)


def _patient_grid(report: TrialReport, path: Path) -> Path:
    patients = report.patients
    cols = min(2, len(patients))
    rows = (len(patients) + cols - 1) // cols
    fig, axes = plt.subplots(
        rows, cols, figsize=(11, 1.8 * rows + 1), sharex=True, sharey=True,
        constrained_layout=True, squeeze=False,
    )
    for ax in axes.flat:
        ax.set_visible(False)
    for p, ax in zip(patients, axes.flat):
        ax.set_visible(True)
        t = np.arange(p.bg.size) / 1440.0
        ax.plot(t, p.bg, lw=0.4, color="#37474f")
        ax.axhline(RANGE_HI, color=ABOVE_COLOR, ls="--", lw=0.5)
        ax.axhline(RANGE_LO, color=BELOW_COLOR, ls="--", lw=0.5)
        ax.set_ylim(40, 420)
        ax.set_title(f"patient {p.index}  (%TIR {p.tir:.1f})", fontsize=8)
    fig.supxlabel("day")
    fig.supylabel("glucose (mg/dl)")
    return _save(fig, path)


def render_safety_mc_figure(report: SafetyMCReport, outdir: str | Path) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    k = np.arange(1, report.iterations + 1)
    nf = report.per_iteration_non_fallback
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(nf > 0, report.per_iteration_violations / np.maximum(nf, 1), 0.0)
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(8, 5), sharex=True, constrained_layout=True
    )
    ax1.plot(k, rate, "o-", ms=3, color="#c62828", label="violation rate")
    ax1.axhline(report.delta, color="black", ls="--", lw=0.8, label="delta")
    ax1.set_ylabel("violation rate")
    ax1.legend(fontsize=8)
    ax1.set_title(
        f"Constraint violations among non-fallback selections "
        f"({report.seeds} seeds)"
    )
    ax2.plot(k, nf / report.seeds, "s-", ms=3, color="#1565c0")
    ax2.set_ylabel("non-fallback fraction")
    ax2.set_xlabel("iteration")
    return _save(fig, outdir / "safety_mc.png")
