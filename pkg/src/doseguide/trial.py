"""Closed-loop in-silico trial: cohort x weeks of meals, plus outcome metrics.

Each patient runs the full loop independently: meal announcement, dose
recommendation, bolus + meal administration, CGM streaming, window closure
and learning. Metrics report % time in [70, 180] mg/dl, above and below it,
hypoglycemia episode counts by severity, and cohort quantile bands.
"""

from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .advisor import AdvisorConfig, AdvisorState, episode_records
from .errors import AlignmentError, ConfigError
from .simulator import CgmModel, PatientParams, basal_state, cgm_read, step

RANGE_LO = 70.0  # mg/dl
RANGE_HI = 180.0
SEVERE_HYPO = 54.0
MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class TrialProtocol:
    """Meal schedule: N days, fixed announcement slots with jitter."""

    days: int = 21
    meal_times: tuple[float, ...] = (480.0, 780.0, 1140.0)
    meal_jitter_min: float = 30.0
    size_weights: dict[str, float] = field(
        default_factory=lambda: {"S": 1.0, "M": 1.0, "L": 1.0, "XL": 1.0}
    )
    seed: int = 0

    def __post_init__(self):
        if self.days < 1:
            raise ConfigError("days", f"must be >= 1, got {self.days}")
        if not self.meal_times or any(
            not (0 <= t < MINUTES_PER_DAY) for t in self.meal_times
        ):
            raise ConfigError("meal_times", "must be minutes-of-day in [0, 1440)")
        times = list(self.meal_times)
        if times != sorted(times):
            raise ConfigError("meal_times", "must be ascending")
        for a, b in zip(times, times[1:]):
            if b - a <= 2 * self.meal_jitter_min:
                raise ConfigError(
                    "meal_jitter_min",
                    f"jitter {self.meal_jitter_min} can reorder meals {a} and {b}",
                )
        if self.meal_jitter_min < 0:
            raise ConfigError("meal_jitter_min", "must be >= 0")
        weights = self.size_weights
        if not weights or any(w < 0 for w in weights.values()) or sum(weights.values()) <= 0:
            raise ConfigError("size_weights", "need non-negative weights with a positive sum")

    @property
    def meals_per_day(self) -> int:
        return len(self.meal_times)


def build_meal_schedule(
    protocol: TrialProtocol, rng: np.random.Generator
) -> list[tuple[int, str]]:
    """Absolute meal minutes and size categories for the whole trial."""
    cats = sorted(protocol.size_weights)
    weights = np.array([protocol.size_weights[c] for c in cats], dtype=float)
    weights = weights / weights.sum()
    schedule: list[tuple[int, str]] = []
    for day in range(protocol.days):
        for base in protocol.meal_times:
            jitter = rng.uniform(-protocol.meal_jitter_min, protocol.meal_jitter_min)
            t = day * MINUTES_PER_DAY + int(round(base + jitter))
            category = str(rng.choice(cats, p=weights))
            schedule.append((t, category))
    return schedule


# -- outcome metrics --------------------------------------------------------


def time_in_range(trace: np.ndarray) -> tuple[float, float, float]:
    """(%TIR, %TAR, %TBR) of a glucose trace against [70, 180] mg/dl."""
    trace = np.asarray(trace, dtype=float)
    if trace.size == 0:
        raise ValueError("time_in_range requires a non-empty trace")
    n = trace.size
    tar = float(np.count_nonzero(trace > RANGE_HI)) / n * 100.0
    tbr = float(np.count_nonzero(trace < RANGE_LO)) / n * 100.0
    tir = float(np.count_nonzero((trace >= RANGE_LO) & (trace <= RANGE_HI))) / n * 100.0
    return tir, tar, tbr


def classify_hypo_episodes(trace: np.ndarray) -> tuple[int, int]:
    """Count maximal sub-70 runs: (mild, severe). Severe = any sample < 54."""
    trace = np.asarray(trace, dtype=float)
    if trace.size == 0:
        raise ValueError("classify_hypo_episodes requires a non-empty trace")
    mild = severe = 0
    in_run = False
    run_severe = False
    for v in trace:
        if v < RANGE_LO:
            in_run = True
            run_severe = run_severe or v < SEVERE_HYPO
        elif in_run:
            severe += run_severe
            mild += not run_severe
            in_run = False
            run_severe = False
    if in_run:
        severe += run_severe
        mild += not run_severe
    return mild, severe


def count_hypo_days(trace: np.ndarray, samples_per_day: int) -> tuple[int, int]:
    """Days with any sub-70 sample and days with any sub-54 sample."""
    trace = np.asarray(trace, dtype=float)
    mild_days = severe_days = 0
    for start in range(0, trace.size, samples_per_day):
        day = trace[start : start + samples_per_day]
        if np.any(day < SEVERE_HYPO):
            severe_days += 1
        elif np.any(day < RANGE_LO):
            mild_days += 1
    return mild_days, severe_days


def quantile_band(
    traces: np.ndarray, lo: float = 0.05, hi: float = 0.95
) -> tuple[np.ndarray, np.ndarray]:
    """Per-timestep empirical quantiles across patients (linear interpolation)."""
    traces = np.asarray(traces, dtype=float)
    if traces.ndim != 2 or traces.shape[0] < 2:
        raise AlignmentError("quantile_band needs >= 2 aligned traces")
    return (
        np.quantile(traces, lo, axis=0, method="linear"),
        np.quantile(traces, hi, axis=0, method="linear"),
    )


# -- trial runner -----------------------------------------------------------


@dataclass
class PatientResult:
    index: int
    bg: np.ndarray  # true glucose per minute over the scored horizon
    cgm_times: np.ndarray
    cgm_values: np.ndarray
    boluses: list[tuple[int, float]]
    meals: list[tuple[int, str, float]]
    episodes: list[dict]
    tir: float
    tar: float
    tbr: float
    mild_hypos: int
    severe_hypos: int
    daily: list[tuple[float, float, float]]
    weekly_tir: list[float]


@dataclass
class TrialReport:
    patients: list[PatientResult]
    days: int
    metrics_source: str  # "bg" or "cgm"
    cohort_tir: float
    cohort_tar: float
    cohort_tbr: float
    mild_hypos: int
    severe_hypos: int
    band_times: np.ndarray  # minutes, CGM cadence
    band_lo: np.ndarray
    band_median: np.ndarray
    band_hi: np.ndarray
    daily: list[tuple[float, float, float]]  # pooled across patients
    weekly_median_tir: list[float]


def run_patient(
    index: int,
    params: PatientParams,
    protocol: TrialProtocol,
    advisor_config: AdvisorConfig,
    cgm: CgmModel,
    seed: int,
    metrics_on_cgm: bool = False,
) -> PatientResult:
    """Simulate one subject through the whole protocol."""
    meal_rng = np.random.default_rng((seed, index, 1))
    cgm_rng = np.random.default_rng((seed, index, 2))
    schedule = build_meal_schedule(protocol, meal_rng)
    meal_at = {t: cat for t, cat in schedule}

    advisor = AdvisorState(advisor_config)
    state = basal_state(params)
    horizon = protocol.days * MINUTES_PER_DAY
    # Overrun lets the last window close past midnight of the final day.
    total = horizon + int(advisor_config.window_cap_min) + 5

    bg = np.empty(total, dtype=float)
    cgm_t: list[int] = []
    cgm_v: list[float] = []
    boluses: list[tuple[int, float]] = []
    meals: list[tuple[int, str, float]] = []
    period = int(cgm.sample_period)

    for t in range(total):
        bolus = 0.0
        cho = 0.0
        ep = advisor.open_episode
        if t in meal_at:
            if ep is not None:
                advisor.close_episode(now=t, next_meal_time=t)
            meal = advisor_config.meal(float(t), meal_at[t])
            decision = advisor.recommend_dose(meal)
            bolus, cho = decision.dose, meal.cho_grams
            meals.append((t, meal.size_category, meal.cho_grams))
            if bolus > 0:
                boluses.append((t, bolus))
        elif ep is not None and t >= ep.window_end:
            advisor.close_episode(now=t)

        bg[t] = state.g
        if t % period == 0:
            sample = cgm_read(state, cgm, cgm_rng)
            advisor.ingest_cgm(float(t), sample)
            cgm_t.append(t)
            cgm_v.append(sample)
        state = step(state, params, bolus=bolus, cho=cho, dt=1.0)

    if advisor.open_episode is not None:
        advisor.close_episode(now=float(total))

    bg = bg[:horizon]
    cgm_t_arr = np.array(cgm_t, dtype=float)
    cgm_v_arr = np.array(cgm_v, dtype=float)
    keep = cgm_t_arr < horizon
    scored = cgm_v_arr[keep] if metrics_on_cgm else bg

    tir, tar, tbr = time_in_range(scored)
    mild, severe = classify_hypo_episodes(scored)
    per_day = MINUTES_PER_DAY if not metrics_on_cgm else MINUTES_PER_DAY // period
    daily = [
        time_in_range(scored[d * per_day : (d + 1) * per_day])
        for d in range(protocol.days)
    ]
    weekly = [
        time_in_range(scored[w * 7 * per_day : (w + 1) * 7 * per_day])[0]
        for w in range(protocol.days // 7)
    ] or [tir]

    return PatientResult(
        index=index,
        bg=bg,
        cgm_times=cgm_t_arr[keep],
        cgm_values=cgm_v_arr[keep],
        boluses=boluses,
        meals=meals,
        episodes=episode_records(advisor, index),
        tir=tir,
        tar=tar,
        tbr=tbr,
        mild_hypos=mild,
        severe_hypos=severe,
        daily=daily,
        weekly_tir=weekly,
    )


def _patient_job(args) -> PatientResult:
    return run_patient(*args)


def run_trial(
    cohort: list[PatientParams],
    protocol: TrialProtocol,
    advisor_config: AdvisorConfig | None = None,
    cgm: CgmModel | None = None,
    seed: int | None = None,
    workers: int = 1,
    metrics_on_cgm: bool = False,
) -> TrialReport:
    """Run the full protocol for every subject and assemble the report.

    Results are independent of ``workers``: every patient draws from its own
    seed substream, so reports are bit-identical for a fixed seed.
    """
    advisor_config = advisor_config or AdvisorConfig()
    cgm = cgm or CgmModel()
    seed = protocol.seed if seed is None else seed
    jobs = [
        (i, params, protocol, advisor_config, cgm, seed, metrics_on_cgm)
        for i, params in enumerate(cohort)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            patients = list(pool.map(_patient_job, jobs))
    else:
        patients = [_patient_job(j) for j in jobs]

    horizon = protocol.days * MINUTES_PER_DAY
    period = int(cgm.sample_period)
    band_times = np.arange(0, horizon, period, dtype=float)
    sampled = np.stack([p.bg[::period] for p in patients])
    if len(patients) >= 2:
        band_lo, band_hi = quantile_band(sampled, 0.05, 0.95)
    else:
        band_lo = band_hi = sampled[0]
    band_median = np.quantile(sampled, 0.5, axis=0, method="linear")

    pooled = np.concatenate([p.bg if not metrics_on_cgm else p.cgm_values for p in patients])
    tir, tar, tbr = time_in_range(pooled)
    per_day = MINUTES_PER_DAY if not metrics_on_cgm else MINUTES_PER_DAY // period
    daily = []
    for d in range(protocol.days):
        chunk = np.concatenate(
            [
                (p.bg if not metrics_on_cgm else p.cgm_values)[
                    d * per_day : (d + 1) * per_day
                ]
                for p in patients
            ]
        )
        daily.append(time_in_range(chunk))
    n_weeks = protocol.days // 7
    weekly_median = [
        float(np.median([p.weekly_tir[w] for p in patients])) for w in range(n_weeks)
    ] or [tir]

    return TrialReport(
        patients=patients,
        days=protocol.days,
        metrics_source="cgm" if metrics_on_cgm else "bg",
        cohort_tir=tir,
        cohort_tar=tar,
        cohort_tbr=tbr,
        mild_hypos=sum(p.mild_hypos for p in patients),
        severe_hypos=sum(p.severe_hypos for p in patients),
        band_times=band_times,
        band_lo=band_lo,
        band_median=band_median,
        band_hi=band_hi,
        daily=daily,
        weekly_median_tir=weekly_median,
    )


# -- artifact serialization --------------------------------------------------


def summary_text(report: TrialReport) -> str:
    out = io.StringIO()
    w = out.write
    w(f"In-silico dose guidance trial: {len(report.patients)} patients, ")
    w(f"{report.days} days, metrics on {report.metrics_source}\n")
    w(
        f"cohort  %TIR {report.cohort_tir:6.2f}  %TAR {report.cohort_tar:6.2f}  "
        f"%TBR {report.cohort_tbr:6.2f}\n"
    )
    w(f"hypoglycemia episodes: mild {report.mild_hypos}, severe {report.severe_hypos}\n")
    weeks = "  ".join(
        f"week{w_ + 1} {v:6.2f}" for w_, v in enumerate(report.weekly_median_tir)
    )
    w(f"median weekly %TIR: {weeks}\n\n")
    w("patient  %TIR    %TAR    %TBR   mild severe  week-TIR\n")
    for p in report.patients:
        wk = "/".join(f"{v:.1f}" for v in p.weekly_tir)
        w(
            f"{p.index:7d} {p.tir:6.2f}  {p.tar:6.2f}  {p.tbr:6.2f}  "
            f"{p.mild_hypos:5d} {p.severe_hypos:6d}  {wk}\n"
        )
    return out.getvalue()


def patient_csv(p: PatientResult) -> str:
    """Per-minute trajectory log: t_min, BG, CGM, bolus_U, cho_g."""
    cgm_map = {int(t): v for t, v in zip(p.cgm_times, p.cgm_values)}
    bolus_map = dict(p.boluses)
    cho_map = {t: g for t, _, g in p.meals}
    lines = ["t_min,BG,CGM,bolus_U,cho_g"]
    for t in range(p.bg.size):
        cgm = cgm_map.get(t)
        lines.append(
            f"{t},{p.bg[t]:.3f},{'' if cgm is None else format(cgm, '.3f')},"
            f"{bolus_map.get(t, 0):.3f},{cho_map.get(t, 0):.1f}"
        )
    return "\n".join(lines) + "\n"


def episodes_csv(report: TrialReport) -> str:
    cols = (
        "patient_id,k,meal_time,category,cho_g,dose_U,fallback_used,"
        "reward_obs,constraint_obs"
    )
    lines = [cols]
    for p in report.patients:
        for r in p.episodes:
            lines.append(
                f"{r['patient_id']},{r['k']},{r['meal_time']:.0f},{r['category']},"
                f"{r['cho_g']:.1f},{r['dose_U']:.4f},{int(r['fallback_used'])},"
                f"{'' if r['reward_obs'] is None else format(r['reward_obs'], '.3f')},"
                f"{'' if r['constraint_obs'] is None else format(r['constraint_obs'], '.3f')}"
            )
    return "\n".join(lines) + "\n"


def plotdata_csv(report: TrialReport) -> str:
    """Single plot-data file: band rows, per-day range rows, weekly rows."""
    lines = ["kind,t_min,band_lo,band_median,band_hi,day,tir,tar,tbr,week,week_tir"]
    for i, t in enumerate(report.band_times):
        lines.append(
            f"band,{t:.0f},{report.band_lo[i]:.3f},{report.band_median[i]:.3f},"
            f"{report.band_hi[i]:.3f},,,,,,"
        )
    for day, (tir, tar, tbr) in enumerate(report.daily):
        lines.append(f"daily,,,,,{day + 1},{tir:.3f},{tar:.3f},{tbr:.3f},,")
    for week, tir in enumerate(report.weekly_median_tir):
        lines.append(f"weekly,,,,,,,,,{week + 1},{tir:.3f}")
    return "\n".join(lines) + "\n"
