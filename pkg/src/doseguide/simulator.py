"""Virtual type-1-diabetes patient.

Minimal-model glucose-insulin dynamics with two-compartment subcutaneous
insulin absorption and two-compartment gut carbohydrate absorption:

    dS1 = u_bolus + u_basal - ka1*S1          (sc insulin depots, U)
    dS2 = ka1*S1 - ka2*S2
    dI  = ka2*S2*1e4/VI - ke*I                (plasma insulin, mU/l)
    dX  = -p2*X + p3*(I - Ib)                 (remote insulin action, 1/min)
    dD1 = cho_in - kg1*D1                     (gut carbohydrate, g)
    dD2 = kg1*D1 - kg2*D2
    dG  = -p1*(G - Gb) - X*G + f*kg2*D2*(5600/VG)   (plasma glucose, mg/dl)

Boluses and meals enter as impulses on S1/D1 at the start of a step; basal
insulin is a constant rate. Integration is fixed-step fourth-order
Runge-Kutta on plain floats (the trial harness steps every minute for
weeks, so this loop is kept allocation-free).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CohortGenerationError, ConfigError

GLUCOSE_FLOOR = 20.0  # simulation floor, mg/dl
SENSOR_MIN = 20.0
SENSOR_MAX = 600.0

CARB_TO_GLUCOSE = 5600.0  # fixed conversion constant in dG, mg*dl^-1 scaling


@dataclass(frozen=True)
class PatientParams:
    """One subject's physiology. Rates are per minute."""

    p1: float  # glucose effectiveness
    p2: float  # remote-insulin decay
    p3: float  # insulin action gain
    ke: float  # insulin clearance
    ka1: float  # sc absorption, depot 1 -> 2
    ka2: float  # sc absorption, depot 2 -> plasma
    kg1: float  # gut absorption, compartment 1 -> 2
    kg2: float  # gut absorption, compartment 2 -> plasma
    f: float  # carb bioavailability
    vg: float  # glucose distribution volume (dl)
    vi: float  # insulin distribution volume (dl)
    gb: float  # basal glucose, mg/dl
    basal_rate: float  # basal insulin, U/min

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "ke", "ka1", "ka2", "kg1", "kg2", "vg", "vi"):
            if not (getattr(self, name) > 0):
                raise ConfigError(name, f"must be > 0, got {getattr(self, name)}")
        if not (0 < self.f <= 1):
            raise ConfigError("f", f"must be in (0, 1], got {self.f}")
        if not (90 <= self.gb <= 160):
            raise ConfigError("gb", f"must be in [90, 160] mg/dl, got {self.gb}")
        if self.basal_rate < 0:
            raise ConfigError("basal_rate", "must be >= 0")

    @property
    def insulin_sensitivity(self) -> float:
        return self.p3 / self.p2

    @property
    def basal_insulin(self) -> float:
        """Plasma insulin at basal equilibrium, mU/l."""
        return self.basal_rate * 1e4 / (self.vi * self.ke)


def nominal_params() -> PatientParams:
    return PatientParams(
        p1=0.008,
        p2=0.02,
        p3=1.2e-5,
        ke=0.12,
        ka1=0.025,
        ka2=0.02,
        kg1=0.035,
        kg2=0.022,
        f=0.9,
        vg=1400.0,
        vi=120.0,
        gb=120.0,
        basal_rate=0.01,
    )


@dataclass(frozen=True)
class PatientState:
    g: float  # plasma glucose, mg/dl
    x: float  # remote insulin action, 1/min
    i: float  # plasma insulin, mU/l
    s1: float  # sc insulin depot 1, U
    s2: float  # sc insulin depot 2, U
    d1: float  # gut carbohydrate 1, g
    d2: float  # gut carbohydrate 2, g


def basal_state(params: PatientParams) -> PatientState:
    """Equilibrium under basal insulin only: all derivatives vanish."""
    return PatientState(
        g=params.gb,
        x=0.0,
        i=params.basal_insulin,
        s1=params.basal_rate / params.ka1,
        s2=params.basal_rate / params.ka2,
        d1=0.0,
        d2=0.0,
    )


def derivatives(
    state: PatientState, params: PatientParams, basal: float | None = None
) -> tuple[float, float, float, float, float, float, float]:
    """State rates (dG, dX, dI, dS1, dS2, dD1, dD2) with no impulse inputs."""
    u = params.basal_rate if basal is None else basal
    return _rates(
        state.g, state.x, state.i, state.s1, state.s2, state.d1, state.d2, params, u
    )


def _rates(g, x, i, s1, s2, d1, d2, p: PatientParams, basal: float):
    ds1 = basal - p.ka1 * s1
    ds2 = p.ka1 * s1 - p.ka2 * s2
    di = p.ka2 * s2 * 1e4 / p.vi - p.ke * i
    dx = -p.p2 * x + p.p3 * (i - p.basal_insulin)
    dd1 = -p.kg1 * d1
    dd2 = p.kg1 * d1 - p.kg2 * d2
    dg = -p.p1 * (g - p.gb) - x * g + p.f * p.kg2 * d2 * (CARB_TO_GLUCOSE / p.vg)
    return dg, dx, di, ds1, ds2, dd1, dd2


def step(
    state: PatientState,
    params: PatientParams,
    bolus: float = 0.0,
    cho: float = 0.0,
    basal: float | None = None,
    dt: float = 1.0,
) -> PatientState:
    """Advance one RK4 step of dt minutes; impulses land on S1/D1 first."""
    if not (0 < dt <= 1.0):
        raise ValueError(f"dt must be in (0, 1] min, got {dt}")
    u = params.basal_rate if basal is None else basal
    g, x, i = state.g, state.x, state.i
    s1, s2 = state.s1 + bolus, state.s2
    d1, d2 = state.d1 + cho, state.d2

    k1 = _rates(g, x, i, s1, s2, d1, d2, params, u)
    h = 0.5 * dt
    k2 = _rates(
        g + h * k1[0], x + h * k1[1], i + h * k1[2], s1 + h * k1[3],
        s2 + h * k1[4], d1 + h * k1[5], d2 + h * k1[6], params, u,
    )
    k3 = _rates(
        g + h * k2[0], x + h * k2[1], i + h * k2[2], s1 + h * k2[3],
        s2 + h * k2[4], d1 + h * k2[5], d2 + h * k2[6], params, u,
    )
    k4 = _rates(
        g + dt * k3[0], x + dt * k3[1], i + dt * k3[2], s1 + dt * k3[3],
        s2 + dt * k3[4], d1 + dt * k3[5], d2 + dt * k3[6], params, u,
    )
    w = dt / 6.0
    g = g + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    x = x + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    i = i + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    s1 = s1 + w * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    s2 = s2 + w * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
    d1 = d1 + w * (k1[5] + 2 * k2[5] + 2 * k3[5] + k4[5])
    d2 = d2 + w * (k1[6] + 2 * k2[6] + 2 * k3[6] + k4[6])

    return PatientState(
        g=max(g, GLUCOSE_FLOOR),
        x=max(x, 0.0),
        i=max(i, 0.0),
        s1=max(s1, 0.0),
        s2=max(s2, 0.0),
        d1=max(d1, 0.0),
        d2=max(d2, 0.0),
    )


@dataclass(frozen=True)
class CgmModel:
    """Continuous glucose monitor: periodic, noisy, optionally delayed."""

    sample_period: float = 5.0  # min
    noise_std: float = 2.0  # mg/dl
    sensor_delay: float = 0.0  # min

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ConfigError("sample_period", "must be > 0")
        if self.noise_std < 0:
            raise ConfigError("noise_std", "must be >= 0")
        if self.sensor_delay < 0:
            raise ConfigError("sensor_delay", "must be >= 0")


def cgm_read(
    state: PatientState,
    model: CgmModel,
    rng: np.random.Generator,
    history: list[tuple[float, float]] | None = None,
    now: float | None = None,
) -> float:
    """One sensor sample: delayed glucose plus Gaussian noise, range-clamped.

    ``history`` is a list of (t_min, glucose) pairs used when sensor_delay > 0;
    without it (or with zero delay) the current glucose is read.
    """
    value = state.g
    if model.sensor_delay > 0 and history and now is not None:
        target = now - model.sensor_delay
        value = history[0][1]
        for t, g in history:
            if t <= target:
                value = g
            else:
                break
    if model.noise_std > 0:
        value += rng.normal(0.0, model.noise_std)
    return min(max(value, SENSOR_MIN), SENSOR_MAX)


# -- cohort generation ----------------------------------------------------

SCREEN_MEAL_GRAMS = 60.0
SCREEN_PEAK_RANGE = (180.0, 400.0)
SCREEN_HORIZON_MIN = 300
MAX_REDRAWS = 100

_LOGNORMAL_FIELDS = ("p1", "p2", "p3", "ke", "ka1", "ka2", "kg1", "kg2", "vg", "vi")


def unbolused_meal_peak(params: PatientParams, grams: float = SCREEN_MEAL_GRAMS) -> float:
    """Peak glucose after one meal with no bolus, from basal equilibrium."""
    state = step(basal_state(params), params, cho=grams)
    peak = state.g
    for _ in range(SCREEN_HORIZON_MIN - 1):
        state = step(state, params)
        peak = max(peak, state.g)
    return peak


def screen_patient(params: PatientParams) -> bool:
    """Basal equilibrium holds for a day and an unbolused meal peaks sanely."""
    state = basal_state(params)
    for _ in range(1440):
        state = step(state, params)
        if abs(state.g - params.gb) > 1.0:
            return False
    lo, hi = SCREEN_PEAK_RANGE
    return lo < unbolused_meal_peak(params) < hi


def generate_cohort(
    n: int, seed: int, variability: float = 0.2
) -> list[PatientParams]:
    """Draw n screened parameter sets around the nominal patient.

    Multiplicative log-normal spread on rates and volumes; deterministic
    under the seed. Raises after 100 rejected draws for any slot.
    """
    if n < 1:
        raise ConfigError("n", f"must be >= 1, got {n}")
    if not (0 <= variability <= 0.5):
        raise ConfigError("variability", f"must be in [0, 0.5], got {variability}")
    nominal = nominal_params()
    rng = np.random.default_rng(seed)
    cohort: list[PatientParams] = []
    for slot in range(n):
        for _ in range(MAX_REDRAWS):
            draw = _draw_params(nominal, rng, variability)
            if screen_patient(draw):
                cohort.append(draw)
                break
        else:
            raise CohortGenerationError(
                f"no parameter draw passed screening for cohort slot {slot}"
            )
    return cohort


def _draw_params(
    nominal: PatientParams, rng: np.random.Generator, spread: float
) -> PatientParams:
    if spread == 0:
        return nominal
    changes = {
        name: getattr(nominal, name) * math.exp(rng.normal(0.0, spread))
        for name in _LOGNORMAL_FIELDS
    }
    changes["f"] = min(1.0, nominal.f * math.exp(rng.normal(0.0, spread / 2)))
    changes["gb"] = float(np.clip(rng.normal(nominal.gb, spread * 40.0), 95.0, 155.0))
    changes["basal_rate"] = nominal.basal_rate * math.exp(rng.normal(0.0, spread / 2))
    return replace(nominal, **changes)


# -- cohort file round-trip ------------------------------------------------

_PARAM_FIELDS = (
    "p1", "p2", "p3", "ke", "ka1", "ka2", "kg1", "kg2",
    "f", "vg", "vi", "gb", "basal_rate",
)


def cohort_to_text(cohort: list[PatientParams]) -> str:
    """One record per patient: comma-separated values under a header line."""
    lines = ["patient," + ",".join(_PARAM_FIELDS)]
    for idx, p in enumerate(cohort):
        lines.append(
            f"{idx}," + ",".join(repr(getattr(p, name)) for name in _PARAM_FIELDS)
        )
    return "\n".join(lines) + "\n"


def cohort_from_text(text: str) -> list[PatientParams]:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[1:] != list(_PARAM_FIELDS):
        raise ConfigError("cohort_file", f"unexpected header {lines[0]!r}")
    cohort = []
    for ln in lines[1:]:
        cells = ln.split(",")
        values = {name: float(v) for name, v in zip(_PARAM_FIELDS, cells[1:])}
        cohort.append(PatientParams(**values))
    return cohort
