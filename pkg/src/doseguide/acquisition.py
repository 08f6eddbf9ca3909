"""Interior-point safe dose selection over a fixed grid.

Each constraint surrogate contributes a lower confidence bound
``mu - beta_sqrt * sigma``; grid points where every bound clears the
safety margin form the currently revealed safe set. The next dose
maximizes ``acquisition + tau * sum(log(lcb_i))`` over that set, and the
known-safe fallback dose is returned whenever the set is empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import ConfigError
from .gp import GaussianProcess, InputPoint

UCB = "ucb"
EI = "ei"
ACQUISITIONS = (UCB, EI)

BETA_CONSTANT = "constant"
BETA_GROWING = "growing"

NEG_INF = float("-inf")


def default_dose_grid(
    lo: float = 0.0, hi: float = 20.0, points: int = 201
) -> tuple[float, ...]:
    return tuple(np.linspace(lo, hi, points))


@dataclass(frozen=True)
class SafeBOConfig:
    """All optimizer knobs: grid, barrier weight, confidence scaling, fallback."""

    dose_grid: tuple[float, ...] = field(default_factory=default_dose_grid)
    tau: float = 0.05
    beta_sqrt: float = 2.0
    delta: float = 0.05
    fallback_dose: float = 0.0
    acquisition: str = UCB
    ucb_kappa: float = 2.0
    safety_margin: float = 0.0
    beta_mode: str = BETA_CONSTANT
    tau_decay: bool = False

    def __post_init__(self):
        grid = np.asarray(self.dose_grid, dtype=float)
        if grid.size == 0:
            raise ConfigError("dose_grid", "must be non-empty")
        if np.any(np.diff(grid) <= 0):
            raise ConfigError("dose_grid", "must be strictly ascending")
        if grid[0] < 0:
            raise ConfigError("dose_grid", "doses must be >= 0")
        if not (self.tau > 0):
            raise ConfigError("tau", f"must be > 0, got {self.tau}")
        if self.beta_sqrt < 0:
            raise ConfigError("beta_sqrt", f"must be >= 0, got {self.beta_sqrt}")
        if not (0 < self.delta < 1):
            raise ConfigError("delta", f"must be in (0, 1), got {self.delta}")
        if not (grid[0] <= self.fallback_dose <= grid[-1]):
            raise ConfigError(
                "fallback_dose",
                f"{self.fallback_dose} outside dose domain [{grid[0]}, {grid[-1]}]",
            )
        if self.acquisition not in ACQUISITIONS:
            raise ConfigError("acquisition", f"unknown acquisition {self.acquisition!r}")
        if self.safety_margin < 0:
            raise ConfigError("safety_margin", f"must be >= 0, got {self.safety_margin}")
        if self.beta_mode not in (BETA_CONSTANT, BETA_GROWING):
            raise ConfigError("beta_mode", f"unknown mode {self.beta_mode!r}")

    @property
    def dose_bounds(self) -> tuple[float, float]:
        return (self.dose_grid[0], self.dose_grid[-1])

    def grid_array(self) -> np.ndarray:
        return np.asarray(self.dose_grid, dtype=float)


@dataclass(frozen=True)
class SafeRegionView:
    """Per-grid-point safety mask and the constraint bounds that produced it."""

    safe_mask: np.ndarray  # (n_grid,) bool
    lcb_values: np.ndarray  # (n_constraints, n_grid)


@dataclass(frozen=True)
class DoseDecision:
    dose: float
    fallback_used: bool
    acquisition_trace: np.ndarray  # objective per grid point, -inf where unsafe


@dataclass(frozen=True)
class GridEvaluation:
    """Everything the selection rule computed over the dose grid."""

    doses: np.ndarray
    reward_mean: np.ndarray
    reward_std: np.ndarray
    lcb_values: np.ndarray  # (n_constraints, n_grid)
    safe_mask: np.ndarray
    objective: np.ndarray  # acquisition + tau * sum(log lcb); -inf where unsafe
    beta_sqrt: float
    tau: float


def beta_schedule(k: int, cfg: SafeBOConfig) -> float:
    """Confidence scaling at iteration k (>= 1); non-decreasing in k."""
    if k < 1:
        raise ValueError(f"iteration index must be >= 1, got {k}")
    if cfg.beta_mode == BETA_GROWING:
        return cfg.beta_sqrt * math.sqrt(1.0 + math.log(k))
    return cfg.beta_sqrt


def constraint_lcb(gp: GaussianProcess, q: InputPoint, beta_sqrt: float) -> float:
    """Lower confidence bound mu(q) - beta_sqrt * sigma(q)."""
    if beta_sqrt < 0:
        raise ValueError(f"beta_sqrt must be >= 0, got {beta_sqrt}")
    mean, std = gp.posterior(q)
    return mean - beta_sqrt * std


def barrier_value(lcb: float) -> float:
    """Log-barrier bonus for one constraint bound; -inf marks infeasible."""
    if lcb <= 0:
        return NEG_INF
    return math.log(lcb)


def _grid_coords(cfg: SafeBOConfig, context: tuple[float, ...]) -> np.ndarray:
    grid = cfg.grid_array()
    coords = np.empty((grid.size, 1 + len(context)))
    coords[:, 0] = grid
    coords[:, 1:] = np.asarray(context, dtype=float)
    return coords


def reveal_safe_region(
    constraint_gps: list[GaussianProcess],
    context: tuple[float, ...],
    cfg: SafeBOConfig,
    beta_sqrt: float | None = None,
) -> SafeRegionView:
    """Mark grid points where every constraint's LCB clears the margin."""
    if not constraint_gps:
        raise ValueError("at least one constraint surrogate is required")
    beta = cfg.beta_sqrt if beta_sqrt is None else beta_sqrt
    coords = _grid_coords(cfg, context)
    lcb = np.empty((len(constraint_gps), coords.shape[0]))
    for i, gp in enumerate(constraint_gps):
        mean, std = gp.posterior_many(coords)
        lcb[i] = mean - beta * std
    mask = np.all(lcb > cfg.safety_margin, axis=0)
    return SafeRegionView(safe_mask=mask, lcb_values=lcb)


def acquisition_base(
    reward_gp: GaussianProcess,
    q: InputPoint,
    cfg: SafeBOConfig,
    incumbent: float | None = None,
) -> float:
    """Unconstrained desirability of evaluating q under the reward surrogate."""
    mean, std = reward_gp.posterior(q)
    return float(
        _acquisition_values(
            np.array([mean]), np.array([std]), cfg, incumbent
        )[0]
    )


def _acquisition_values(
    mean: np.ndarray,
    std: np.ndarray,
    cfg: SafeBOConfig,
    incumbent: float | None,
) -> np.ndarray:
    # EI needs a tracked best observed reward; fall back to UCB without one.
    if cfg.acquisition == EI and incumbent is not None:
        improvement = mean - incumbent
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(std > 0, improvement / np.where(std > 0, std, 1.0), 0.0)
            ei = improvement * norm.cdf(z) + std * norm.pdf(z)
        return np.where(std > 0, ei, np.maximum(improvement, 0.0))
    return mean + cfg.ucb_kappa * std


def evaluate_grid(
    reward_gp: GaussianProcess,
    constraint_gps: list[GaussianProcess],
    context: tuple[float, ...],
    cfg: SafeBOConfig,
    incumbent: float | None = None,
    iteration: int = 1,
) -> GridEvaluation:
    """Evaluate the safety mask and the barrier objective over the grid."""
    beta = beta_schedule(iteration, cfg)
    tau = cfg.tau / math.sqrt(iteration) if cfg.tau_decay else cfg.tau
    view = reveal_safe_region(constraint_gps, context, cfg, beta_sqrt=beta)

    coords = _grid_coords(cfg, context)
    mean, std = reward_gp.posterior_many(coords)
    acq = _acquisition_values(mean, std, cfg, incumbent)

    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(
            view.lcb_values > 0, np.log(np.maximum(view.lcb_values, 1e-300)), NEG_INF
        )
    objective = np.where(view.safe_mask, acq + tau * logs.sum(axis=0), NEG_INF)
    return GridEvaluation(
        doses=cfg.grid_array(),
        reward_mean=mean,
        reward_std=std,
        lcb_values=view.lcb_values,
        safe_mask=view.safe_mask,
        objective=objective,
        beta_sqrt=beta,
        tau=tau,
    )


def select_dose(
    reward_gp: GaussianProcess,
    constraint_gps: list[GaussianProcess],
    context: tuple[float, ...],
    cfg: SafeBOConfig,
    incumbent: float | None = None,
    iteration: int = 1,
) -> DoseDecision:
    """Pick the next dose: barrier-augmented grid argmax, or the fallback.

    Ties break toward the smaller dose. The returned decision always satisfies
    the surrogate safety certificate: when ``fallback_used`` is False, every
    constraint's LCB at the chosen dose exceeds the safety margin.
    """
    ev = evaluate_grid(reward_gp, constraint_gps, context, cfg, incumbent, iteration)
    if not ev.safe_mask.any():
        return DoseDecision(cfg.fallback_dose, True, ev.objective)
    j = int(np.argmax(ev.objective))  # first max = smallest dose on ties
    return DoseDecision(float(ev.doses[j]), False, ev.objective)
