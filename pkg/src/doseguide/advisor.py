"""Per-patient bolus dose advisor.

The advisor is a small state machine around the safe optimizer: a meal
announcement opens an episode with a recommended dose, CGM samples stream
into the open window, and closing the episode extracts one reward
observation (negated postprandial peak) and one hypoglycemia-constraint
observation (window minimum minus 70 mg/dl), both conditioned into the
per-category surrogates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .acquisition import DoseDecision, SafeBOConfig, select_dose
from .errors import ConfigError, ProtocolError, SequencingError
from .gp import (
    GaussianProcess,
    HyperBounds,
    InputPoint,
    KernelSpec,
    Observation,
    fit_hyperparameters,
)

log = logging.getLogger(__name__)

CATEGORIES = ("S", "M", "L", "XL")
DEFAULT_CATEGORY_GRAMS = {"S": 30.0, "M": 60.0, "L": 90.0, "XL": 120.0}

GLUCOSE_MIN = 20.0  # sensor range clamp, mg/dl
GLUCOSE_MAX = 600.0
HYPO_THRESHOLD = 70.0  # constraint zero line, mg/dl
MINUTES_PER_DAY = 1440.0
PREMEAL_BUFFER_MIN = 60.0


@dataclass(frozen=True)
class MealAnnouncement:
    """A meal event: when it happens, its size category, and its carbohydrates."""

    time_min: float
    size_category: str
    cho_grams: float

    def __post_init__(self):
        if self.time_min < 0 or not math.isfinite(self.time_min):
            raise ConfigError("time_min", f"must be finite and >= 0, got {self.time_min}")
        if self.size_category not in CATEGORIES:
            raise ConfigError(
                "size_category", f"must be one of {CATEGORIES}, got {self.size_category!r}"
            )
        if not (self.cho_grams > 0):
            raise ConfigError("cho_grams", f"must be > 0, got {self.cho_grams}")


@dataclass(frozen=True)
class Context:
    """Normalized side information attached to a dose decision."""

    features: tuple[float, ...]


def encode_context(
    meal: MealAnnouncement,
    mealtime_enabled: bool = False,
    cho_max_grams: float = 150.0,
) -> Context:
    """Map a meal to normalized features: carb load, optionally time of day."""
    frac = meal.cho_grams / cho_max_grams
    if frac > 1.0:
        log.warning(
            "meal of %.0f g exceeds the %.0f g context ceiling; clamping",
            meal.cho_grams,
            cho_max_grams,
        )
        frac = 1.0
    features = [frac]
    if mealtime_enabled:
        features.append((meal.time_min % MINUTES_PER_DAY) / MINUTES_PER_DAY)
    return Context(tuple(features))


def window_bounds(
    meal_time: float, next_meal_time: float | None = None, cap_min: float = 300.0
) -> tuple[float, float]:
    """Postprandial observation window: meal time to the earlier of cap or next meal."""
    if next_meal_time is not None and next_meal_time <= meal_time:
        raise ValueError(
            f"next meal at {next_meal_time} must be after meal at {meal_time}"
        )
    end = meal_time + cap_min
    if next_meal_time is not None:
        end = min(end, next_meal_time)
    return meal_time, end


@dataclass
class Episode:
    """One meal event from announcement to window closure."""

    index: int
    category: str
    context: Context
    meal_time: float
    cho_grams: float
    dose: float
    fallback_used: bool
    window_start: float
    window_end: float
    cgm_times: list[float] = field(default_factory=list)
    cgm_values: list[float] = field(default_factory=list)
    reward_obs: float | None = None
    constraint_obs: float | None = None
    status: str = "open"  # open -> closed | discarded

    def record(self, patient_id: str | int) -> dict:
        return {
            "patient_id": patient_id,
            "k": self.index,
            "meal_time": self.meal_time,
            "category": self.category,
            "cho_g": self.cho_grams,
            "dose_U": self.dose,
            "fallback_used": self.fallback_used,
            "reward_obs": self.reward_obs,
            "constraint_obs": self.constraint_obs,
        }


def _default_reward_kernel(context_dim: int) -> KernelSpec:
    return KernelSpec(signal_std=60.0, lengthscales=(0.3,) + (0.5,) * context_dim)


def _default_constraint_kernel(context_dim: int) -> KernelSpec:
    # Matern-5/2 damps the posterior-mean overshoot a squared-exponential
    # kernel shows when closely spaced window minima disagree; that matters
    # here because an inflated mean far from data widens the safe set.
    return KernelSpec(
        family="matern-5/2",
        signal_std=40.0,
        lengthscales=(0.2,) + (0.5,) * context_dim,
    )


@dataclass(frozen=True)
class AdvisorConfig:
    """Everything the advisor needs beyond the optimizer itself."""

    optimizer: SafeBOConfig = field(default_factory=SafeBOConfig)
    category_grams: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_CATEGORY_GRAMS)
    )
    cho_max_grams: float = 150.0
    mealtime_context: bool = False
    shared_context_gp: bool = False
    window_cap_min: float = 300.0
    min_window_min: float = 120.0
    min_samples: int = 6
    # Episode-level spread of window extrema (initial conditions, meal-time
    # jitter) dominates raw sensor noise, so this sits well above the CGM's
    # 2 mg/dl noise floor.
    observation_noise_std: float = 8.0
    refit_every: int = 5
    reward_kernel: KernelSpec | None = None
    constraint_kernel: KernelSpec | None = None

    def __post_init__(self):
        for cat in CATEGORIES:
            if cat not in self.category_grams:
                raise ConfigError("category_grams", f"missing category {cat!r}")
            if not (self.category_grams[cat] > 0):
                raise ConfigError("category_grams", f"{cat} grams must be > 0")
        if self.cho_max_grams <= 0:
            raise ConfigError("cho_max_grams", "must be > 0")
        if self.observation_noise_std < 0:
            raise ConfigError("observation_noise_std", "must be >= 0")
        if self.min_samples < 1:
            raise ConfigError("min_samples", "must be >= 1")
        if self.refit_every < 0:
            raise ConfigError("refit_every", "must be >= 0 (0 disables refits)")

    @property
    def context_dim(self) -> int:
        return 2 if self.mealtime_context else 1

    def reward_kernel_spec(self) -> KernelSpec:
        return self.reward_kernel or _default_reward_kernel(self.context_dim)

    def constraint_kernel_spec(self) -> KernelSpec:
        return self.constraint_kernel or _default_constraint_kernel(self.context_dim)

    def reward_fit_bounds(self) -> HyperBounds:
        return HyperBounds(
            signal_std=(20.0, 300.0),
            lengthscales=((0.05, 0.45),) + ((0.1, 2.0),) * self.context_dim,
        )

    def meal(self, time_min: float, category: str) -> MealAnnouncement:
        """Build an announcement with the configured grams for a category."""
        return MealAnnouncement(time_min, category, self.category_grams[category])


class AdvisorState:
    """Learning state for one patient. Single writer; replay is deterministic."""

    def __init__(self, config: AdvisorConfig | None = None):
        self.config = config or AdvisorConfig()
        self.episodes: list[Episode] = []
        self.open_episode: Episode | None = None
        self._gps: dict[str, tuple[GaussianProcess, GaussianProcess]] = {}
        self._premeal: list[tuple[float, float]] = []
        self._last_t = -math.inf

    # -- surrogate bookkeeping -------------------------------------------

    def _gp_key(self, category: str) -> str:
        return "shared" if self.config.shared_context_gp else category

    def gp_pair(self, category: str) -> tuple[GaussianProcess, GaussianProcess]:
        key = self._gp_key(category)
        if key not in self._gps:
            bounds = self.config.optimizer.dose_bounds
            self._gps[key] = (
                GaussianProcess(
                    kernel=self.config.reward_kernel_spec(), dose_bounds=bounds
                ),
                GaussianProcess(
                    kernel=self.config.constraint_kernel_spec(), dose_bounds=bounds
                ),
            )
        return self._gps[key]

    @property
    def k(self) -> int:
        """Iteration counter: closed episodes + 1."""
        return 1 + sum(1 for e in self.episodes if e.status == "closed")

    def closed_episodes(self, category: str | None = None) -> list[Episode]:
        return [
            e
            for e in self.episodes
            if e.status == "closed" and (category is None or e.category == category)
        ]

    def incumbent(self, category: str) -> float | None:
        rewards = [e.reward_obs for e in self.closed_episodes(category)]
        return max(rewards) if rewards else None

    # -- episode lifecycle -----------------------------------------------

    def recommend_dose(self, meal: MealAnnouncement) -> DoseDecision:
        """Open a new episode with the safe optimizer's dose for this meal."""
        if self.open_episode is not None:
            raise ProtocolError(
                "an episode is already open; close it before announcing another meal"
            )
        context = encode_context(
            meal, self.config.mealtime_context, self.config.cho_max_grams
        )
        reward_gp, constraint_gp = self.gp_pair(meal.size_category)
        decision = select_dose(
            reward_gp,
            [constraint_gp],
            context.features,
            self.config.optimizer,
            incumbent=self.incumbent(meal.size_category),
            iteration=self.k,
        )
        start, end = window_bounds(
            meal.time_min, cap_min=self.config.window_cap_min
        )
        episode = Episode(
            index=self.k,
            category=meal.size_category,
            context=context,
            meal_time=meal.time_min,
            cho_grams=meal.cho_grams,
            dose=decision.dose,
            fallback_used=decision.fallback_used,
            window_start=start,
            window_end=end,
        )
        self.open_episode = episode
        return decision

    def ingest_cgm(self, t: float, glucose: float) -> None:
        """Add one CGM sample; samples outside any open window feed a rolling buffer."""
        if t < self._last_t:
            raise SequencingError(
                f"CGM sample at t={t} precedes the last sample at t={self._last_t}"
            )
        self._last_t = t
        value = min(max(glucose, GLUCOSE_MIN), GLUCOSE_MAX)
        ep = self.open_episode
        if ep is not None and ep.window_start <= t <= ep.window_end:
            # window timestamps stay strictly increasing; a same-instant
            # duplicate falls through to the rolling buffer instead
            if not ep.cgm_times or t > ep.cgm_times[-1]:
                ep.cgm_times.append(t)
                ep.cgm_values.append(value)
                return
        self._premeal.append((t, value))
        cutoff = t - PREMEAL_BUFFER_MIN
        self._premeal = [(tt, vv) for tt, vv in self._premeal if tt >= cutoff]

    def premeal_buffer(self) -> list[tuple[float, float]]:
        return list(self._premeal)

    def close_episode(
        self, now: float, next_meal_time: float | None = None
    ) -> tuple[float, float] | None:
        """Extract (reward, constraint) from the open window and learn from them.

        Returns None when the window held too few samples; the episode is
        then discarded and the surrogates stay untouched.
        """
        ep = self.open_episode
        if ep is None:
            raise ProtocolError("no open episode to close")
        matured = now >= ep.meal_time + self.config.min_window_min
        if not matured and next_meal_time is None and now < ep.window_end:
            raise ProtocolError(
                f"window opened at {ep.meal_time} cannot close at {now}; wait "
                f"{self.config.min_window_min} min or announce the next meal"
            )
        self.open_episode = None
        self.episodes.append(ep)
        if len(ep.cgm_values) < self.config.min_samples:
            ep.status = "discarded"
            log.warning(
                "episode %d discarded: only %d CGM samples in window",
                ep.index,
                len(ep.cgm_values),
            )
            return None

        reward = -max(ep.cgm_values)
        constraint = min(ep.cgm_values) - HYPO_THRESHOLD
        ep.reward_obs = reward
        ep.constraint_obs = constraint
        ep.status = "closed"

        point = InputPoint(ep.dose, ep.context.features)
        noise = self.config.observation_noise_std
        key = self._gp_key(ep.category)
        reward_gp, constraint_gp = self.gp_pair(ep.category)
        reward_gp = reward_gp.condition(Observation(point, reward, noise))
        constraint_gp = constraint_gp.condition(Observation(point, constraint, noise))

        # Reward hyperparameters are refit periodically; the constraint
        # surrogate keeps its conservative kernel so safe-set growth stays
        # controlled by configuration, not by scarce-data fits.
        every = self.config.refit_every
        if every > 0 and reward_gp.n_observations % every == 0:
            spec = fit_hyperparameters(reward_gp, self.config.reward_fit_bounds())
            reward_gp = reward_gp.with_kernel(spec)
        self._gps[key] = (reward_gp, constraint_gp)
        return reward, constraint


def episode_records(state: AdvisorState, patient_id: str | int) -> list[dict]:
    """Flat episode log rows in announcement order."""
    return [e.record(patient_id) for e in state.episodes]
