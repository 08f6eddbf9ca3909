"""Safe selection: bounds, barrier, safe region, grid argmax equivalence."""

from __future__ import annotations

import math

import numpy as np
import pytest

from doseguide.acquisition import (
    SafeBOConfig,
    acquisition_base,
    barrier_value,
    beta_schedule,
    constraint_lcb,
    reveal_safe_region,
    select_dose,
)
from doseguide.errors import ConfigError
from doseguide.gp import GaussianProcess, InputPoint, KernelSpec, Observation


def brute_force_select(reward_gp, constraint_gps, context, cfg, incumbent=None, iteration=1):
    """Independent per-point re-evaluation of the selection rule.

    Walks the grid point by point with scalar posterior calls: no masking
    shortcuts, no vectorized paths shared with the implementation.
    """
    from scipy.stats import norm

    beta = cfg.beta_sqrt
    if cfg.beta_mode == "growing":
        beta = cfg.beta_sqrt * math.sqrt(1 + math.log(iteration))
    tau = cfg.tau / math.sqrt(iteration) if cfg.tau_decay else cfg.tau

    best_j, best_val = None, -math.inf
    for j, dose in enumerate(cfg.dose_grid):
        q = InputPoint(dose, tuple(context))
        feasible = True
        barrier_sum = 0.0
        for gp in constraint_gps:
            mu, sigma = gp.posterior(q)
            lcb = mu - beta * sigma
            if lcb <= cfg.safety_margin or lcb <= 0:
                feasible = False
                break
            barrier_sum += math.log(lcb)
        if not feasible:
            continue
        mu0, s0 = reward_gp.posterior(q)
        if cfg.acquisition == "ei" and incumbent is not None:
            if s0 > 0:
                z = (mu0 - incumbent) / s0
                acq = (mu0 - incumbent) * norm.cdf(z) + s0 * norm.pdf(z)
            else:
                acq = max(mu0 - incumbent, 0.0)
        else:
            acq = mu0 + cfg.ucb_kappa * s0
        val = acq + tau * barrier_sum
        if val > best_val:
            best_j, best_val = j, val
    if best_j is None:
        return cfg.fallback_dose, True
    return cfg.dose_grid[best_j], False


def trained_pair(rng, cfg, n_obs, context_dim=0):
    reward = GaussianProcess(
        kernel=KernelSpec(signal_std=5.0, lengthscales=(0.25,) + (0.5,) * context_dim),
        dose_bounds=cfg.dose_bounds,
    )
    constraint = GaussianProcess(
        kernel=KernelSpec(signal_std=3.0, lengthscales=(0.2,) + (0.5,) * context_dim),
        dose_bounds=cfg.dose_bounds,
    )
    for _ in range(n_obs):
        p = InputPoint(
            float(rng.uniform(*cfg.dose_bounds)), tuple(rng.uniform(0, 1, context_dim))
        )
        reward = reward.condition(Observation(p, float(rng.normal(0, 4)), 0.3))
        constraint = constraint.condition(Observation(p, float(rng.normal(1, 2)), 0.3))
    return reward, constraint


class TestConfig:
    def test_rejects_bad_tau(self):
        with pytest.raises(ConfigError, match="tau"):
            SafeBOConfig(tau=0.0)

    def test_rejects_descending_grid(self):
        with pytest.raises(ConfigError, match="dose_grid"):
            SafeBOConfig(dose_grid=(3.0, 2.0, 1.0))

    def test_rejects_fallback_outside_domain(self):
        with pytest.raises(ConfigError, match="fallback_dose"):
            SafeBOConfig(dose_grid=(1.0, 2.0), fallback_dose=0.0)

    def test_default_grid(self):
        cfg = SafeBOConfig()
        grid = cfg.grid_array()
        assert grid.size == 201
        assert grid[0] == 0.0 and grid[-1] == 20.0
        assert np.allclose(np.diff(grid), 0.1)


class TestConstraintLCB:
    def test_arithmetic(self):
        gp = GaussianProcess(
            kernel=KernelSpec(signal_std=2.0), prior_mean=10.0
        )
        # prior: mu=10, sigma=2
        assert constraint_lcb(gp, InputPoint(1.0), 2.0) == pytest.approx(6.0)

    def test_zero_beta_returns_mean(self):
        rng = np.random.default_rng(5)
        gp = GaussianProcess(dose_bounds=(0, 20))
        for _ in range(4):
            gp = gp.condition(
                Observation(InputPoint(float(rng.uniform(0, 20))), float(rng.normal()), 0.2)
            )
        q = InputPoint(7.3)
        mu, _ = gp.posterior(q)
        assert constraint_lcb(gp, q, 0.0) == pytest.approx(mu)

    def test_prior_only(self):
        gp = GaussianProcess(kernel=KernelSpec(signal_std=1.5), prior_mean=0.0)
        assert constraint_lcb(gp, InputPoint(0.0), 2.0) == pytest.approx(-3.0)


class TestSafeRegion:
    def test_untrained_prior_is_all_unsafe(self):
        cfg = SafeBOConfig()
        gp = GaussianProcess(kernel=KernelSpec(signal_std=1.0), prior_mean=0.0)
        view = reveal_safe_region([gp], (), cfg)
        assert not view.safe_mask.any()

    def test_single_positive_point(self):
        cfg = SafeBOConfig(dose_grid=tuple(np.linspace(0, 20, 21)))
        gp = GaussianProcess(
            kernel=KernelSpec(signal_std=1.0, lengthscales=(0.02,)),
            dose_bounds=cfg.dose_bounds,
        )
        gp = gp.condition(Observation(InputPoint(10.0), 8.0, 0.01))
        view = reveal_safe_region([gp], (), cfg)
        assert view.safe_mask.sum() == 1
        assert view.safe_mask[10]

    def test_matches_pointwise_recomputation(self):
        rng = np.random.default_rng(7)
        cfg = SafeBOConfig(dose_grid=tuple(np.linspace(0, 20, 41)))
        _, constraint = trained_pair(rng, cfg, n_obs=10)
        view = reveal_safe_region([constraint], (), cfg)
        for j, dose in enumerate(cfg.dose_grid):
            lcb = constraint_lcb(constraint, InputPoint(dose), cfg.beta_sqrt)
            assert view.lcb_values[0][j] == pytest.approx(lcb, abs=1e-9)
            assert view.safe_mask[j] == (lcb > cfg.safety_margin)


class TestBarrier:
    def test_log_one_is_zero(self):
        assert barrier_value(1.0) == 0.0

    def test_log_e_is_one(self):
        assert barrier_value(math.e) == pytest.approx(1.0)

    def test_vanishing_lcb_sends_objective_down(self):
        assert barrier_value(1e-12) < -20
        assert barrier_value(0.0) == -math.inf
        assert barrier_value(-3.0) == -math.inf


class TestAcquisitionBase:
    def test_ucb_arithmetic(self):
        gp = GaussianProcess(kernel=KernelSpec(signal_std=1.0), prior_mean=5.0)
        cfg = SafeBOConfig(ucb_kappa=2.0)
        assert acquisition_base(gp, InputPoint(0.0), cfg) == pytest.approx(7.0)

    def test_ei_zero_variance_at_incumbent(self):
        gp = GaussianProcess(jitter=0.0).condition(
            Observation(InputPoint(3.0), 1.0, 0.0)
        )
        cfg = SafeBOConfig(acquisition="ei")
        val = acquisition_base(gp, InputPoint(3.0), cfg, incumbent=1.0)
        assert val == pytest.approx(0.0, abs=1e-9)

    def test_ei_at_mean_equal_incumbent(self):
        gp = GaussianProcess(kernel=KernelSpec(signal_std=1.0), prior_mean=2.0)
        cfg = SafeBOConfig(acquisition="ei")
        val = acquisition_base(gp, InputPoint(0.0), cfg, incumbent=2.0)
        assert val == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-9)

    def test_ei_without_incumbent_falls_back_to_ucb(self):
        gp = GaussianProcess(kernel=KernelSpec(signal_std=1.0), prior_mean=5.0)
        cfg = SafeBOConfig(acquisition="ei", ucb_kappa=2.0)
        assert acquisition_base(gp, InputPoint(0.0), cfg) == pytest.approx(7.0)


class TestBetaSchedule:
    def test_constant(self):
        cfg = SafeBOConfig(beta_sqrt=2.0)
        assert beta_schedule(1, cfg) == 2.0
        assert beta_schedule(1000, cfg) == 2.0

    def test_growing_at_one(self):
        cfg = SafeBOConfig(beta_sqrt=1.7, beta_mode="growing")
        assert beta_schedule(1, cfg) == pytest.approx(1.7)

    def test_growing_doubles_near_e_cubed(self):
        cfg = SafeBOConfig(beta_sqrt=2.0, beta_mode="growing")
        k = round(math.e**3)
        assert beta_schedule(k, cfg) == pytest.approx(4.0, rel=0.03)

    def test_monotone(self):
        cfg = SafeBOConfig(beta_sqrt=1.0, beta_mode="growing")
        vals = [beta_schedule(k, cfg) for k in range(1, 50)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestSelectDose:
    def test_untrained_falls_back_to_zero(self):
        cfg = SafeBOConfig()
        reward = GaussianProcess(dose_bounds=cfg.dose_bounds)
        constraint = GaussianProcess(dose_bounds=cfg.dose_bounds)
        decision = select_dose(reward, [constraint], (), cfg)
        assert decision.fallback_used
        assert decision.dose == 0.0

    def test_single_safe_point_wins(self):
        cfg = SafeBOConfig(dose_grid=tuple(np.linspace(0, 20, 21)))
        reward = GaussianProcess(dose_bounds=cfg.dose_bounds)
        constraint = GaussianProcess(
            kernel=KernelSpec(signal_std=1.0, lengthscales=(0.02,)),
            dose_bounds=cfg.dose_bounds,
        ).condition(Observation(InputPoint(13.0), 9.0, 0.01))
        decision = select_dose(reward, [constraint], (), cfg)
        assert not decision.fallback_used
        assert decision.dose == pytest.approx(13.0)

    def test_matches_brute_force_on_randomized_instances(self):
        rng = np.random.default_rng(42)
        for trial in range(60):
            cfg = SafeBOConfig(
                dose_grid=tuple(np.linspace(0, 20, int(rng.integers(11, 51)))),
                tau=float(rng.uniform(0.01, 2.0)),
                beta_sqrt=float(rng.uniform(0.0, 3.0)),
                ucb_kappa=float(rng.uniform(0.5, 3.0)),
                acquisition=str(rng.choice(["ucb", "ei"])),
                beta_mode=str(rng.choice(["constant", "growing"])),
                tau_decay=bool(rng.integers(0, 2)),
                safety_margin=float(rng.uniform(0, 0.5)),
            )
            n_obs = int(rng.integers(0, 12))
            reward, constraint = trained_pair(rng, cfg, n_obs)
            incumbent = float(rng.normal(0, 3)) if rng.random() < 0.5 else None
            iteration = int(rng.integers(1, 30))
            got = select_dose(
                reward, [constraint], (), cfg, incumbent=incumbent, iteration=iteration
            )
            want_dose, want_fb = brute_force_select(
                reward, [constraint], (), cfg, incumbent=incumbent, iteration=iteration
            )
            assert got.fallback_used == want_fb, f"trial {trial}"
            assert got.dose == pytest.approx(want_dose, abs=1e-12), f"trial {trial}"

    def test_certificate_holds_whenever_not_fallback(self):
        rng = np.random.default_rng(43)
        for _ in range(100):
            cfg = SafeBOConfig(
                beta_sqrt=float(rng.uniform(0, 3)),
                safety_margin=float(rng.uniform(0, 1)),
            )
            reward, constraint = trained_pair(rng, cfg, int(rng.integers(0, 10)))
            decision = select_dose(reward, [constraint], (), cfg)
            if not decision.fallback_used:
                lcb = constraint_lcb(
                    constraint, InputPoint(decision.dose), cfg.beta_sqrt
                )
                assert lcb > cfg.safety_margin

    def test_total_on_empty_safe_sets(self):
        rng = np.random.default_rng(44)
        cfg = SafeBOConfig(beta_sqrt=50.0)  # pessimism forces empty safe set
        for _ in range(20):
            reward, constraint = trained_pair(rng, cfg, int(rng.integers(0, 8)))
            decision = select_dose(reward, [constraint], (), cfg)
            assert decision.fallback_used
            assert decision.dose == cfg.fallback_dose

    def test_tie_breaks_toward_smaller_dose(self):
        # A constraint surrogate symmetric around the grid center gives two
        # grid points identical objectives; the smaller dose must win.
        cfg = SafeBOConfig(dose_grid=tuple(np.linspace(0, 20, 41)))
        reward = GaussianProcess(dose_bounds=cfg.dose_bounds)  # flat prior reward
        constraint = GaussianProcess(
            kernel=KernelSpec(signal_std=2.0, lengthscales=(0.1,)),
            dose_bounds=cfg.dose_bounds,
        )
        constraint = constraint.condition(Observation(InputPoint(8.0), 6.0, 0.1))
        constraint = constraint.condition(Observation(InputPoint(12.0), 6.0, 0.1))
        decision = select_dose(reward, [constraint], (), cfg)
        assert not decision.fallback_used
        assert decision.dose <= 10.0

    def test_barrier_monotone_in_lcb(self):
        # Lowering one constraint observation at the chosen dose cannot raise
        # the objective there.
        cfg = SafeBOConfig(dose_grid=tuple(np.linspace(0, 20, 21)))
        reward = GaussianProcess(dose_bounds=cfg.dose_bounds)
        base = GaussianProcess(
            kernel=KernelSpec(signal_std=2.0, lengthscales=(0.15,)),
            dose_bounds=cfg.dose_bounds,
        )
        for value in (8.0, 6.0, 4.0, 2.0):
            gp = base.condition(Observation(InputPoint(10.0), value, 0.05))
            decision = select_dose(reward, [gp], (), cfg)
            j = int(np.argmin(np.abs(cfg.grid_array() - 10.0)))
            obj = decision.acquisition_trace[j]
            if value == 8.0:
                prev = obj
            else:
                assert obj <= prev + 1e-9
                prev = obj

    def test_trace_has_sentinel_on_unsafe_points(self):
        cfg = SafeBOConfig()
        reward = GaussianProcess(dose_bounds=cfg.dose_bounds)
        constraint = GaussianProcess(dose_bounds=cfg.dose_bounds)
        decision = select_dose(reward, [constraint], (), cfg)
        assert np.all(np.isneginf(decision.acquisition_trace))
