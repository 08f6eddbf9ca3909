"""Virtual patient: equilibrium, chain structure, oracle trajectories, cohort."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from doseguide.errors import ConfigError
from doseguide.simulator import (
    CgmModel,
    PatientParams,
    basal_state,
    cgm_read,
    cohort_from_text,
    cohort_to_text,
    derivatives,
    generate_cohort,
    nominal_params,
    screen_patient,
    step,
    unbolused_meal_peak,
)


def reference_trajectory(params, bolus, cho, minutes):
    """Independent integration of the same dynamics with an adaptive solver."""

    def rhs(_, y):
        g, x, i, s1, s2, d1, d2 = y
        ib = params.basal_insulin
        return [
            -params.p1 * (g - params.gb) - x * g
            + params.f * params.kg2 * d2 * (5600.0 / params.vg),
            -params.p2 * x + params.p3 * (i - ib),
            params.ka2 * s2 * 1e4 / params.vi - params.ke * i,
            params.basal_rate - params.ka1 * s1,
            params.ka1 * s1 - params.ka2 * s2,
            -params.kg1 * d1,
            params.kg1 * d1 - params.kg2 * d2,
        ]

    s0 = basal_state(params)
    y0 = [s0.g, s0.x, s0.i, s0.s1 + bolus, s0.s2, s0.d1 + cho, s0.d2]
    sol = solve_ivp(
        rhs, (0, minutes), y0, t_eval=np.arange(minutes), rtol=1e-9, atol=1e-9
    )
    return sol.y[0]


def rk4_trajectory(params, bolus, cho, minutes, dt=1.0):
    state = step(basal_state(params), params, bolus=bolus, cho=cho, dt=dt)
    per_minute = round(1.0 / dt)
    for _ in range(per_minute - 1):
        state = step(state, params, dt=dt)
    out = [params.gb]
    for _ in range(minutes - 1):
        out.append(state.g)
        for _ in range(per_minute):
            state = step(state, params, dt=dt)
    return np.array(out)


class TestDerivatives:
    def test_zero_at_basal_equilibrium(self):
        p = nominal_params()
        rates = derivatives(basal_state(p), p)
        assert max(abs(r) for r in rates) < 1e-9

    def test_meal_chain_structure(self):
        p = nominal_params()
        s = basal_state(p)
        s = type(s)(g=s.g, x=s.x, i=s.i, s1=s.s1, s2=s.s2, d1=30.0, d2=0.0)
        dg, _, _, _, _, dd1, dd2 = derivatives(s, p)
        assert dd2 > 0  # carbs flow into the second gut compartment
        assert dd1 < 0
        assert dg == pytest.approx(0.0, abs=1e-9)  # d2 still empty

    def test_bolus_chain_structure(self):
        p = nominal_params()
        s = basal_state(p)
        s = type(s)(g=s.g, x=s.x, i=s.i, s1=s.s1 + 5.0, s2=s.s2, d1=0.0, d2=0.0)
        _, _, di, _, ds2, _, _ = derivatives(s, p)
        assert ds2 > 0
        assert di == pytest.approx(0.0, abs=1e-9)  # s2 still at basal


class TestStep:
    def test_equilibrium_preserved(self):
        p = nominal_params()
        state = basal_state(p)
        for _ in range(600):
            state = step(state, p)
        assert state.g == pytest.approx(p.gb, abs=1e-6)
        assert state.x == pytest.approx(0.0, abs=1e-9)

    def test_unbolused_meal_matches_reference(self):
        p = nominal_params()
        ref = reference_trajectory(p, bolus=0.0, cho=60.0, minutes=300)
        got = rk4_trajectory(p, bolus=0.0, cho=60.0, minutes=300)
        assert np.max(np.abs(ref - got)) < 0.1
        assert got.max() > 180.0
        assert got[60] > p.gb  # climbing within the hour

    def test_overdose_reaches_hypoglycemia(self):
        # Three times the dose that just grazes the 70 mg/dl line.
        p = nominal_params()
        base = rk4_trajectory(p, bolus=7.5, cho=60.0, minutes=300)
        assert base.min() > 65.0
        heavy = rk4_trajectory(p, bolus=22.5, cho=60.0, minutes=300)
        ref = reference_trajectory(p, bolus=22.5, cho=60.0, minutes=300)
        assert heavy.min() < 70.0
        assert ref.min() < 70.0

    def test_rejects_bad_dt(self):
        p = nominal_params()
        with pytest.raises(ValueError):
            step(basal_state(p), p, dt=0.0)
        with pytest.raises(ValueError):
            step(basal_state(p), p, dt=2.0)

    def test_mass_nonnegativity_under_random_inputs(self):
        rng = np.random.default_rng(17)
        p = nominal_params()
        state = basal_state(p)
        for _ in range(100_000):
            bolus = float(rng.uniform(0, 5)) if rng.random() < 0.002 else 0.0
            cho = float(rng.uniform(0, 120)) if rng.random() < 0.002 else 0.0
            state = step(state, p, bolus=bolus, cho=cho)
            assert state.g >= 20.0
            assert min(state.x, state.i, state.s1, state.s2, state.d1, state.d2) >= 0.0

    def test_rk4_halving_dt_is_converged(self):
        p = nominal_params()
        full = rk4_trajectory(p, bolus=4.0, cho=60.0, minutes=300, dt=1.0)
        half = rk4_trajectory(p, bolus=4.0, cho=60.0, minutes=300, dt=0.5)
        assert np.max(np.abs(full - half)) < 0.5


class TestMonotonicity:
    def test_peak_and_minimum_fall_with_dose(self):
        p = nominal_params()
        doses = np.arange(0.0, 20.01, 0.5)
        peaks, mins = [], []
        for d in doses:
            tr = rk4_trajectory(p, bolus=float(d), cho=60.0, minutes=300)
            peaks.append(tr.max())
            mins.append(tr.min())
        assert all(b <= a for a, b in zip(peaks, peaks[1:]))
        assert all(b <= a for a, b in zip(mins, mins[1:]))


class TestCgm:
    def test_noiseless_reads_current_glucose(self):
        p = nominal_params()
        model = CgmModel(noise_std=0.0)
        rng = np.random.default_rng(0)
        assert cgm_read(basal_state(p), model, rng) == pytest.approx(p.gb)

    def test_clamps_below_sensor_floor(self):
        p = nominal_params()
        s = basal_state(p)
        s = type(s)(g=20.0, x=s.x, i=s.i, s1=s.s1, s2=s.s2, d1=0.0, d2=0.0)
        value = cgm_read(s, CgmModel(noise_std=50.0), np.random.default_rng(4))
        assert 20.0 <= value <= 600.0

    def test_seeded_sequences_repeat(self):
        p = nominal_params()
        model = CgmModel(noise_std=2.0)
        rng = np.random.default_rng(5)
        seq1 = [cgm_read(basal_state(p), model, rng) for _ in range(10)]
        rng = np.random.default_rng(5)
        seq2 = [cgm_read(basal_state(p), model, rng) for _ in range(10)]
        assert seq1 == seq2

    def test_delay_uses_history(self):
        p = nominal_params()
        model = CgmModel(noise_std=0.0, sensor_delay=10.0)
        s = basal_state(p)
        history = [(0.0, 100.0), (5.0, 110.0), (10.0, 120.0), (15.0, 130.0)]
        value = cgm_read(s, model, np.random.default_rng(0), history=history, now=20.0)
        assert value == pytest.approx(120.0)


class TestCohort:
    def test_zero_spread_returns_nominal(self):
        cohort = generate_cohort(1, seed=3, variability=0.0)
        assert cohort[0] == nominal_params()

    def test_deterministic_under_seed(self):
        a = generate_cohort(10, seed=11, variability=0.2)
        b = generate_cohort(10, seed=11, variability=0.2)
        assert a == b

    def test_all_draws_pass_screening(self):
        cohort = generate_cohort(10, seed=12, variability=0.2)
        for params in cohort:
            assert screen_patient(params)
            peak = unbolused_meal_peak(params)
            assert 180.0 < peak < 400.0

    def test_rejects_bad_arguments(self):
        with pytest.raises(ConfigError):
            generate_cohort(0, seed=1)
        with pytest.raises(ConfigError):
            generate_cohort(1, seed=1, variability=0.9)

    def test_text_round_trip(self):
        cohort = generate_cohort(3, seed=13, variability=0.2)
        assert cohort_from_text(cohort_to_text(cohort)) == cohort

    def test_params_validation(self):
        with pytest.raises(ConfigError):
            PatientParams(
                p1=0.008, p2=0.02, p3=1.2e-5, ke=0.12, ka1=0.025, ka2=0.02,
                kg1=0.035, kg2=0.022, f=0.9, vg=1400.0, vi=120.0,
                gb=200.0, basal_rate=0.01,
            )
