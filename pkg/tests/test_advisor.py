"""Dose advisor state machine: contexts, windows, extraction, determinism."""

from __future__ import annotations

import logging

import numpy as np
import pytest

from doseguide.acquisition import SafeBOConfig, reveal_safe_region
from doseguide.advisor import (
    AdvisorConfig,
    AdvisorState,
    MealAnnouncement,
    encode_context,
    window_bounds,
)
from doseguide.errors import ConfigError, ProtocolError, SequencingError


def feed_window(state: AdvisorState, values, start=0.0, spacing=5.0):
    for i, v in enumerate(values):
        state.ingest_cgm(start + i * spacing, v)


def close_one_episode(state: AdvisorState, meal: MealAnnouncement, values):
    state.recommend_dose(meal)
    feed_window(state, values, start=meal.time_min)
    return state.close_episode(now=meal.time_min + 300.0)


class TestEncodeContext:
    def test_medium_meal(self):
        ctx = encode_context(MealAnnouncement(0.0, "M", 60.0))
        assert ctx.features == (pytest.approx(0.4),)

    def test_mealtime_feature(self):
        ctx = encode_context(MealAnnouncement(720.0, "XL", 120.0), mealtime_enabled=True)
        assert ctx.features[0] == pytest.approx(0.8)
        assert ctx.features[1] == pytest.approx(0.5)

    def test_oversized_meal_clamps_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING):
            ctx = encode_context(MealAnnouncement(0.0, "XL", 200.0))
        assert ctx.features == (1.0,)
        assert any("clamp" in r.message for r in caplog.records)

    def test_announcement_validation(self):
        with pytest.raises(ConfigError):
            MealAnnouncement(-1.0, "M", 60.0)
        with pytest.raises(ConfigError):
            MealAnnouncement(0.0, "Q", 60.0)
        with pytest.raises(ConfigError):
            MealAnnouncement(0.0, "M", 0.0)


class TestWindowBounds:
    def test_next_meal_before_cap(self):
        assert window_bounds(0.0, 240.0) == (0.0, 240.0)

    def test_cap_without_next_meal(self):
        assert window_bounds(0.0) == (0.0, 300.0)

    def test_cap_binds(self):
        assert window_bounds(0.0, 400.0) == (0.0, 300.0)

    def test_rejects_nonpositive_gap(self):
        with pytest.raises(ValueError):
            window_bounds(100.0, 100.0)


class TestRecommendDose:
    def test_fresh_state_falls_back_to_zero(self):
        state = AdvisorState()
        decision = state.recommend_dose(MealAnnouncement(0.0, "M", 60.0))
        assert decision.fallback_used
        assert decision.dose == 0.0
        assert state.open_episode is not None

    def test_open_episode_blocks_new_announcement(self):
        state = AdvisorState()
        state.recommend_dose(MealAnnouncement(0.0, "M", 60.0))
        with pytest.raises(ProtocolError):
            state.recommend_dose(MealAnnouncement(10.0, "M", 60.0))

    def test_second_recommendation_sits_in_revealed_region(self):
        state = AdvisorState()
        close_one_episode(
            state, MealAnnouncement(0.0, "M", 60.0), [120.0] * 30 + [150.0] * 31
        )
        decision = state.recommend_dose(MealAnnouncement(400.0, "M", 60.0))
        assert not decision.fallback_used
        # membership re-checked against an independently recomputed mask
        _, constraint_gp = state.gp_pair("M")
        cfg = state.config.optimizer
        ctx = encode_context(MealAnnouncement(400.0, "M", 60.0)).features
        view = reveal_safe_region([constraint_gp], ctx, cfg)
        j = int(np.argmin(np.abs(cfg.grid_array() - decision.dose)))
        assert view.safe_mask[j]


class TestIngestCgm:
    def test_appends_to_open_window(self):
        state = AdvisorState()
        state.recommend_dose(MealAnnouncement(0.0, "M", 60.0))
        feed_window(state, [120, 130, 140])
        assert len(state.open_episode.cgm_values) == 3

    def test_clamps_sensor_range(self):
        state = AdvisorState()
        state.recommend_dose(MealAnnouncement(0.0, "M", 60.0))
        state.ingest_cgm(0.0, 700.0)
        state.ingest_cgm(5.0, 3.0)
        assert state.open_episode.cgm_values == [600.0, 20.0]

    def test_rejects_backwards_timestamps(self):
        state = AdvisorState()
        state.ingest_cgm(10.0, 120.0)
        with pytest.raises(SequencingError):
            state.ingest_cgm(5.0, 121.0)

    def test_outside_window_feeds_rolling_buffer(self):
        state = AdvisorState()
        state.ingest_cgm(0.0, 110.0)
        state.ingest_cgm(50.0, 112.0)
        state.ingest_cgm(120.0, 115.0)
        buffer = state.premeal_buffer()
        assert [t for t, _ in buffer] == [120.0]  # 60 min retention

    def test_window_timestamps_stay_strictly_increasing(self):
        state = AdvisorState()
        state.recommend_dose(MealAnnouncement(0.0, "M", 60.0))
        state.ingest_cgm(5.0, 120.0)
        state.ingest_cgm(5.0, 121.0)  # same instant: window unchanged
        state.ingest_cgm(10.0, 122.0)
        assert state.open_episode.cgm_times == [5.0, 10.0]


class TestCloseEpisode:
    def test_constant_window_extraction(self):
        state = AdvisorState()
        result = close_one_episode(
            state, MealAnnouncement(0.0, "M", 60.0), [120.0] * 10
        )
        assert result == (pytest.approx(-120.0), pytest.approx(50.0))

    def test_boundary_dip_gives_zero_constraint(self):
        state = AdvisorState()
        result = close_one_episode(
            state, MealAnnouncement(0.0, "M", 60.0), [120, 100, 70, 90, 110, 115]
        )
        assert result[1] == pytest.approx(0.0)

    def test_extrema_extraction(self):
        state = AdvisorState()
        result = close_one_episode(
            state, MealAnnouncement(0.0, "M", 60.0), [100, 180, 140, 90, 100, 120]
        )
        assert result == (pytest.approx(-180.0), pytest.approx(20.0))

    def test_no_open_episode_errors(self):
        with pytest.raises(ProtocolError):
            AdvisorState().close_episode(now=100.0)

    def test_immature_window_errors_without_next_meal(self):
        state = AdvisorState()
        state.recommend_dose(MealAnnouncement(0.0, "M", 60.0))
        feed_window(state, [120.0] * 10)
        with pytest.raises(ProtocolError):
            state.close_episode(now=60.0)

    def test_next_meal_allows_early_close(self):
        state = AdvisorState()
        state.recommend_dose(MealAnnouncement(0.0, "M", 60.0))
        feed_window(state, [120.0] * 12)
        result = state.close_episode(now=60.0, next_meal_time=60.0)
        assert result is not None

    def test_sparse_window_discarded(self, caplog):
        state = AdvisorState()
        state.recommend_dose(MealAnnouncement(0.0, "M", 60.0))
        feed_window(state, [120.0] * 3)
        with caplog.at_level(logging.WARNING):
            result = state.close_episode(now=300.0)
        assert result is None
        assert state.episodes[-1].status == "discarded"
        reward_gp, constraint_gp = state.gp_pair("M")
        assert reward_gp.n_observations == 0
        assert constraint_gp.n_observations == 0

    def test_extraction_matches_independent_pass(self):
        rng = np.random.default_rng(8)
        state = AdvisorState()
        t = 0.0
        for k in range(6):
            meal = MealAnnouncement(t, str(rng.choice(["S", "M", "L", "XL"])), 60.0)
            values = list(rng.uniform(60, 300, size=int(rng.integers(6, 40))))
            close_one_episode(state, meal, values)
            ep = state.episodes[-1]
            assert ep.reward_obs == pytest.approx(-max(ep.cgm_values))
            assert ep.constraint_obs == pytest.approx(min(ep.cgm_values) - 70.0)
            t += 400.0


class TestBookkeeping:
    def test_observation_counts_track_closed_episodes(self):
        rng = np.random.default_rng(9)
        state = AdvisorState()
        t = 0.0
        per_cat = {c: 0 for c in ("S", "M", "L", "XL")}
        for _ in range(10):
            cat = str(rng.choice(["S", "M", "L", "XL"]))
            close_one_episode(
                state,
                MealAnnouncement(t, cat, 60.0),
                list(rng.uniform(90, 250, size=10)),
            )
            per_cat[cat] += 1
            t += 400.0
        assert state.k == 11
        for cat, n in per_cat.items():
            reward_gp, constraint_gp = state.gp_pair(cat)
            assert reward_gp.n_observations == n
            assert constraint_gp.n_observations == n

    def test_first_recommendation_is_fallback_for_every_category(self):
        state = AdvisorState()
        t = 0.0
        for cat in ("S", "M", "L", "XL"):
            decision = state.recommend_dose(
                MealAnnouncement(t, cat, state.config.category_grams[cat])
            )
            assert decision.fallback_used and decision.dose == 0.0
            feed_window(state, [120.0] * 10, start=t)
            state.close_episode(now=t + 300.0)
            t += 400.0

    def test_replay_determinism(self):
        rng = np.random.default_rng(10)
        meals = []
        t = 0.0
        for _ in range(12):
            meals.append(
                (
                    MealAnnouncement(t, str(rng.choice(["S", "M", "L", "XL"])), 60.0),
                    list(rng.uniform(80, 280, size=20)),
                )
            )
            t += 400.0

        def run() -> list[float]:
            state = AdvisorState(AdvisorConfig(optimizer=SafeBOConfig(tau=0.5)))
            doses = []
            for meal, values in meals:
                doses.append(state.recommend_dose(meal).dose)
                feed_window(state, values, start=meal.time_min)
                state.close_episode(now=meal.time_min + 300.0)
            return doses

        assert run() == run()
