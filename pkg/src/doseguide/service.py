"""Session-oriented HTTP service around the dose advisor.

Interactive loop: create a session (live CGM entry or an attached virtual
patient), announce meals to get dose recommendations, stream or generate
CGM, close episodes to learn. Sessions are in-memory; payload field names
are documented in docs/http_api.md. Errors carry machine-readable codes.
"""

from __future__ import annotations

import datetime as _dt
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .acquisition import evaluate_grid
from .advisor import AdvisorState, MealAnnouncement, encode_context
from .config import RunConfig, advisor_from_dict, cgm_from_dict, optimizer_from_dict
from .errors import ConfigError, ProtocolError, SequencingError
from .simulator import (
    CgmModel,
    PatientParams,
    PatientState,
    basal_state,
    cgm_read,
    generate_cohort,
    nominal_params,
    step,
)

MODE_LIVE = "live"
MODE_SIMULATED = "simulated"


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.field = field
        super().__init__(message)


@dataclass
class SimulatedPatient:
    params: PatientParams
    state: PatientState
    rng: np.random.Generator
    clock: float = 0.0
    pending_bolus: float = 0.0
    pending_cho: float = 0.0
    bg_times: list[float] = field(default_factory=list)
    bg_values: list[float] = field(default_factory=list)


@dataclass
class Session:
    session_id: str
    mode: str
    advisor: AdvisorState
    cgm_model: CgmModel
    created_at: str
    sim: SimulatedPatient | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    cgm_times: list[float] = field(default_factory=list)
    cgm_values: list[float] = field(default_factory=list)
    last_category: str | None = None


def _require(payload: dict, key: str, kind, path: str):
    if key not in payload or payload[key] is None:
        raise ServiceError(422, "missing_field", f"{path} is required", field=path)
    value = payload[key]
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ServiceError(
            422, "invalid_field", f"{path} has invalid value {value!r}", field=path
        ) from None


def _posterior_view(session: Session, category: str, fallback_flag: bool | None = None) -> dict:
    advisor = session.advisor
    cfg = advisor.config.optimizer
    reward_gp, constraint_gp = advisor.gp_pair(category)
    context = encode_context(
        advisor.config.meal(0.0, category),
        advisor.config.mealtime_context,
        advisor.config.cho_max_grams,
    )
    ev = evaluate_grid(
        reward_gp,
        [constraint_gp],
        context.features,
        cfg,
        incumbent=advisor.incumbent(category),
        iteration=advisor.k,
    )
    safe = ev.safe_mask
    if fallback_flag is None:
        fallback_flag = not bool(safe.any())
    return {
        "category": category,
        "doses": [float(d) for d in ev.doses],
        "reward_mean": [float(v) for v in ev.reward_mean],
        "reward_std": [float(v) for v in ev.reward_std],
        "constraint_lcb": [float(v) for v in ev.lcb_values[0]],
        "safe": [bool(v) for v in safe],
        "acquisition": [
            float(ev.objective[i]) if safe[i] else None for i in range(len(safe))
        ],
        "fallback": bool(fallback_flag),
        "beta_sqrt": float(ev.beta_sqrt),
        "safety_margin": float(cfg.safety_margin),
    }


def _episode_payload(ep) -> dict:
    return {
        "k": ep.index,
        "category": ep.category,
        "meal_time": ep.meal_time,
        "cho_grams": ep.cho_grams,
        "dose_u": ep.dose,
        "fallback_used": ep.fallback_used,
        "window_start": ep.window_start,
        "window_end": ep.window_end,
        "samples": len(ep.cgm_values),
        "reward_obs": ep.reward_obs,
        "constraint_obs": ep.constraint_obs,
        "status": ep.status,
    }


def create_app(default_config: RunConfig | None = None) -> FastAPI:
    app = FastAPI(title="doseguide guidance service")
    base = default_config or RunConfig()
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    @app.exception_handler(ServiceError)
    async def _service_error(_: Request, exc: ServiceError):
        body = {"error": {"code": exc.code, "message": exc.message}}
        if exc.field:
            body["error"]["field"] = exc.field
        return JSONResponse(status_code=exc.status, content=body)

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id!r}")
        return session

    @app.post("/sessions", status_code=201)
    async def create_session(payload: dict | None = None):
        payload = payload or {}
        mode = payload.get("mode", MODE_LIVE)
        if mode not in (MODE_LIVE, MODE_SIMULATED):
            raise ServiceError(
                422, "invalid_field", f"mode must be live or simulated, got {mode!r}",
                field="mode",
            )
        cfg_data = payload.get("config") or {}
        if not isinstance(cfg_data, dict):
            raise ServiceError(422, "invalid_config", "config must be a mapping", field="config")
        try:
            optimizer = (
                optimizer_from_dict(cfg_data["optimizer"])
                if "optimizer" in cfg_data
                else base.advisor.optimizer
            )
            advisor_cfg = advisor_from_dict(cfg_data.get("advisor") or {}, optimizer)
            cgm_model = (
                cgm_from_dict(cfg_data["cgm"]) if "cgm" in cfg_data else base.cgm
            )
        except ConfigError as e:
            raise ServiceError(422, "invalid_config", str(e), field=e.field) from None

        session_id = uuid.uuid4().hex[:12]
        sim = None
        if mode == MODE_SIMULATED:
            seed = int(payload.get("seed", base.seed))
            variability = float(payload.get("patient_variability", 0.0))
            params = (
                nominal_params()
                if variability == 0
                else generate_cohort(1, seed=seed, variability=variability)[0]
            )
            sim = SimulatedPatient(
                params=params,
                state=basal_state(params),
                rng=np.random.default_rng((seed, 99)),
            )
        session = Session(
            session_id=session_id,
            mode=mode,
            advisor=AdvisorState(advisor_cfg),
            cgm_model=cgm_model,
            created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
            sim=sim,
        )
        with registry_lock:
            sessions[session_id] = session
        return {
            "session_id": session_id,
            "mode": mode,
            "created_at": session.created_at,
            "episodes": 0,
        }

    @app.post("/sessions/{session_id}/meals")
    async def announce_meal(session_id: str, payload: dict):
        session = get_session(session_id)
        with session.lock:
            category = _require(payload, "size_category", str, "size_category")
            if session.mode == MODE_SIMULATED:
                time_min = session.sim.clock
            else:
                time_min = _require(payload, "time_min", float, "time_min")
            grams = payload.get("cho_grams")
            try:
                if grams is None:
                    meal = session.advisor.config.meal(time_min, category)
                else:
                    meal = MealAnnouncement(time_min, category, float(grams))
                decision = session.advisor.recommend_dose(meal)
            except ConfigError as e:
                raise ServiceError(422, "invalid_field", str(e), field=e.field) from None
            except ProtocolError as e:
                raise ServiceError(409, "open_episode", str(e)) from None
            session.last_category = category
            if session.mode == MODE_SIMULATED:
                session.sim.pending_bolus += decision.dose
                session.sim.pending_cho += meal.cho_grams
            return {
                "dose_u": decision.dose,
                "fallback_used": decision.fallback_used,
                "episode_k": session.advisor.open_episode.index,
                "meal_time": time_min,
                "posterior": _posterior_view(
                    session, category, fallback_flag=decision.fallback_used
                ),
            }

    @app.post("/sessions/{session_id}/cgm")
    async def submit_cgm(session_id: str, payload: dict):
        session = get_session(session_id)
        with session.lock:
            if session.mode == MODE_SIMULATED:
                raise ServiceError(
                    409, "simulated_mode",
                    "simulated sessions generate CGM via /advance",
                )
            samples = payload.get("samples")
            if not isinstance(samples, list) or not samples:
                raise ServiceError(
                    422, "missing_field", "samples must be a non-empty list",
                    field="samples",
                )
            accepted = 0
            for i, item in enumerate(samples):
                if not isinstance(item, dict):
                    raise ServiceError(
                        422, "invalid_field", f"samples[{i}] must be an object",
                        field=f"samples[{i}]",
                    )
                t = _require(item, "t_min", float, f"samples[{i}].t_min")
                g = _require(item, "glucose_mgdl", float, f"samples[{i}].glucose_mgdl")
                try:
                    session.advisor.ingest_cgm(t, g)
                except SequencingError as e:
                    raise ServiceError(422, "out_of_order", str(e)) from None
                session.cgm_times.append(t)
                session.cgm_values.append(
                    min(max(g, 20.0), 600.0)
                )
                accepted += 1
            ep = session.advisor.open_episode
            return {
                "accepted": accepted,
                "window_samples": len(ep.cgm_values) if ep else 0,
            }

    @app.post("/sessions/{session_id}/advance")
    async def advance(session_id: str, payload: dict):
        session = get_session(session_id)
        with session.lock:
            if session.mode != MODE_SIMULATED:
                raise ServiceError(
                    409, "live_mode", "only simulated sessions can advance virtual time"
                )
            minutes = _require(payload, "minutes", int, "minutes")
            if minutes < 1 or minutes > 100000:
                raise ServiceError(
                    422, "invalid_field", "minutes must be in [1, 100000]", field="minutes"
                )
            sim = session.sim
            period = session.cgm_model.sample_period
            new_samples = []
            for _ in range(minutes):
                if sim.clock % period == 0:
                    sample = cgm_read(sim.state, session.cgm_model, sim.rng)
                    session.advisor.ingest_cgm(sim.clock, sample)
                    session.cgm_times.append(sim.clock)
                    session.cgm_values.append(sample)
                    new_samples.append({"t_min": sim.clock, "glucose_mgdl": sample})
                sim.bg_times.append(sim.clock)
                sim.bg_values.append(sim.state.g)
                sim.state = step(
                    sim.state, sim.params,
                    bolus=sim.pending_bolus, cho=sim.pending_cho, dt=1.0,
                )
                sim.pending_bolus = 0.0
                sim.pending_cho = 0.0
                sim.clock += 1.0
            return {
                "minutes_advanced": minutes,
                "time_min": sim.clock,
                "glucose_mgdl": sim.state.g,
                "samples": new_samples,
            }

    @app.post("/sessions/{session_id}/close")
    async def close_episode(session_id: str, payload: dict | None = None):
        session = get_session(session_id)
        with session.lock:
            advisor = session.advisor
            ep = advisor.open_episode
            if ep is None:
                raise ServiceError(409, "no_open_episode", "no episode is open")
            n = len(ep.cgm_values)
            if n < advisor.config.min_samples:
                raise ServiceError(
                    422, "too_few_samples",
                    f"window has {n} samples; {advisor.config.min_samples} required",
                )
            now = (
                session.sim.clock
                if session.mode == MODE_SIMULATED
                else (payload or {}).get("now", ep.cgm_times[-1])
            )
            try:
                result = advisor.close_episode(float(now))
            except ProtocolError as e:
                raise ServiceError(409, "window_immature", str(e)) from None
            if result is None:
                raise ServiceError(422, "episode_discarded", "window was discarded")
            reward, constraint = result
            return {
                "reward_obs": reward,
                "constraint_obs": constraint,
                "iteration": advisor.k,
                "posterior": _posterior_view(session, ep.category),
            }

    @app.get("/sessions/{session_id}/posterior")
    async def get_posterior(session_id: str, category: str | None = None):
        session = get_session(session_id)
        with session.lock:
            cat = category or session.last_category or "M"
            if cat not in session.advisor.config.category_grams:
                raise ServiceError(
                    422, "invalid_field", f"unknown category {cat!r}", field="category"
                )
            return _posterior_view(session, cat)

    @app.get("/sessions/{session_id}/history")
    async def get_history(session_id: str):
        session = get_session(session_id)
        with session.lock:
            advisor = session.advisor
            episodes = [_episode_payload(e) for e in advisor.episodes]
            if advisor.open_episode is not None:
                episodes.append(_episode_payload(advisor.open_episode))
            body = {
                "session_id": session.session_id,
                "mode": session.mode,
                "episodes": episodes,
                "cgm": {
                    "t_min": list(session.cgm_times),
                    "glucose_mgdl": list(session.cgm_values),
                },
            }
            if session.sim is not None:
                body["bg"] = {
                    "t_min": list(session.sim.bg_times),
                    "glucose_mgdl": list(session.sim.bg_values),
                }
            return body

    @app.get("/sessions/{session_id}/snapshot")
    async def get_snapshot(session_id: str):
        session = get_session(session_id)
        with session.lock:
            from .config import advisor_to_dict, optimizer_to_dict

            return {
                "session_id": session.session_id,
                "mode": session.mode,
                "created_at": session.created_at,
                "iteration": session.advisor.k,
                "config": {
                    "optimizer": optimizer_to_dict(session.advisor.config.optimizer),
                    "advisor": advisor_to_dict(session.advisor.config),
                },
                "episodes": [_episode_payload(e) for e in session.advisor.episodes],
            }

    return app
