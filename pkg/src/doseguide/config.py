"""Run configuration: one YAML file drives trials, safety studies, and serving.

Flags override file values; the effective configuration is echoed next to
every artifact set so a run can be reproduced from its output directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .acquisition import SafeBOConfig, default_dose_grid
from .advisor import AdvisorConfig
from .errors import ConfigError
from .gp import KernelSpec
from .safety_mc import SafetyMCConfig
from .simulator import CgmModel
from .trial import TrialProtocol


@dataclass(frozen=True)
class CohortSpec:
    n: int = 10
    variability: float = 0.2
    file: str | None = None  # overrides generation when set

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("cohort.n", f"must be >= 1, got {self.n}")
        if not (0 <= self.variability <= 0.5):
            raise ConfigError("cohort.variability", "must be in [0, 0.5]")


@dataclass(frozen=True)
class ServerSpec:
    host: str = "127.0.0.1"
    port: int = 8000

    def __post_init__(self):
        if not (0 <= self.port <= 65535):
            raise ConfigError("server.port", f"must be in [0, 65535], got {self.port}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    out_dir: str = "out"
    workers: int | None = None  # None: one process per logical core
    advisor: AdvisorConfig = field(default_factory=AdvisorConfig)
    protocol: TrialProtocol = field(default_factory=TrialProtocol)
    cohort: CohortSpec = field(default_factory=CohortSpec)
    cgm: CgmModel = field(default_factory=CgmModel)
    metrics_on_cgm: bool = False
    safety_mc: SafetyMCConfig = field(default_factory=SafetyMCConfig)
    server: ServerSpec = field(default_factory=ServerSpec)


def _require_mapping(value, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(data: dict, known: set[str], path: str) -> None:
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0],
            "unknown configuration key",
        )


def _kernel_from_dict(data: dict, path: str) -> KernelSpec:
    _reject_unknown(data, {"family", "signal_std", "lengthscales"}, path)
    try:
        return KernelSpec(
            family=data.get("family", "squared-exponential"),
            signal_std=float(data.get("signal_std", 1.0)),
            lengthscales=tuple(float(v) for v in data.get("lengthscales", (1.0,))),
        )
    except ConfigError as e:
        raise ConfigError(f"{path}.{e.field}", str(e).split(": ", 1)[1]) from None


def kernel_to_dict(spec: KernelSpec) -> dict:
    return {
        "family": spec.family,
        "signal_std": spec.signal_std,
        "lengthscales": list(spec.lengthscales),
    }


def optimizer_from_dict(data: dict) -> SafeBOConfig:
    path = "optimizer"
    known = {
        "dose_grid", "tau", "beta_sqrt", "delta", "fallback_dose",
        "acquisition", "ucb_kappa", "safety_margin", "beta_mode", "tau_decay",
    }
    _reject_unknown(data, known, path)
    grid_spec = _require_mapping(data.get("dose_grid"), f"{path}.dose_grid")
    _reject_unknown(grid_spec, {"min", "max", "points"}, f"{path}.dose_grid")
    grid = default_dose_grid(
        float(grid_spec.get("min", 0.0)),
        float(grid_spec.get("max", 20.0)),
        int(grid_spec.get("points", 201)),
    )
    defaults = SafeBOConfig()
    try:
        return SafeBOConfig(
            dose_grid=grid,
            tau=float(data.get("tau", defaults.tau)),
            beta_sqrt=float(data.get("beta_sqrt", defaults.beta_sqrt)),
            delta=float(data.get("delta", defaults.delta)),
            fallback_dose=float(data.get("fallback_dose", defaults.fallback_dose)),
            acquisition=data.get("acquisition", defaults.acquisition),
            ucb_kappa=float(data.get("ucb_kappa", defaults.ucb_kappa)),
            safety_margin=float(data.get("safety_margin", defaults.safety_margin)),
            beta_mode=data.get("beta_mode", defaults.beta_mode),
            tau_decay=bool(data.get("tau_decay", defaults.tau_decay)),
        )
    except ConfigError as e:
        raise ConfigError(f"{path}.{e.field}", str(e).split(": ", 1)[1]) from None


def optimizer_to_dict(cfg: SafeBOConfig) -> dict:
    grid = cfg.grid_array()
    return {
        "dose_grid": {"min": float(grid[0]), "max": float(grid[-1]), "points": grid.size},
        "tau": cfg.tau,
        "beta_sqrt": cfg.beta_sqrt,
        "delta": cfg.delta,
        "fallback_dose": cfg.fallback_dose,
        "acquisition": cfg.acquisition,
        "ucb_kappa": cfg.ucb_kappa,
        "safety_margin": cfg.safety_margin,
        "beta_mode": cfg.beta_mode,
        "tau_decay": cfg.tau_decay,
    }


def advisor_from_dict(data: dict, optimizer: SafeBOConfig | None = None) -> AdvisorConfig:
    path = "advisor"
    known = {
        "category_grams", "cho_max_grams", "mealtime_context", "shared_context_gp",
        "window_cap_min", "min_window_min", "min_samples", "observation_noise_std",
        "refit_every", "reward_kernel", "constraint_kernel",
    }
    _reject_unknown(data, known, path)
    defaults = AdvisorConfig()
    grams = dict(defaults.category_grams)
    grams.update(
        {
            str(k): float(v)
            for k, v in _require_mapping(
                data.get("category_grams"), f"{path}.category_grams"
            ).items()
        }
    )
    kwargs = {}
    for key in ("reward_kernel", "constraint_kernel"):
        if data.get(key) is not None:
            kwargs[key] = _kernel_from_dict(
                _require_mapping(data[key], f"{path}.{key}"), f"{path}.{key}"
            )
    try:
        return AdvisorConfig(
            optimizer=optimizer or SafeBOConfig(),
            category_grams=grams,
            cho_max_grams=float(data.get("cho_max_grams", defaults.cho_max_grams)),
            mealtime_context=bool(data.get("mealtime_context", defaults.mealtime_context)),
            shared_context_gp=bool(
                data.get("shared_context_gp", defaults.shared_context_gp)
            ),
            window_cap_min=float(data.get("window_cap_min", defaults.window_cap_min)),
            min_window_min=float(data.get("min_window_min", defaults.min_window_min)),
            min_samples=int(data.get("min_samples", defaults.min_samples)),
            observation_noise_std=float(
                data.get("observation_noise_std", defaults.observation_noise_std)
            ),
            refit_every=int(data.get("refit_every", defaults.refit_every)),
            **kwargs,
        )
    except ConfigError as e:
        field_name = e.field if e.field.startswith(path) else f"{path}.{e.field}"
        raise ConfigError(field_name, str(e).split(": ", 1)[1]) from None


def advisor_to_dict(cfg: AdvisorConfig) -> dict:
    return {
        "category_grams": dict(cfg.category_grams),
        "cho_max_grams": cfg.cho_max_grams,
        "mealtime_context": cfg.mealtime_context,
        "shared_context_gp": cfg.shared_context_gp,
        "window_cap_min": cfg.window_cap_min,
        "min_window_min": cfg.min_window_min,
        "min_samples": cfg.min_samples,
        "observation_noise_std": cfg.observation_noise_std,
        "refit_every": cfg.refit_every,
        "reward_kernel": kernel_to_dict(cfg.reward_kernel_spec()),
        "constraint_kernel": kernel_to_dict(cfg.constraint_kernel_spec()),
    }


def _protocol_from_dict(data: dict, seed: int) -> TrialProtocol:
    path = "protocol"
    known = {"days", "meal_times", "meal_jitter_min", "size_weights"}
    _reject_unknown(data, known, path)
    defaults = TrialProtocol()
    weights = dict(defaults.size_weights)
    weights.update(
        {
            str(k): float(v)
            for k, v in _require_mapping(
                data.get("size_weights"), f"{path}.size_weights"
            ).items()
        }
    )
    try:
        return TrialProtocol(
            days=int(data.get("days", defaults.days)),
            meal_times=tuple(float(t) for t in data.get("meal_times", defaults.meal_times)),
            meal_jitter_min=float(
                data.get("meal_jitter_min", defaults.meal_jitter_min)
            ),
            size_weights=weights,
            seed=seed,
        )
    except ConfigError as e:
        raise ConfigError(f"{path}.{e.field}", str(e).split(": ", 1)[1]) from None


def cgm_from_dict(data: dict) -> CgmModel:
    path = "cgm"
    _reject_unknown(data, {"sample_period", "noise_std", "sensor_delay"}, path)
    defaults = CgmModel()
    try:
        return CgmModel(
            sample_period=float(data.get("sample_period", defaults.sample_period)),
            noise_std=float(data.get("noise_std", defaults.noise_std)),
            sensor_delay=float(data.get("sensor_delay", defaults.sensor_delay)),
        )
    except ConfigError as e:
        raise ConfigError(f"{path}.{e.field}", str(e).split(": ", 1)[1]) from None


def _safety_mc_from_dict(data: dict, optimizer: SafeBOConfig, seed: int) -> SafetyMCConfig:
    path = "safety_mc"
    known = {"seeds", "iterations", "noise_std", "kernel"}
    _reject_unknown(data, known, path)
    defaults = SafetyMCConfig()
    kernel = defaults.kernel
    if data.get("kernel") is not None:
        kernel = _kernel_from_dict(
            _require_mapping(data["kernel"], f"{path}.kernel"), f"{path}.kernel"
        )
    try:
        return SafetyMCConfig(
            seeds=int(data.get("seeds", defaults.seeds)),
            iterations=int(data.get("iterations", defaults.iterations)),
            optimizer=optimizer,
            kernel=kernel,
            noise_std=float(data.get("noise_std", defaults.noise_std)),
            master_seed=seed,
        )
    except ConfigError as e:
        raise ConfigError(f"{path}.{e.field}", str(e).split(": ", 1)[1]) from None


def config_from_dict(data: dict) -> RunConfig:
    data = _require_mapping(data, "")
    known = {
        "seed", "out_dir", "workers", "optimizer", "advisor", "protocol",
        "cohort", "cgm", "metrics_on_cgm", "safety_mc", "server",
    }
    _reject_unknown(data, known, "")
    seed = int(data.get("seed", 42))
    optimizer = optimizer_from_dict(_require_mapping(data.get("optimizer"), "optimizer"))
    advisor = advisor_from_dict(
        _require_mapping(data.get("advisor"), "advisor"), optimizer
    )
    protocol = _protocol_from_dict(_require_mapping(data.get("protocol"), "protocol"), seed)
    cohort_data = _require_mapping(data.get("cohort"), "cohort")
    _reject_unknown(cohort_data, {"n", "variability", "file"}, "cohort")
    cohort = CohortSpec(
        n=int(cohort_data.get("n", 10)),
        variability=float(cohort_data.get("variability", 0.2)),
        file=cohort_data.get("file"),
    )
    server_data = _require_mapping(data.get("server"), "server")
    _reject_unknown(server_data, {"host", "port"}, "server")
    workers = data.get("workers")
    return RunConfig(
        seed=seed,
        out_dir=str(data.get("out_dir", "out")),
        workers=None if workers is None else int(workers),
        advisor=advisor,
        protocol=protocol,
        cohort=cohort,
        cgm=cgm_from_dict(_require_mapping(data.get("cgm"), "cgm")),
        metrics_on_cgm=bool(data.get("metrics_on_cgm", False)),
        safety_mc=_safety_mc_from_dict(
            _require_mapping(data.get("safety_mc"), "safety_mc"), optimizer, seed
        ),
        server=ServerSpec(
            host=str(server_data.get("host", "127.0.0.1")),
            port=int(server_data.get("port", 8000)),
        ),
    )


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a YAML config file; None yields the built-in defaults."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("(file)", f"not valid YAML: {e}") from None
    return config_from_dict(data or {})


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply command-line overrides: seed, out_dir, workers, days, patients."""
    out = cfg
    if overrides.get("seed") is not None:
        seed = int(overrides["seed"])
        out = dataclasses.replace(
            out,
            seed=seed,
            protocol=dataclasses.replace(out.protocol, seed=seed),
            safety_mc=dataclasses.replace(out.safety_mc, master_seed=seed),
        )
    if overrides.get("out_dir") is not None:
        out = dataclasses.replace(out, out_dir=str(overrides["out_dir"]))
    if overrides.get("workers") is not None:
        out = dataclasses.replace(out, workers=int(overrides["workers"]))
    if overrides.get("days") is not None:
        out = dataclasses.replace(
            out, protocol=dataclasses.replace(out.protocol, days=int(overrides["days"]))
        )
    if overrides.get("patients") is not None:
        out = dataclasses.replace(
            out, cohort=dataclasses.replace(out.cohort, n=int(overrides["patients"]))
        )
    if overrides.get("mc_seeds") is not None:
        out = dataclasses.replace(
            out,
            safety_mc=dataclasses.replace(out.safety_mc, seeds=int(overrides["mc_seeds"])),
        )
    if overrides.get("mc_iterations") is not None:
        out = dataclasses.replace(
            out,
            safety_mc=dataclasses.replace(
                out.safety_mc, iterations=int(overrides["mc_iterations"])
            ),
        )
    return out


def config_to_dict(cfg: RunConfig) -> dict:
    """Effective run-defining configuration, suitable for YAML round-tripping.

    The output directory is deliberately not echoed: artifacts describe the
    run, not where they landed.
    """
    return {
        "seed": cfg.seed,
        "workers": cfg.workers,
        "optimizer": optimizer_to_dict(cfg.advisor.optimizer),
        "advisor": advisor_to_dict(cfg.advisor),
        "protocol": {
            "days": cfg.protocol.days,
            "meal_times": list(cfg.protocol.meal_times),
            "meal_jitter_min": cfg.protocol.meal_jitter_min,
            "size_weights": dict(cfg.protocol.size_weights),
        },
        "cohort": {
            "n": cfg.cohort.n,
            "variability": cfg.cohort.variability,
            "file": cfg.cohort.file,
        },
        "cgm": {
            "sample_period": cfg.cgm.sample_period,
            "noise_std": cfg.cgm.noise_std,
            "sensor_delay": cfg.cgm.sensor_delay,
        },
        "metrics_on_cgm": cfg.metrics_on_cgm,
        "safety_mc": {
            "seeds": cfg.safety_mc.seeds,
            "iterations": cfg.safety_mc.iterations,
            "noise_std": cfg.safety_mc.noise_std,
            "kernel": kernel_to_dict(cfg.safety_mc.kernel),
        },
        "server": {"host": cfg.server.host, "port": cfg.server.port},
    }


def effective_config_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
