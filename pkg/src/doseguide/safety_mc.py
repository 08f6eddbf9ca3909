"""Monte Carlo check of the high-probability safety guarantee.

Ground-truth reward and constraint functions are sampled from the same GP
prior the optimizer uses, the safe selection loop runs against noisy
observations of them, and the frequency of true constraint violations among
non-fallback selections is compared with the configured risk level delta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import SafeBOConfig, select_dose
from .errors import ConfigError
from .gp import GaussianProcess, InputPoint, KernelSpec, Observation


@dataclass(frozen=True)
class SafetyMCConfig:
    seeds: int = 200
    iterations: int = 50
    optimizer: SafeBOConfig = field(default_factory=SafeBOConfig)
    kernel: KernelSpec = field(
        default_factory=lambda: KernelSpec(signal_std=1.0, lengthscales=(0.15,))
    )
    noise_std: float = 0.1  # observation noise, shared by truth and surrogate
    master_seed: int = 0

    def __post_init__(self):
        if self.seeds < 1:
            raise ConfigError("seeds", "must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations", "must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise_std", "must be >= 0")


@dataclass
class SafetyMCReport:
    seeds: int
    iterations: int
    delta: float
    beta_sqrt: float
    violations: int  # non-fallback selections with true constraint < 0
    non_fallback: int
    fallback: int
    per_iteration_non_fallback: np.ndarray
    per_iteration_violations: np.ndarray

    @property
    def violation_rate(self) -> float:
        return self.violations / self.non_fallback if self.non_fallback else 0.0

    @property
    def fallback_rate(self) -> float:
        total = self.non_fallback + self.fallback
        return self.fallback / total if total else 0.0


def _sample_truth(
    cov_root: np.ndarray, rng: np.random.Generator, prior_mean: float
) -> np.ndarray:
    return prior_mean + cov_root @ rng.standard_normal(cov_root.shape[0])


def _cov_root(kernel: KernelSpec, grid_norm: np.ndarray) -> np.ndarray:
    """Eigenvalue square root of the prior covariance over the grid.

    A dense grid makes the smooth-kernel Gram matrix numerically rank
    deficient, so a clipped eigendecomposition replaces Cholesky here.
    """
    from .gp import kernel_matrix

    coords = grid_norm[:, None]
    cov = kernel_matrix(kernel, coords, coords)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def run_safety_mc(cfg: SafetyMCConfig) -> SafetyMCReport:
    """Run the selection loop on prior-sampled truths and tally violations."""
    opt = cfg.optimizer
    grid = opt.grid_array()
    lo, hi = opt.dose_bounds
    grid_norm = (grid - lo) / (hi - lo) if hi > lo else grid
    root = _cov_root(cfg.kernel, grid_norm)

    n_iter = cfg.iterations
    per_iter_nf = np.zeros(n_iter, dtype=int)
    per_iter_viol = np.zeros(n_iter, dtype=int)
    fallback_count = 0

    for s in range(cfg.seeds):
        rng = np.random.default_rng((cfg.master_seed, s))
        truth_reward = _sample_truth(root, rng, prior_mean=0.0)
        truth_constraint = _sample_truth(root, rng, prior_mean=0.0)

        reward_gp = GaussianProcess(kernel=cfg.kernel, dose_bounds=(lo, hi))
        constraint_gp = GaussianProcess(kernel=cfg.kernel, dose_bounds=(lo, hi))

        for k in range(1, n_iter + 1):
            decision = select_dose(
                reward_gp, [constraint_gp], (), opt, iteration=k
            )
            j = int(np.argmin(np.abs(grid - decision.dose)))
            if decision.fallback_used:
                fallback_count += 1
            else:
                per_iter_nf[k - 1] += 1
                if truth_constraint[j] < 0:
                    per_iter_viol[k - 1] += 1
            point = InputPoint(float(grid[j]))
            y_r = truth_reward[j] + rng.normal(0.0, cfg.noise_std)
            y_c = truth_constraint[j] + rng.normal(0.0, cfg.noise_std)
            reward_gp = reward_gp.condition(Observation(point, y_r, cfg.noise_std))
            constraint_gp = constraint_gp.condition(
                Observation(point, y_c, cfg.noise_std)
            )

    return SafetyMCReport(
        seeds=cfg.seeds,
        iterations=n_iter,
        delta=opt.delta,
        beta_sqrt=opt.beta_sqrt,
        violations=int(per_iter_viol.sum()),
        non_fallback=int(per_iter_nf.sum()),
        fallback=fallback_count,
        per_iteration_non_fallback=per_iter_nf,
        per_iteration_violations=per_iter_viol,
    )


def summary_text(report: SafetyMCReport) -> str:
    lines = [
        f"Safety Monte Carlo: {report.seeds} seeds x {report.iterations} iterations",
        f"delta {report.delta}  beta_sqrt {report.beta_sqrt}",
        f"non-fallback selections: {report.non_fallback}",
        f"constraint violations:   {report.violations}"
        f"  (rate {report.violation_rate:.4f})",
        f"fallback selections:     {report.fallback}"
        f"  (rate {report.fallback_rate:.4f})",
    ]
    return "\n".join(lines) + "\n"


def report_csv(report: SafetyMCReport) -> str:
    lines = ["iteration,non_fallback,violations,violation_rate"]
    for k in range(report.iterations):
        nf = report.per_iteration_non_fallback[k]
        v = report.per_iteration_violations[k]
        rate = v / nf if nf else 0.0
        lines.append(f"{k + 1},{nf},{v},{rate:.6f}")
    return "\n".join(lines) + "\n"
