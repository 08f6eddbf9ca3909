"""Gaussian process regression over (dose, context) inputs.

A :class:`GaussianProcess` is an immutable value: conditioning on a new
observation returns a new instance with a freshly factorized Gram matrix.
Doses are mapped to [0, 1] by the configured dose bounds before kernel
evaluation so one set of lengthscales works across dose domains; context
features are expected to arrive already normalized.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, GPNumericsError

SQUARED_EXPONENTIAL = "squared-exponential"
MATERN52 = "matern-5/2"
KERNEL_FAMILIES = (SQUARED_EXPONENTIAL, MATERN52)

# Relative jitter added to the Gram diagonal (scaled by signal variance).
DEFAULT_JITTER = 1e-8

# Round-off guard: posterior variances above -1e-12 are treated as exact zeros.
VARIANCE_CLAMP = 1e-12


@dataclass(frozen=True)
class InputPoint:
    """One query or observation site: an insulin dose plus context features."""

    dose: float
    context: tuple[float, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.dose) or self.dose < 0:
            raise ConfigError("dose", f"must be finite and >= 0, got {self.dose}")
        if any(not math.isfinite(c) for c in self.context):
            raise ConfigError("context", f"features must be finite, got {self.context}")

    def coords(self) -> np.ndarray:
        return np.array((self.dose, *self.context), dtype=float)


@dataclass(frozen=True)
class Observation:
    """A noisy function value at an input point."""

    input: InputPoint
    value: float
    noise_std: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ConfigError("value", f"must be finite, got {self.value}")
        if self.noise_std < 0:
            raise ConfigError("noise_std", f"must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class KernelSpec:
    """Stationary covariance family with per-dimension lengthscales."""

    family: str = SQUARED_EXPONENTIAL
    signal_std: float = 1.0
    lengthscales: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ConfigError("kernel.family", f"unknown family {self.family!r}")
        if self.signal_std <= 0:
            raise ConfigError("kernel.signal_std", f"must be > 0, got {self.signal_std}")
        if not self.lengthscales or any(l <= 0 for l in self.lengthscales):
            raise ConfigError(
                "kernel.lengthscales", f"all must be > 0, got {self.lengthscales}"
            )

    @property
    def input_dim(self) -> int:
        return len(self.lengthscales)


def _scaled_sqdist(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared distance of rows of a and b, scaled per dimension."""
    ls = np.asarray(spec.lengthscales, dtype=float)
    d = a[:, None, :] / ls - b[None, :, :] / ls
    return np.einsum("ijk,ijk->ij", d, d)


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Covariance between row-stacked coordinate matrices (no normalization)."""
    if a.shape[1] != spec.input_dim or b.shape[1] != spec.input_dim:
        raise ConfigError(
            "kernel.lengthscales",
            f"input dim {a.shape[1]}/{b.shape[1]} does not match "
            f"kernel dim {spec.input_dim}",
        )
    r2 = _scaled_sqdist(spec, a, b)
    s2 = spec.signal_std**2
    if spec.family == SQUARED_EXPONENTIAL:
        return s2 * np.exp(-0.5 * r2)
    r = np.sqrt(np.maximum(r2, 0.0))
    sqrt5_r = math.sqrt(5.0) * r
    return s2 * (1.0 + sqrt5_r + (5.0 / 3.0) * r2) * np.exp(-sqrt5_r)


def kernel_eval(spec: KernelSpec, a: InputPoint, b: InputPoint) -> float:
    """Covariance k(a, b) on raw coordinates. Symmetric; k(a, a) = signal_std^2."""
    ca, cb = a.coords(), b.coords()
    if ca.size != spec.input_dim or cb.size != spec.input_dim:
        raise ConfigError(
            "kernel.lengthscales",
            f"point dim {ca.size}/{cb.size} does not match kernel dim {spec.input_dim}",
        )
    return float(kernel_matrix(spec, ca[None, :], cb[None, :])[0, 0])


@dataclass(frozen=True)
class GaussianProcess:
    """Posterior belief over one scalar function of (dose, context).

    ``dose_bounds`` (lo, hi) rescales doses to [0, 1] before the kernel is
    applied; ``None`` leaves doses unscaled. The Cholesky factor of the
    noise-augmented Gram matrix is cached on construction, so instances are
    cheap to query and safe to share across threads.
    """

    kernel: KernelSpec = field(default_factory=KernelSpec)
    prior_mean: float = 0.0
    dose_bounds: tuple[float, float] | None = None
    jitter: float = DEFAULT_JITTER
    observations: tuple[Observation, ...] = ()

    _x: np.ndarray = field(init=False, repr=False, compare=False)
    _chol: np.ndarray | None = field(init=False, repr=False, compare=False)
    _alpha: np.ndarray | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dose_bounds is not None and self.dose_bounds[1] <= self.dose_bounds[0]:
            raise ConfigError("dose_bounds", f"need lo < hi, got {self.dose_bounds}")
        if not self.observations:
            object.__setattr__(self, "_x", np.empty((0, self.kernel.input_dim)))
            object.__setattr__(self, "_chol", None)
            object.__setattr__(self, "_alpha", None)
            return
        x = self._normalize_rows(
            np.array([o.input.coords() for o in self.observations], dtype=float)
        )
        object.__setattr__(self, "_x", x)
        if x.shape[1] != self.kernel.input_dim:
            raise ConfigError(
                "kernel.lengthscales",
                f"observation dim {x.shape[1]} does not match kernel dim "
                f"{self.kernel.input_dim}",
            )
        gram = kernel_matrix(self.kernel, x, x)
        noise = np.array([o.noise_std**2 for o in self.observations], dtype=float)
        gram[np.diag_indices_from(gram)] += noise + self.jitter * self.kernel.signal_std**2
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            raise GPNumericsError(self._degeneracy_message(x)) from None
        resid = np.array([o.value for o in self.observations]) - self.prior_mean
        alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, resid))
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_alpha", alpha)

    def _degeneracy_message(self, x: np.ndarray) -> str:
        n = x.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                if np.allclose(x[i], x[j], atol=1e-12):
                    return (
                        "Gram matrix not positive definite: observations "
                        f"{i} and {j} coincide at {self.observations[j].input} "
                        "with too little noise/jitter"
                    )
        return "Gram matrix not positive definite"

    def _normalize_rows(self, coords: np.ndarray) -> np.ndarray:
        if self.dose_bounds is None:
            return coords
        lo, hi = self.dose_bounds
        out = coords.copy()
        out[:, 0] = (coords[:, 0] - lo) / (hi - lo)
        return out

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    def condition(self, obs: Observation) -> "GaussianProcess":
        """Return a new GP that additionally includes ``obs``."""
        return dataclasses.replace(self, observations=(*self.observations, obs))

    def with_kernel(self, spec: KernelSpec) -> "GaussianProcess":
        return dataclasses.replace(self, kernel=spec)

    def posterior(self, q: InputPoint) -> tuple[float, float]:
        """Posterior (mean, std) at one query point."""
        mean, std = self.posterior_many(q.coords()[None, :])
        return float(mean[0]), float(std[0])

    def posterior_many(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized posterior over row-stacked raw (dose, context) coords."""
        coords = np.asarray(coords, dtype=float)
        q = self._normalize_rows(coords)
        if q.shape[1] != self.kernel.input_dim:
            raise ConfigError(
                "kernel.lengthscales",
                f"query dim {q.shape[1]} does not match kernel dim "
                f"{self.kernel.input_dim}",
            )
        prior_var = self.kernel.signal_std**2
        if not self.observations:
            n = q.shape[0]
            return np.full(n, self.prior_mean), np.full(n, self.kernel.signal_std)
        k_star = kernel_matrix(self.kernel, self._x, q)
        mean = self.prior_mean + k_star.T @ self._alpha
        v = np.linalg.solve(self._chol, k_star)
        var = prior_var - np.einsum("ij,ij->j", v, v)
        var = np.where(var > 0.0, var, 0.0)  # round-off can leave ~-1e-12
        return mean, np.sqrt(var)

    def log_marginal_likelihood(self) -> float:
        """Log evidence of the observations under the current kernel."""
        if not self.observations:
            raise ValueError("log marginal likelihood requires at least one observation")
        n = self.n_observations
        resid = np.array([o.value for o in self.observations]) - self.prior_mean
        quad = float(resid @ self._alpha)
        logdet = float(np.sum(np.log(np.diag(self._chol))))
        return -0.5 * quad - logdet - 0.5 * n * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class HyperBounds:
    """Search intervals for kernel hyperparameters."""

    signal_std: tuple[float, float] = (1e-2, 1e3)
    lengthscales: tuple[tuple[float, float], ...] = ((1e-2, 1e2),)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.signal_std[0], *(b[0] for b in self.lengthscales)])
        hi = np.array([self.signal_std[1], *(b[1] for b in self.lengthscales)])
        return lo, hi


MIN_OBSERVATIONS_FOR_FIT = 4
FIT_STARTS = 8


def fit_hyperparameters(
    gp: GaussianProcess, bounds: HyperBounds, n_starts: int = FIT_STARTS
) -> KernelSpec:
    """Maximize the log marginal likelihood over kernel hyperparameters.

    Multi-start local search on log-parameters; the incoming spec is always
    one of the starts, so the returned spec never has lower evidence than
    the incoming one. Below four observations the incoming spec is returned
    unchanged.
    """
    if len(bounds.lengthscales) != gp.kernel.input_dim:
        raise ConfigError(
            "bounds.lengthscales",
            f"expected {gp.kernel.input_dim} intervals, got {len(bounds.lengthscales)}",
        )
    if gp.n_observations < MIN_OBSERVATIONS_FOR_FIT:
        return gp.kernel

    lo, hi = bounds.as_arrays()
    if np.any(lo <= 0) or np.any(hi < lo):
        raise ConfigError("bounds", "intervals must be positive with lo <= hi")
    log_lo, log_hi = np.log(lo), np.log(hi)

    def spec_from(theta: np.ndarray) -> KernelSpec:
        p = np.exp(np.clip(theta, log_lo, log_hi))
        return KernelSpec(gp.kernel.family, float(p[0]), tuple(float(v) for v in p[1:]))

    def neg_lml(theta: np.ndarray) -> float:
        try:
            return -gp.with_kernel(spec_from(theta)).log_marginal_likelihood()
        except (GPNumericsError, np.linalg.LinAlgError):
            return 1e12

    # The incoming spec is clipped into the bounds and used as a start, so
    # the result never has lower evidence than any feasible incoming spec.
    incoming = np.log(
        np.clip(np.array([gp.kernel.signal_std, *gp.kernel.lengthscales]), lo, hi)
    )
    rng = np.random.default_rng(12345)  # fixed starts keep refits reproducible
    starts = [incoming] + [
        rng.uniform(log_lo, log_hi) for _ in range(max(0, n_starts - 1))
    ]

    best_theta, best_val = incoming, neg_lml(incoming)
    for theta0 in starts:
        try:
            res = minimize(
                neg_lml,
                theta0,
                method="L-BFGS-B",
                bounds=list(zip(log_lo, log_hi)),
            )
        except Exception:
            continue
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    if not math.isfinite(best_val):
        return gp.kernel
    return spec_from(best_theta)
