"""Gaussian functional data and ARH(1) recursions on a grid."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .estimate import EigenSystem, eigen_decompose
from .grid import FunctionalSeries, Grid, GridFunction, KernelMatrix, apply_matrix

DEFAULT_BURN_IN = 500
DEFAULT_KL_TERMS = 5

#: purpose tags; separate tags keep e.g. projection draws from shifting the
#: simulated series when the number of projections changes
PURPOSES = {"series": 0, "gamma_eps": 1, "gamma_y": 2, "bootstrap": 3}


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream addressed by ``(base_seed, stream_id)``.

    ``stream_id`` entries are non-negative integers or purpose tags from
    :data:`PURPOSES`.  Distinct ids give independent streams via
    :class:`numpy.random.SeedSequence` spawn keys.
    """

    base_seed: int
    stream_id: tuple = ()

    def child(self, *key) -> RngStream:
        return RngStream(self.base_seed, self.stream_id + tuple(key))

    def spawn_key(self) -> tuple[int, ...]:
        key = []
        for k in self.stream_id:
            if isinstance(k, str):
                try:
                    key.append(PURPOSES[k])
                except KeyError:
                    raise ValueError(f"unknown stream purpose {k!r}") from None
            else:
                if int(k) < 0:
                    raise ValueError("stream ids must be non-negative")
                key.append(int(k))
        return tuple(key)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.base_seed, spawn_key=self.spawn_key())
        return np.random.Generator(np.random.PCG64(seq))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def exp_kernel(grid: Grid, sigma: float, theta: float) -> KernelMatrix:
    """Exponential covariance kernel ``sigma^2 exp(-|u - v| / theta)``."""
    if sigma <= 0 or theta <= 0:
        raise ValueError("sigma and theta must be positive")
    u = grid.nodes
    entries = sigma**2 * np.exp(-np.abs(u[:, None] - u[None, :]) / theta)
    return KernelMatrix(grid, entries, symmetric=True)


def exp_operator(grid: Grid, theta: float = 0.8, scale: float | None = None) -> KernelMatrix:
    """Autocorrelation matrix ``scale * exp(-|u - v| / theta)``.

    ``scale`` defaults to ``1 / m``; with 71 nodes and ``theta = 0.8`` this is
    the alternative used in the size/power study.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if scale is None:
        scale = 1.0 / grid.m
    u = grid.nodes
    return KernelMatrix(grid, scale * np.exp(-np.abs(u[:, None] - u[None, :]) / theta))


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Centered (or shifted) Gaussian element of L2 with a kernel covariance.

    With ``kl_truncation = M`` draws use the leading ``M`` Karhunen-Loeve
    terms; otherwise the full kernel is Cholesky-sampled.
    """

    kernel: KernelMatrix
    mean: GridFunction | None = None
    kl_truncation: int | None = None

    def __post_init__(self):
        if not self.kernel.symmetric:
            raise ValueError("a Gaussian covariance kernel must be symmetric")
        if self.mean is not None:
            self.kernel.grid.check(self.mean.grid)
        if self.kl_truncation is not None and not 1 <= self.kl_truncation <= self.grid.m:
            raise ValueError(f"kl_truncation must lie in [1, {self.grid.m}]")

    @property
    def grid(self) -> Grid:
        return self.kernel.grid

    def mean_values(self) -> np.ndarray:
        if self.mean is None:
            return np.zeros(self.grid.m)
        return self.mean.values

    @cached_property
    def eigensystem(self) -> EigenSystem:
        return eigen_decompose(self.kernel)

    @cached_property
    def cholesky_factor(self) -> np.ndarray:
        return _jittered_cholesky(self.kernel.entries)

    def truncated(self, M: int = DEFAULT_KL_TERMS) -> GaussianSpec:
        return replace(self, kl_truncation=M)


def _jittered_cholesky(K: np.ndarray) -> np.ndarray:
    m = K.shape[0]
    base = float(np.trace(K)) / m
    if base == 0.0:
        return np.zeros_like(K)
    jitter = 1e-10 * base
    for attempt in range(2):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(m))
        except np.linalg.LinAlgError:
            jitter *= 10
    raise np.linalg.LinAlgError("kernel is not positive definite even after jitter")


def sample_gaussian_array(spec: GaussianSpec, gen: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent draws as rows of a ``(size, m)`` array."""
    mean = spec.mean_values()
    if spec.kl_truncation is not None:
        eig = spec.eigensystem
        M = spec.kl_truncation
        xi = gen.standard_normal((size, M))
        basis = np.sqrt(eig.eigenvalues[:M])[:, None] * eig.eigenfunctions[:M]
        return mean + xi @ basis
    z = gen.standard_normal((size, spec.grid.m))
    return mean + z @ spec.cholesky_factor.T


def sample_gaussian(spec: GaussianSpec, rng) -> GridFunction:
    """One draw from ``spec``; ``rng`` is an :class:`RngStream` or a Generator."""
    return GridFunction(spec.grid, sample_gaussian_array(spec, as_generator(rng), 1)[0])


def draw_projection_direction(spec: GaussianSpec, rng) -> GridFunction:
    """Random projection direction, KL-truncated at 5 terms unless set."""
    if spec.kl_truncation is None:
        spec = spec.truncated(DEFAULT_KL_TERMS)
    return sample_gaussian(spec, rng)


@dataclass(frozen=True, eq=False)
class ARHSpec:
    """ARH(1) model ``Y_t = gamma(Y_{t-1}) + eps_t`` with burn-in."""

    gamma: KernelMatrix
    noise: GaussianSpec
    initial: GaussianSpec
    n: int
    burn_in: int = DEFAULT_BURN_IN
    convention: str = "matrix"

    def __post_init__(self):
        self.gamma.grid.check(self.noise.grid)
        self.gamma.grid.check(self.initial.grid)
        if self.n < 1 or self.burn_in < 0:
            raise ValueError("n must be positive and burn_in non-negative")
        if self.convention == "matrix" and np.linalg.norm(self.gamma.entries, 2) >= 1:
            warnings.warn(
                "largest singular value of gamma is >= 1; the recursion may "
                "not be stationary",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def grid(self) -> Grid:
        return self.gamma.grid


def simulate_arh1(spec: ARHSpec, rng) -> FunctionalSeries:
    """Run the recursion for ``burn_in + n`` steps and keep the last ``n``.

    Y_0 and the innovations come from one generator, Y_0 first.
    """
    gen = as_generator(rng)
    y = sample_gaussian_array(spec.initial, gen, 1)[0]
    eps = sample_gaussian_array(spec.noise, gen, spec.burn_in + spec.n)
    if not np.any(spec.gamma.entries):
        return FunctionalSeries(spec.grid, eps[spec.burn_in:])
    out = np.empty_like(eps)
    for t in range(eps.shape[0]):
        y = apply_matrix(spec.gamma, y, spec.convention) + eps[t]
        out[t] = y
    return FunctionalSeries(spec.grid, out[spec.burn_in:])


# --------------------------------------------------------------------------
# plain-text configuration
# --------------------------------------------------------------------------


@dataclass
class SimulationConfig:
    """Key-value description of an ARH(1) experiment.

    ``gamma_kind`` is ``"zero"`` or ``"exp_scaled"``; ``gamma_scale`` defaults
    to ``1 / m`` when unset.
    """

    m: int = 71
    sigma_eps: float = 0.10
    theta_eps: float = 0.3
    sigma_y0: float = 0.10
    theta_y0: float = 0.3
    gamma_kind: str = "zero"
    gamma_theta: float = 0.8
    gamma_scale: float | None = None
    burn_in: int = DEFAULT_BURN_IN
    n: int = 200
    seed: int = 20240101

    def __post_init__(self):
        if self.gamma_kind not in ("zero", "exp_scaled"):
            raise ValueError(f"gamma_kind must be 'zero' or 'exp_scaled', not {self.gamma_kind!r}")

    def grid(self) -> Grid:
        return Grid.uniform(self.m)

    def gamma(self, grid: Grid | None = None) -> KernelMatrix:
        grid = grid or self.grid()
        if self.gamma_kind == "zero":
            return KernelMatrix.zeros(grid, symmetric=False)
        return exp_operator(grid, self.gamma_theta, self.gamma_scale)

    def noise_spec(self, grid: Grid | None = None) -> GaussianSpec:
        return GaussianSpec(exp_kernel(grid or self.grid(), self.sigma_eps, self.theta_eps))

    def initial_spec(self, grid: Grid | None = None) -> GaussianSpec:
        return GaussianSpec(exp_kernel(grid or self.grid(), self.sigma_y0, self.theta_y0))

    def to_spec(self, n: int | None = None, gamma: KernelMatrix | None = None) -> ARHSpec:
        grid = self.grid()
        return ARHSpec(
            gamma=gamma if gamma is not None else self.gamma(grid),
            noise=self.noise_spec(grid),
            initial=self.initial_spec(grid),
            n=self.n if n is None else n,
            burn_in=self.burn_in,
        )

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> SimulationConfig:
        return cls(**_coerce(cls, parse_key_values(text)))

    @classmethod
    def load(cls, path: str | Path) -> SimulationConfig:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split(sep, 1))
        out[key] = value
    return out


def _coerce(cls, raw: dict[str, str]) -> dict:
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, value in raw.items():
        default = known[key].default
        if key == "gamma_scale":
            out[key] = None if value.lower() in ("", "none") else _number(value)
        elif isinstance(default, bool):
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            out[key] = int(value)
        elif isinstance(default, float):
            out[key] = _number(value)
        else:
            out[key] = value
    return out


def _number(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)
