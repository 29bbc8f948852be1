"""Marked empirical process goodness-of-fit test for the autocorrelation operator.

The covariate ``Y_{i-1}`` and the residual mark ``Y_i - gamma(Y_{i-1})`` are
reduced to scalars by projecting on random Gaussian directions.  The process

    V(x) = n^{-1/2} sum_i m_i 1{t_i <= x}

only jumps at the observed thresholds ``t_i``, so its supremum is a maximum
over the sorted sample.  Critical values come from a multiplier bootstrap
that keeps the thresholds fixed and multiplies the marks by iid weights.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .estimate import GammaEstimate, estimate_autocorrelation, innovation_cov_h0
from .grid import (
    FunctionalSeries,
    GridFunction,
    KernelMatrix,
    apply_matrix,
    covariance_form,
    trace_norm,
)
from .simulate import GaussianSpec, RngStream, as_generator, draw_projection_direction

MULTIPLIERS = ("normal", "rademacher")
MODES = ("specified", "misspecified")


@dataclass(frozen=True, eq=False)
class ProjectedSample:
    """Scalar thresholds ``<Y_{i-1}, gamma_Y>`` and marks ``<resid_i, gamma_eps>``."""

    thresholds: np.ndarray
    marks: np.ndarray
    order: np.ndarray = field(init=False)

    def __post_init__(self):
        t = np.array(self.thresholds, dtype=float)
        m = np.array(self.marks, dtype=float)
        if t.ndim != 1 or t.shape != m.shape:
            raise ValueError("thresholds and marks must be 1-d arrays of equal length")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "marks", m)
        object.__setattr__(self, "order", np.argsort(t, kind="stable"))

    @property
    def n(self) -> int:
        return self.thresholds.size

    def scaled(self, c: float) -> ProjectedSample:
        return ProjectedSample(self.thresholds, c * self.marks)


@dataclass(frozen=True, eq=False)
class MepPath:
    """Values of the projected process at its distinct jump points.

    ``values[j]`` is ``V`` at ``thresholds[j]`` and ``counts[j]`` the number of
    observations with threshold ``<= thresholds[j]``.
    """

    thresholds: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    n: int


@dataclass
class TestConfig:
    n_projections: int = 1
    n_bootstrap: int = 2000
    standardized: bool = False
    multiplier: str = "normal"
    k_min: int = 5
    alpha: float = 0.05
    add_one: bool = False  # (1 + #) / (B + 1) instead of # / B
    convention: str = "matrix"

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.n_projections < 1 or self.n_bootstrap < 1 or self.k_min < 1:
            raise ValueError("projection, bootstrap and k_min counts must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.multiplier not in MULTIPLIERS:
            raise ValueError(f"multiplier must be one of {MULTIPLIERS}")


@dataclass
class TestOutcome:
    statistics: np.ndarray
    p_values: np.ndarray
    combined_p: float
    reject: bool
    alpha: float
    mode: str = "specified"
    innovation_trace: float | None = None
    k_n: int | None = None

    __test__ = False

    @property
    def per_projection(self) -> list[tuple[float, float]]:
        return [(float(s), float(p)) for s, p in zip(self.statistics, self.p_values)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["projection_index", "statistic", "p_value"])
        for k, (s, p) in enumerate(self.per_projection, start=1):
            w.writerow([k, repr(s), repr(p)])
        w.writerow(["combined_p", "reject", "alpha", "mode", "k_n", "innovation_trace"])
        w.writerow([
            repr(float(self.combined_p)),
            str(self.reject).lower(),
            self.alpha,
            self.mode,
            "" if self.k_n is None else self.k_n,
            "" if self.innovation_trace is None else repr(float(self.innovation_trace)),
        ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> TestOutcome:
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        split = next(i for i, r in enumerate(rows) if r[0] == "combined_p")
        body = rows[1:split]
        summary = dict(zip(rows[split], rows[split + 1]))
        return cls(
            statistics=np.array([float(r[1]) for r in body]),
            p_values=np.array([float(r[2]) for r in body]),
            combined_p=float(summary["combined_p"]),
            reject=summary["reject"] == "true",
            alpha=float(summary["alpha"]),
            mode=summary["mode"],
            k_n=int(summary["k_n"]) if summary.get("k_n") else None,
            innovation_trace=(
                float(summary["innovation_trace"]) if summary.get("innovation_trace") else None
            ),
        )


# --------------------------------------------------------------------------
# projected data and the process path
# --------------------------------------------------------------------------


def _operator(gamma: KernelMatrix | GammaEstimate) -> KernelMatrix:
    return gamma.operator if isinstance(gamma, GammaEstimate) else gamma


def residuals(series: FunctionalSeries, gamma, convention: str = "matrix") -> np.ndarray:
    """``Y_i - gamma(Y_{i-1})`` for i = 2..n, shape (n - 1, m)."""
    gamma = _operator(gamma)
    series.grid.check(gamma.grid)
    if series.n < 2:
        raise ValueError("the series needs at least two observations")
    Y = series.values
    return Y[1:] - apply_matrix(gamma, Y[:-1], convention)


def compute_residual_marks(
    series: FunctionalSeries,
    gamma: KernelMatrix | GammaEstimate,
    gamma_eps: GridFunction,
    gamma_y: GridFunction,
    convention: str = "matrix",
) -> ProjectedSample:
    """Project covariates and residuals; uses the n - 1 in-sample pairs."""
    grid = series.grid
    grid.check(gamma_eps.grid)
    grid.check(gamma_y.grid)
    resid = residuals(series, gamma, convention)
    return ProjectedSample(
        thresholds=grid.inner(series.values[:-1], gamma_y.values),
        marks=grid.inner(resid, gamma_eps.values),
    )


def _jump_ends(sorted_thresholds: np.ndarray) -> np.ndarray:
    """Index of the last element of each run of tied thresholds."""
    n = sorted_thresholds.size
    if n == 0:
        return np.zeros(0, dtype=int)
    last = np.flatnonzero(sorted_thresholds[1:] != sorted_thresholds[:-1])
    return np.append(last, n - 1)


def mep_path(sample: ProjectedSample) -> MepPath:
    n = sample.n
    if n < 1:
        raise ValueError("empty sample")
    t = sample.thresholds[sample.order]
    ends = _jump_ends(t)
    cumulative = np.cumsum(sample.marks[sample.order])
    return MepPath(
        thresholds=t[ends],
        values=cumulative[ends] / np.sqrt(n),
        counts=ends + 1,
        n=n,
    )


def _standardizer(counts: np.ndarray, n: int, k_min: int) -> tuple[np.ndarray, np.ndarray]:
    admissible = counts >= k_min
    if not admissible.any():
        raise ValueError(f"no jump point has at least k_min={k_min} observations")
    return admissible, np.sqrt(n / counts[admissible])


def sup_statistic(path: MepPath, standardized: bool = False, k_min: int = 5) -> float:
    """``max |V|``, or ``max |V| (N/n)^{-1/2}`` over jumps with ``N >= k_min``."""
    if not standardized:
        return float(np.max(np.abs(path.values)))
    admissible, scale = _standardizer(path.counts, path.n, k_min)
    return float(np.max(np.abs(path.values[admissible]) * scale))


def draw_multipliers(gen: np.random.Generator, kind: str, shape) -> np.ndarray:
    if kind == "normal":
        return gen.standard_normal(shape)
    if kind == "rademacher":
        return 2.0 * gen.integers(0, 2, size=shape) - 1.0
    raise ValueError(f"unknown multiplier {kind!r}")


def bootstrap_statistics(
    sample: ProjectedSample,
    multipliers: np.ndarray,
    standardized: bool = False,
    k_min: int = 5,
) -> np.ndarray:
    """Supremum statistic for each row of ``multipliers`` (shape (B, n)).

    Multipliers are indexed in the sample's original order.  The sort order
    and jump structure are shared by all replicates.
    """
    n = sample.n
    order = sample.order
    ends = _jump_ends(sample.thresholds[order])
    weighted = multipliers[:, order] * sample.marks[order]
    paths = np.cumsum(weighted, axis=1)[:, ends] / np.sqrt(n)
    if not standardized:
        return np.max(np.abs(paths), axis=1)
    admissible, scale = _standardizer(ends + 1, n, k_min)
    return np.max(np.abs(paths[:, admissible]) * scale, axis=1)


def fast_bootstrap_pvalue(
    sample: ProjectedSample,
    config: TestConfig,
    rng,
    return_distribution: bool = False,
):
    """Observed statistic and multiplier-bootstrap p-value ``#{S*_b >= S} / B``.

    The multipliers are drawn as one ``(B, n)`` array from ``rng``.
    """
    observed = sup_statistic(mep_path(sample), config.standardized, config.k_min)
    eta = draw_multipliers(as_generator(rng), config.multiplier, (config.n_bootstrap, sample.n))
    boot = bootstrap_statistics(sample, eta, config.standardized, config.k_min)
    exceed = int(np.count_nonzero(boot >= observed))
    if config.add_one:
        p = (1 + exceed) / (config.n_bootstrap + 1)
    else:
        p = exceed / config.n_bootstrap
    if return_distribution:
        return observed, p, boot
    return observed, p


def fdr_combine(p_values) -> float:
    """Benjamini-Hochberg adjusted minimum ``min_k NP p_(k) / k``, capped at 1."""
    p = np.sort(np.asarray(p_values, dtype=float))
    if p.size == 0:
        raise ValueError("no p-values to combine")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    k = np.arange(1, p.size + 1)
    return float(min(1.0, np.min(p.size * p / k)))


# --------------------------------------------------------------------------
# full test
# --------------------------------------------------------------------------


def projection_directions(
    specs: tuple[GaussianSpec, GaussianSpec], rng: RngStream, count: int
) -> tuple[np.ndarray, np.ndarray]:
    """``count`` (gamma_eps, gamma_Y) pairs; pair k uses its own sub-streams.

    Asking for more directions keeps the first ones unchanged.
    """
    eps_spec, y_spec = specs
    eps = [draw_projection_direction(eps_spec, rng.child("gamma_eps", k)).values for k in range(count)]
    ys = [draw_projection_direction(y_spec, rng.child("gamma_y", k)).values for k in range(count)]
    return np.array(eps), np.array(ys)


def projection_pvalues(
    series: FunctionalSeries,
    gamma: KernelMatrix | GammaEstimate,
    config: TestConfig,
    specs: tuple[GaussianSpec, GaussianSpec],
    rng: RngStream,
    count: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Statistics and bootstrap p-values for the first ``count`` projections."""
    count = config.n_projections if count is None else count
    eps_dirs, y_dirs = projection_directions(specs, rng, count)
    grid = series.grid
    resid = residuals(series, gamma, config.convention)
    thresholds = grid.inner(y_dirs, series.values[:-1])  # (count, n - 1)
    marks = grid.inner(eps_dirs, resid)
    stats = np.empty(count)
    pvals = np.empty(count)
    for k in range(count):
        sample = ProjectedSample(thresholds[k], marks[k])
        stats[k], pvals[k] = fast_bootstrap_pvalue(sample, config, rng.child("bootstrap", k))
    return stats, pvals


def run_gof_test(
    series: FunctionalSeries,
    gamma0: KernelMatrix,
    config: TestConfig,
    projection_specs: tuple[GaussianSpec, GaussianSpec],
    rng: RngStream | int,
    mode: str = "specified",
) -> TestOutcome:
    """Test ``H0: gamma = gamma0`` with ``config.n_projections`` projections.

    In ``"misspecified"`` mode the residuals use the projection estimate of
    gamma instead of ``gamma0``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    series.grid.check(gamma0.grid)
    k_n = None
    gamma = gamma0
    if mode == "misspecified":
        estimate = estimate_autocorrelation(series)
        gamma, k_n = estimate.operator, estimate.k_n
    stats, pvals = projection_pvalues(series, gamma, config, projection_specs, rng)
    combined = fdr_combine(pvals)
    return TestOutcome(
        statistics=stats,
        p_values=pvals,
        combined_p=combined,
        reject=combined <= config.alpha,
        alpha=config.alpha,
        mode=mode,
        innovation_trace=trace_norm(innovation_cov_h0(series, gamma0, config.convention)),
        k_n=k_n,
    )


def equivalence_gap(
    series: FunctionalSeries,
    gamma_true: KernelMatrix,
    gamma_est: GammaEstimate | KernelMatrix,
    gamma_eps: GridFunction,
    gamma_y: GridFunction,
) -> float:
    """Largest gap between the processes built with the true and estimated operator."""
    exact = compute_residual_marks(series, gamma_true, gamma_eps, gamma_y)
    fitted = compute_residual_marks(series, gamma_est, gamma_eps, gamma_y)
    gap = mep_path(ProjectedSample(exact.thresholds, exact.marks - fitted.marks))
    return float(np.max(np.abs(gap.values)))


def variance_oracle(eps_kernel: KernelMatrix, gamma_eps: GridFunction, prob: float) -> float:
    """Variance of the projected process where the covariate CDF equals ``prob``.

    ``prob * Var(<eps, gamma_eps>)``, with the variance taken under the
    innovation covariance kernel.
    """
    if not 0 <= prob <= 1:
        raise ValueError("prob must lie in [0, 1]")
    return prob * covariance_form(eps_kernel, gamma_eps, gamma_eps)


def covariance_oracle(
    eps_kernel: KernelMatrix, gamma_eps: GridFunction, prob_s: float, prob_t: float
) -> float:
    """``min(F(s), F(t)) Var(<eps, gamma_eps>)``."""
    return variance_oracle(eps_kernel, gamma_eps, min(prob_s, prob_t))
