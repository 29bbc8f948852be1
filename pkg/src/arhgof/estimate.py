"""Empirical second-order structure and the projection estimator of gamma."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    FunctionalSeries,
    Grid,
    GridFunction,
    KernelMatrix,
    operator_norm,
    weighted_symmetric,
)

#: eigenvalues below this fraction of the largest are not inverted
RELATIVE_EIGEN_FLOOR = 1e-6


class EigenvalueError(ValueError, ArithmeticError):
    """A covariance eigenvalue that must be inverted is not positive."""


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenpairs of a covariance operator, largest eigenvalue first.

    ``eigenfunctions`` has one function per row and is orthonormal in the
    grid's weighted inner product.
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray

    def __len__(self) -> int:
        return self.eigenvalues.size

    def function(self, k: int) -> GridFunction:
        return GridFunction(self.grid, self.eigenfunctions[k])

    def reconstruct(self, k: int | None = None) -> np.ndarray:
        """Kernel entries of ``sum_{j<k} lambda_j phi_j (x) phi_j``."""
        phi = self.eigenfunctions[:k]
        return (phi.T * self.eigenvalues[:k]) @ phi

    def flip_signs(self, signs) -> EigenSystem:
        signs = np.asarray(signs, dtype=float)[:, None]
        return EigenSystem(self.grid, self.eigenvalues, self.eigenfunctions * signs)


@dataclass(frozen=True, eq=False)
class GammaEstimate:
    """Finite-rank estimate of the autocorrelation operator.

    ``operator`` follows the plain matrix-vector convention, so it can be
    passed anywhere the true operator is accepted.  ``coefficients[l, j]`` is
    the weight of ``phi_l (x) phi_j``.
    """

    operator: KernelMatrix
    k_n: int
    basis: EigenSystem
    coefficients: np.ndarray
    eigenvalues_used: np.ndarray
    lag1_norm: float


def empirical_cov_operator(series: FunctionalSeries, lag: int = 0) -> KernelMatrix:
    """Lag-0 covariance ``(1/n) sum Y_i (x) Y_i`` or lag-1 ``(1/(n-1)) sum Y_i (x) Y_{i+1}``.

    Lag-1 entries are ``[a, b] = mean_i Y_i(u_a) Y_{i+1}(u_b)``.
    """
    n = series.n
    if n < 2:
        raise ValueError("at least two observations are required")
    Y = series.values
    if lag == 0:
        C = Y.T @ Y / n
        return KernelMatrix(series.grid, 0.5 * (C + C.T), symmetric=True)
    if lag == 1:
        return KernelMatrix(series.grid, Y[:-1].T @ Y[1:] / (n - 1))
    raise ValueError("lag must be 0 or 1")


def eigen_decompose(K: KernelMatrix) -> EigenSystem:
    """Eigenpairs of the integral operator with covariance kernel ``K``.

    Solved through ``diag(sqrt(w)) K diag(sqrt(w))``.  Eigenvalues are clamped
    at zero and each eigenfunction's first non-negligible coordinate is made
    positive.
    """
    if not K.symmetric:
        raise ValueError("eigen_decompose needs a symmetric kernel")
    s = np.sqrt(K.grid.weights)
    evals, evecs = np.linalg.eigh(weighted_symmetric(K.entries, K.grid))
    evals = np.clip(evals[::-1], 0.0, None)
    phi = (evecs[:, ::-1] / s[:, None]).T
    for row in phi:
        big = np.abs(row) > 1e-12 * np.max(np.abs(row))
        if row[np.argmax(big)] < 0:
            row *= -1
    return EigenSystem(K.grid, evals, phi)


def default_k_n(n: int, eigenvalues: np.ndarray) -> int:
    """``max(1, floor(log n))``, cut at the last eigenvalue above the floor."""
    k = max(1, int(math.floor(math.log(n))))
    k = min(k, eigenvalues.size)
    floor = RELATIVE_EIGEN_FLOOR * eigenvalues[0]
    usable = int(np.sum(eigenvalues[:k] > floor))
    return max(1, usable)


def estimate_autocorrelation(
    series: FunctionalSeries,
    k_n: int | None = None,
    basis: EigenSystem | str = "empirical",
) -> GammaEstimate:
    """Projection estimator of the autocorrelation operator.

    With ``basis="empirical"`` the eigenpairs of the empirical covariance are
    used.  With a supplied :class:`EigenSystem` its eigenfunctions are kept
    and the eigenvalues are re-estimated as ``mean_i <Y_i, phi_k>^2``.
    """
    grid = series.grid
    n = series.n
    if n < 2:
        raise ValueError("at least two observations are required")
    if isinstance(basis, str):
        if basis != "empirical":
            raise ValueError("basis must be 'empirical' or an EigenSystem")
        eig = eigen_decompose(empirical_cov_operator(series, 0))
        lam = eig.eigenvalues
    else:
        grid.check(basis.grid)
        eig = basis
        lam = np.mean(grid.inner(series.values, eig.eigenfunctions) ** 2, axis=0)

    if k_n is None:
        k_n = default_k_n(n, lam) if lam[0] > 0 else 1
    if lam[0] <= 0:
        raise EigenvalueError("eigenvalue 1 is not positive; cannot invert it")
    if not 1 <= k_n <= len(eig):
        raise ValueError(f"k_n must lie in [1, {len(eig)}]")
    # round-off level counts as zero
    bad = np.flatnonzero(lam[:k_n] <= 1e-12 * max(lam[0], 0.0))
    if bad.size:
        raise EigenvalueError(
            f"eigenvalue {bad[0] + 1} is not positive; cannot invert it (k_n={k_n})"
        )

    phi = eig.eigenfunctions[:k_n]
    lam = lam[:k_n]
    scores = grid.inner(series.values, phi)  # (n, k_n)
    # coef[l, j] = (1/(n-1)) sum_i <Y_i, phi_j> <Y_{i+1}, phi_l> / lam_j
    coef = scores[1:].T @ scores[:-1] / (n - 1) / lam[None, :]
    entries = phi.T @ coef @ (phi * grid.weights)
    operator = KernelMatrix(grid, entries)

    lag1 = operator_norm(empirical_cov_operator(series, 1), "quadrature")
    bound = lag1 * float(np.max(1.0 / lam))
    if operator_norm(operator) > bound * (1 + 1e-9) + 1e-300:
        raise ArithmeticError("projection estimate violates its norm bound")
    return GammaEstimate(operator, k_n, eig, coef, lam, lag1)


def innovation_cov_h0(
    series: FunctionalSeries, gamma0: KernelMatrix, convention: str = "matrix"
) -> KernelMatrix:
    """Innovation covariance implied by ``gamma0``: ``C_Y - G C_Y G^T``.

    The result is symmetrized and clamped to be positive semidefinite.
    """
    series.grid.check(gamma0.grid)
    C = empirical_cov_operator(series, 0).entries
    G = gamma0.entries
    if convention == "quadrature":
        G = G * gamma0.grid.weights[None, :]
    elif convention != "matrix":
        raise ValueError(f"unknown convention {convention!r}")
    return KernelMatrix.symmetrized(series.grid, C - G @ C @ G.T)


def operator_error(estimate: GammaEstimate | KernelMatrix, gamma: KernelMatrix) -> float:
    """Weighted-space operator norm of ``estimate - gamma``."""
    op = estimate.operator if isinstance(estimate, GammaEstimate) else estimate
    op.grid.check(gamma.grid)
    return operator_norm(KernelMatrix(op.grid, op.entries - gamma.entries))
