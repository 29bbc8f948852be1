"""Discretized L2[0, 1] primitives.

Functions are stored as their values on a fixed grid.  Inner products and
traces use the grid's quadrature weights.  An autocorrelation matrix acts on
a function by a plain matrix-vector product (the quadrature weight is folded
into the matrix), while a covariance kernel acts as an integral operator with
the weights applied explicitly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_NODES = 71

#: operator-application conventions understood by :func:`apply_operator`
CONVENTIONS = ("matrix", "quadrature")


class GridMismatchError(ValueError):
    """Raised when objects defined on different grids are combined."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered nodes in [0, 1] with positive quadrature weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.size == 0:
            raise ValueError("grid nodes must be a non-empty 1-d array")
        if weights.shape != nodes.shape:
            raise ValueError("one quadrature weight per node is required")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if nodes[0] < 0 or nodes[-1] > 1:
            raise ValueError("grid nodes must lie in [0, 1]")
        if not np.all(weights > 0):
            raise ValueError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, m: int = DEFAULT_NODES) -> Grid:
        """``m`` equispaced nodes ``(i - 1) / (m - 1)`` with weight ``1 / m``."""
        if m < 1:
            raise ValueError("m must be positive")
        nodes = np.linspace(0.0, 1.0, m) if m > 1 else np.array([0.0])
        return cls(nodes, np.full(m, 1.0 / m))

    @property
    def m(self) -> int:
        return self.nodes.size

    def same_as(self, other: Grid) -> bool:
        return self is other or (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
        )

    def check(self, other: Grid) -> None:
        if not self.same_as(other):
            raise GridMismatchError("objects live on different grids")

    # array-level helpers used on hot paths
    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Weighted inner product along the last axis of ``a`` and ``b``."""
        return np.asarray(a * self.weights) @ np.asarray(b).T


def _finite(values: np.ndarray, what: str) -> np.ndarray:
    values = np.array(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} must be finite")
    return values


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _finite(self.values, "function values")
        if values.shape != (self.grid.m,):
            raise ValueError(
                f"expected {self.grid.m} values, got shape {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def norm(self) -> float:
        return float(np.sqrt(inner_product(self, self)))

    def __add__(self, other: GridFunction) -> GridFunction:
        self.grid.check(other.grid)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        self.grid.check(other.grid)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> GridFunction:
        return GridFunction(self.grid, c * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """A kernel or operator matrix sampled on a grid.

    With ``symmetric=True`` the entries must be exactly symmetric and
    positive semidefinite up to ``1e-8 * max(diag)``.
    """

    grid: Grid
    entries: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        entries = _finite(self.entries, "kernel entries")
        m = self.grid.m
        if entries.shape != (m, m):
            raise ValueError(f"expected a {m}x{m} matrix, got {entries.shape}")
        if self.symmetric:
            if not np.array_equal(entries, entries.T):
                raise ValueError("kernel flagged symmetric is not symmetric")
            scale = max(float(np.max(np.diag(entries), initial=0.0)), 0.0)
            lowest = np.linalg.eigvalsh(weighted_symmetric(entries, self.grid))[0]
            wmax = float(np.max(self.grid.weights))
            if lowest < -1e-8 * scale * wmax:
                raise ValueError(
                    f"kernel is not positive semidefinite (eigenvalue {lowest:.3g})"
                )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def symmetrized(cls, grid: Grid, entries: np.ndarray) -> KernelMatrix:
        """Average with the transpose and clamp negative eigenvalues to zero."""
        entries = np.asarray(entries, dtype=float)
        entries = 0.5 * (entries + entries.T)
        evals, evecs = np.linalg.eigh(weighted_symmetric(entries, grid))
        # round-off negatives are left alone so PSD inputs pass through exactly
        if evals[0] < -1e-12 * max(abs(evals[-1]), abs(evals[0])):
            s = np.sqrt(grid.weights)
            evals = np.clip(evals, 0.0, None)
            entries = (evecs * evals) @ evecs.T / np.outer(s, s)
            entries = 0.5 * (entries + entries.T)
        return cls(grid, entries, symmetric=True)

    @classmethod
    def zeros(cls, grid: Grid, symmetric: bool = True) -> KernelMatrix:
        return cls(grid, np.zeros((grid.m, grid.m)), symmetric=symmetric)

    @classmethod
    def identity(cls, grid: Grid) -> KernelMatrix:
        return cls(grid, np.eye(grid.m), symmetric=False)


def weighted_symmetric(entries: np.ndarray, grid: Grid) -> np.ndarray:
    """``diag(sqrt(w)) K diag(sqrt(w))``, whose spectrum is the operator's."""
    s = np.sqrt(grid.weights)
    return entries * np.outer(s, s)


@dataclass(frozen=True, eq=False)
class FunctionalSeries:
    """Time-ordered sample Y_1..Y_n; ``values`` has shape (n, m)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _finite(self.values, "series values")
        if values.ndim != 2 or values.shape[1] != self.grid.m:
            raise ValueError(
                f"series must have shape (n, {self.grid.m}), got {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, t: int) -> GridFunction:
        return GridFunction(self.grid, self.values[t])


def inner_product(f: GridFunction, g: GridFunction) -> float:
    f.grid.check(g.grid)
    return float(np.sum(f.grid.weights * f.values * g.values))


def norm(f: GridFunction) -> float:
    return f.norm()


def apply_operator(
    K: KernelMatrix, f: GridFunction, convention: str = "matrix"
) -> GridFunction:
    """Apply ``K`` to ``f``.

    ``"matrix"`` is the plain product ``K @ f``.  ``"quadrature"`` treats the
    entries as kernel values and integrates, ``K @ (w * f)``.
    """
    K.grid.check(f.grid)
    return GridFunction(f.grid, apply_matrix(K, f.values, convention))


def apply_matrix(K: KernelMatrix, values: np.ndarray, convention: str = "matrix"):
    """Array-level :func:`apply_operator`; rows of ``values`` are functions."""
    if convention == "matrix":
        return values @ K.entries.T
    if convention == "quadrature":
        return (values * K.grid.weights) @ K.entries.T
    raise ValueError(f"unknown convention {convention!r}; use one of {CONVENTIONS}")


def trace_norm(K: KernelMatrix) -> float:
    """Quadrature trace ``sum_i w_i K_ii`` of a covariance kernel."""
    if not K.symmetric:
        raise ValueError("trace norm needs a symmetric positive kernel")
    return float(np.sum(K.grid.weights * np.diag(K.entries)))


def covariance_form(K: KernelMatrix, f: GridFunction, g: GridFunction) -> float:
    """``<C f, g>`` for the integral operator C with covariance kernel ``K``.

    For Z with covariance kernel K this is ``Cov(<Z, f>, <Z, g>)``.
    """
    K.grid.check(f.grid)
    K.grid.check(g.grid)
    w = K.grid.weights
    return float((w * g.values) @ K.entries @ (w * f.values))


def operator_norm(K: KernelMatrix, convention: str = "matrix") -> float:
    """Operator norm on the weighted space L2_w.

    ``convention`` has the meaning of :func:`apply_operator`; covariance
    kernels (integral semantics) use ``"quadrature"``.
    """
    s = np.sqrt(K.grid.weights)
    if convention == "matrix":
        a = s[:, None] * K.entries / s[None, :]
    elif convention == "quadrature":
        a = s[:, None] * K.entries * s[None, :]
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return float(np.linalg.norm(a, 2))


# --------------------------------------------------------------------------
# CSV interchange
# --------------------------------------------------------------------------


def series_to_csv(series: FunctionalSeries, path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"node_{j}" for j in range(series.grid.m)])
    for t, row in enumerate(series.values, start=1):
        writer.writerow([t] + [repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def series_from_csv(source: str | Path, grid: Grid | None = None) -> FunctionalSeries:
    """Read a series written by :func:`series_to_csv`.

    ``source`` is a path or the CSV text itself.  Without ``grid`` a uniform
    grid with as many nodes as columns is assumed.
    """
    rows = list(csv.reader(io.StringIO(_read_text(source))))
    if not rows or rows[0][0].strip() != "t":
        raise ValueError("series CSV must start with a 't,node_0,...' header")
    values = np.array([[float(x) for x in r[1:]] for r in rows[1:] if r], dtype=float)
    m = len(rows[0]) - 1
    if values.size == 0:
        values = values.reshape(0, m)
    grid = grid or Grid.uniform(m)
    return FunctionalSeries(grid, values)


def kernel_to_csv(K: KernelMatrix, path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in K.entries:
        writer.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def kernel_from_csv(
    source: str | Path, grid: Grid | None = None, symmetric: bool = False
) -> KernelMatrix:
    rows = [r for r in csv.reader(io.StringIO(_read_text(source))) if r]
    entries = np.array([[float(x) for x in r] for r in rows], dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ValueError("kernel CSV must be a square matrix")
    grid = grid or Grid.uniform(entries.shape[0])
    return KernelMatrix(grid, entries, symmetric=symmetric)


def _read_text(source: str | Path) -> str:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        return Path(source).read_text(encoding="utf-8")
    return source
