"""Monte Carlo size and power studies.

One work unit is one repetition at one sample size: simulate a series, draw
the largest number of projections needed, bootstrap each, and combine the
first NP p-values for every NP in the study.  Units are seeded from
``(base_seed, n, rep)`` alone, so results do not depend on how they are
scheduled across workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .estimate import estimate_autocorrelation
from .grid import KernelMatrix
from .meptest import TestConfig, fdr_combine, projection_pvalues
from .simulate import RngStream, SimulationConfig, exp_operator, simulate_arh1

log = logging.getLogger(__name__)

NP_LIST = (1, 2, 3, 4, 5, 10, 15)
SAMPLE_SIZES = (50, 100, 200)
CHECKPOINT_EVERY = 25

PRESETS = {
    "desk": {"reps": 200, "n_bootstrap": 500},
    "paper": {"reps": 500, "n_bootstrap": 2000},
}


@dataclass
class StudyConfig:
    """Size (``hypothesis="null"``) or power (``"alternative"``) study.

    ``gamma0`` defaults to the zero operator.  Under the alternative the data
    are generated with ``alternative_gamma``, by default the exponential
    operator of ``dgp`` with ``theta = dgp.gamma_theta``.
    """

    dgp: SimulationConfig = field(default_factory=SimulationConfig)
    hypothesis: str = "null"
    gamma0: KernelMatrix | None = None
    alternative_gamma: KernelMatrix | None = None
    sample_sizes: tuple[int, ...] = SAMPLE_SIZES
    np_list: tuple[int, ...] = NP_LIST
    reps: int = 200
    test: TestConfig = field(default_factory=lambda: TestConfig(n_bootstrap=500))
    base_seed: int = 20240101
    workers: int = 1
    mode: str = "specified"
    checkpoint: str | Path | None = None

    def __post_init__(self):
        if self.hypothesis not in ("null", "alternative"):
            raise ValueError("hypothesis must be 'null' or 'alternative'")
        if self.reps < 1 or not self.sample_sizes or not self.np_list:
            raise ValueError("reps must be positive and the n / NP lists non-empty")
        if min(self.np_list) < 1 or min(self.sample_sizes) < 2:
            raise ValueError("NP values must be >= 1 and sample sizes >= 2")
        self.sample_sizes = tuple(int(n) for n in self.sample_sizes)
        self.np_list = tuple(int(k) for k in self.np_list)

    @classmethod
    def preset(cls, name: str, **overrides) -> StudyConfig:
        try:
            p = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        test = overrides.pop("test", None) or TestConfig(n_bootstrap=p["n_bootstrap"])
        overrides.setdefault("reps", p["reps"])
        return cls(test=test, **overrides)

    def null_operator(self) -> KernelMatrix:
        if self.gamma0 is not None:
            return self.gamma0
        return KernelMatrix.zeros(self.dgp.grid(), symmetric=False)

    def generating_operator(self) -> KernelMatrix:
        if self.hypothesis == "null":
            return self.null_operator()
        if self.alternative_gamma is not None:
            return self.alternative_gamma
        return exp_operator(self.dgp.grid(), self.dgp.gamma_theta, self.dgp.gamma_scale)

    def fingerprint(self) -> str:
        """Identifies the study for checkpoint reuse (workers excluded)."""
        parts = [
            self.dgp.dumps(),
            self.hypothesis,
            repr(self.sample_sizes),
            repr(self.np_list),
            str(self.reps),
            repr(self.test),
            str(self.base_seed),
            self.mode,
            _matrix_digest(self.null_operator()),
            _matrix_digest(self.generating_operator()),
        ]
        return "|".join(parts)


def _matrix_digest(K: KernelMatrix) -> str:
    return hashlib.sha256(np.ascontiguousarray(K.entries).tobytes()).hexdigest()[:16]


@dataclass
class StudyResult:
    """Rejection rates with rows indexed by sample size and columns by NP."""

    sample_sizes: tuple[int, ...]
    np_list: tuple[int, ...]
    rejection_rate: np.ndarray
    reps: int
    wall_time: float = 0.0

    @property
    def mc_stderr(self) -> np.ndarray:
        r = self.rejection_rate
        return np.sqrt(r * (1 - r) / self.reps)

    def rate(self, n: int, np_: int) -> float:
        return float(self.rejection_rate[self.sample_sizes.index(n), self.np_list.index(np_)])


# --------------------------------------------------------------------------
# work units
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Job:
    spec_by_n: dict
    gamma0: KernelMatrix
    specs: tuple
    test: TestConfig
    np_list: tuple[int, ...]
    base_seed: int
    mode: str


def _run_unit(job: _Job, n: int, rep: int) -> list[float]:
    """Combined p-value for every NP in ``job.np_list``."""
    stream = RngStream(job.base_seed, (n, rep))
    series = simulate_arh1(job.spec_by_n[n], stream.child("series"))
    gamma = job.gamma0
    if job.mode == "misspecified":
        gamma = estimate_autocorrelation(series).operator
    _, pvals = projection_pvalues(series, gamma, job.test, job.specs, stream, max(job.np_list))
    return [fdr_combine(pvals[:k]) for k in job.np_list]


_WORKER_JOB: _Job | None = None


def _init_worker(job: _Job) -> None:
    global _WORKER_JOB
    _WORKER_JOB = job


def _run_unit_in_worker(unit: tuple[int, int]) -> list[float]:
    return _run_unit(_WORKER_JOB, *unit)


def _build_job(config: StudyConfig) -> _Job:
    dgp = config.dgp
    grid = dgp.grid()
    generating = config.generating_operator()
    spec_by_n = {
        n: replace(dgp.to_spec(n=n, gamma=generating), convention=config.test.convention)
        for n in config.sample_sizes
    }
    specs = (dgp.noise_spec(grid).truncated(), dgp.initial_spec(grid).truncated())
    for s in specs:  # computed once here instead of in every worker
        s.eigensystem
    return _Job(spec_by_n, config.null_operator(), specs, config.test,
                config.np_list, config.base_seed, config.mode)


def _load_checkpoint(path: Path | None, fingerprint: str) -> dict:
    if path is None or not path.exists():
        return {}
    state = json.loads(path.read_text(encoding="utf-8"))
    if state.get("fingerprint") != fingerprint:
        log.warning("checkpoint %s belongs to a different study; ignoring it", path)
        return {}
    return {(int(n), int(r)): p for n, r, p in state["units"]}


def _save_checkpoint(path: Path | None, fingerprint: str, done: dict) -> None:
    if path is None:
        return
    units = [[n, r, done[(n, r)]] for n, r in sorted(done)]
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps({"fingerprint": fingerprint, "units": units}), encoding="utf-8")
    os.replace(tmp, path)


def combined_pvalues(config: StudyConfig) -> dict[tuple[int, int], list[float]]:
    """Run (or resume) every repetition; keys are ``(n, rep)``."""
    path = Path(config.checkpoint) if config.checkpoint else None
    fingerprint = config.fingerprint()
    done = _load_checkpoint(path, fingerprint)
    todo = [(n, r) for n in config.sample_sizes for r in range(config.reps) if (n, r) not in done]
    if done:
        log.info("resuming: %d of %d units already done", len(done), len(done) + len(todo))
    job = _build_job(config)

    since_save = 0
    try:
        if config.workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(job,)) as ex:
                chunk = max(1, len(todo) // (8 * config.workers))
                results = ex.map(_run_unit_in_worker, todo, chunksize=chunk)
                for unit, pv in zip(todo, results):
                    done[unit] = pv
                    since_save += 1
                    if since_save >= CHECKPOINT_EVERY:
                        _save_checkpoint(path, fingerprint, done)
                        since_save = 0
        else:
            for unit in todo:
                done[unit] = _run_unit(job, *unit)
                since_save += 1
                if since_save >= CHECKPOINT_EVERY:
                    _save_checkpoint(path, fingerprint, done)
                    since_save = 0
    except BaseException:
        _save_checkpoint(path, fingerprint, done)
        raise
    _save_checkpoint(path, fingerprint, done)
    return done


def run_study(config: StudyConfig) -> StudyResult:
    start = time.perf_counter()
    done = combined_pvalues(config)
    alpha = config.test.alpha
    rates = np.zeros((len(config.sample_sizes), len(config.np_list)))
    for i, n in enumerate(config.sample_sizes):
        p = np.array([done[(n, r)] for r in range(config.reps)])
        rates[i] = np.count_nonzero(p <= alpha, axis=0) / config.reps
    return StudyResult(
        config.sample_sizes, config.np_list, rates, config.reps,
        wall_time=time.perf_counter() - start,
    )


def run_size_study(config: StudyConfig) -> StudyResult:
    if config.hypothesis != "null":
        raise ValueError("a size study simulates under the null hypothesis")
    return run_study(config)


def run_power_study(config: StudyConfig) -> StudyResult:
    if config.hypothesis != "alternative":
        raise ValueError("a power study simulates under the alternative hypothesis")
    return run_study(config)


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------


def emit_table(result: StudyResult, fmt: str = "csv", stderr: bool = False) -> str:
    """Rows are sample sizes, columns NP values, rates to 3 decimals.

    The CSV carries the repetition count so :func:`parse_table` can restore
    the exact rates (multiples of ``1 / R``).
    """
    rates, se = result.rejection_rate, result.mc_stderr
    cols = [f"NP={k}" for k in result.np_list]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["n", "R"] + cols
        if stderr:
            header += [f"se_NP={k}" for k in result.np_list]
        w.writerow(header)
        for i, n in enumerate(result.sample_sizes):
            row = [n, result.reps] + [f"{x:.3f}" for x in rates[i]]
            if stderr:
                row += [f"{x:.3f}" for x in se[i]]
            w.writerow(row)
        return buf.getvalue()
    if fmt == "markdown":
        header = "| n | " + " | ".join(cols) + " |"
        lines = [header, "|---|" + "---|" * len(cols)]
        for i, n in enumerate(result.sample_sizes):
            cells = [
                f"{rates[i, j]:.3f} ({se[i, j]:.3f})" if stderr else f"{rates[i, j]:.3f}"
                for j in range(len(cols))
            ]
            lines.append(f"| {n} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError("format must be 'csv' or 'markdown'")


def parse_table(text: str) -> StudyResult:
    """Inverse of ``emit_table(..., "csv")``."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    header = rows[0]
    if header[:2] != ["n", "R"]:
        raise ValueError("not a study table")
    rate_cols = [j for j, h in enumerate(header) if h.startswith("NP=")]
    np_list = tuple(int(header[j][3:]) for j in rate_cols)
    sample_sizes = tuple(int(r[0]) for r in rows[1:])
    reps = int(rows[1][1])
    raw = np.array([[float(r[j]) for j in rate_cols] for r in rows[1:]])
    rates = np.round(raw * reps) / reps
    return StudyResult(sample_sizes, np_list, rates, reps)
