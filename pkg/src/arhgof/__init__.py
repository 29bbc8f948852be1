"""Goodness-of-fit test for the autocorrelation operator of ARH(1) processes.

Marked empirical process of projected residuals, calibrated by a multiplier
bootstrap and combined over random projections with Benjamini-Hochberg.
"""

from .estimate import (
    EigenSystem,
    GammaEstimate,
    eigen_decompose,
    empirical_cov_operator,
    estimate_autocorrelation,
    innovation_cov_h0,
)
from .grid import (
    FunctionalSeries,
    Grid,
    GridFunction,
    KernelMatrix,
    apply_operator,
    inner_product,
    trace_norm,
)
from .meptest import (
    MepPath,
    ProjectedSample,
    TestConfig,
    TestOutcome,
    compute_residual_marks,
    equivalence_gap,
    fast_bootstrap_pvalue,
    fdr_combine,
    mep_path,
    run_gof_test,
    sup_statistic,
    variance_oracle,
)
from .simulate import (
    ARHSpec,
    GaussianSpec,
    RngStream,
    SimulationConfig,
    draw_projection_direction,
    exp_kernel,
    exp_operator,
    sample_gaussian,
    simulate_arh1,
)
from .study import StudyConfig, StudyResult, emit_table, run_power_study, run_size_study

__version__ = "0.1.0"
