"""Confidence regions for SGD estimates under heavy-tailed gradient noise.

The central tool is a self-normalized statistic of the averaged iterate
whose critical value is calibrated from short restarted trajectories, so
no tail index or limiting-law parameter needs to be estimated. The package
also ships the known-noise (injected Pareto) region, a random-scaling
baseline, tail diagnostics, and a replication harness with a CLI.
"""

from ._version import __version__
from .rng import RngStream
from .noise import (
    GaussianNoise,
    IsotropicStableNoise,
    ParetoSpec,
    SymmetricParetoNoise,
    VaryingIndexNoise,
    ZeroNoise,
    sample_gaussian,
    sample_isotropic_stable,
    sample_sym_pareto,
    sample_varying_index,
    stable_limit_scale,
    sym_pareto_ppf,
    toeplitz_covariance,
)
from .models import (
    LinearRegressionModel,
    LogisticRegressionModel,
    QuadraticModel,
    mismatched_tails_hessian,
)
from .sgd import (
    DEFAULT_SCHEDULE,
    RunningStats,
    StepSchedule,
    TrajectoryConfig,
    run_trajectory,
    sgd_step,
)
from .inference import (
    BlockSummaries,
    Calibration,
    ConfidenceRegion,
    CoordinateProjection,
    LinearProjection,
    LinfNorm,
    LpNorm,
    SubsampleConfig,
    quantile,
    region_contains,
    run_calibration,
    self_norm_stat,
    subsampling_region,
)
from .oracle_aware import (
    HessianEstimate,
    InjectedNoiseOracle,
    OracleQuantile,
    estimate_hessian,
    oracle_quantile,
    oracle_region,
    scale_comparison,
)
from .baselines import (
    RS_CRITICAL_975,
    RandomScalingState,
    random_scaling_interval,
    random_scaling_update,
    random_scaling_variance,
)
from .diagnostics import (
    HillCurve,
    gradient_norm_summary,
    hill_curve,
    hill_estimate,
    singular_normalizer_demo,
)
from .harness import (
    CoverageReport,
    ExperimentConfig,
    coverage_metrics,
    emit_report,
    parse_report,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
