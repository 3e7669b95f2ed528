"""Experiment orchestration: replications, coverage metrics, report files.

One experiment runs R independent replications of a model. Replication i
draws its own true parameter, runs the main trajectory plus whatever each
requested method needs, and tests whether the true parameter falls inside
each method's region. Aggregates are the average coverage rate, the
average interval length (twice the common half-width), their standard
errors across replications, the coordinatewise coverage MSE against the
nominal level, and the fraction of coordinates whose coverage falls inside
the nominal Monte Carlo band.

Streams: replication i uses stream id i; stream id 0 is reserved for
experiment-level draws (e.g. the shared quantile simulation of the
injected-noise method). Reports are plain CSV with a ``#``-prefixed header
that echoes the statistical configuration, so a rerun with the same seed
produces a byte-identical file.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np
import yaml

from . import engine
from ._version import __version__ as _pkg_version
from .baselines import RS_CRITICAL_975, random_scaling_variance
from .errors import ConfigError, ExperimentError, SgdInferError
from .inference import (
    BlockSummaries,
    LinfNorm,
    SubsampleConfig,
    calibrate,
    coordinate_quantiles,
)
from .models import (
    LinearRegressionModel,
    LogisticRegressionModel,
    QuadraticModel,
    mismatched_tails_hessian,
)
from .noise import (
    GaussianNoise,
    ParetoSpec,
    SymmetricParetoNoise,
    VaryingIndexNoise,
    ZeroNoise,
    stable_limit_scale,
    toeplitz_covariance,
)
from .oracle_aware import (
    InjectedNoiseOracle,
    oracle_coordinate_quantiles,
    oracle_quantile,
)
from .rng import RngStream
from .sgd import StepSchedule

METHOD_ORDER = ("subsampling", "oracle_aware", "random_scaling")

_MODELS = ("linear_regression", "logistic_regression", "quadratic")
_NOISES = ("pareto", "gaussian", "varying", "none")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "linear_regression"
    dim: int = 5
    n: int = 100_000
    replications: int = 200
    delta: float = 0.05
    step_c: float = 0.5
    step_rho: float = 0.6
    subsample_exponents: tuple = (0.7,)
    functional: str = "coordinates"        # "coordinates" | "max"
    methods: tuple = ("subsampling",)
    seed: int = 20240809
    # linear regression / quadratic noise
    covariance: str = "identity"           # "identity" | "toeplitz"
    toeplitz_q: float = 0.3
    noise: str = "pareto"
    noise_alpha: float = 1.5
    noise_lambda: float = 1.0
    noise_variance: float = 1.0
    noise_alpha_lo: float = 1.5
    noise_alpha_hi: float = 1.8
    noise_alphas: tuple = ()               # per-coordinate Pareto indices
    # logistic covariates
    covariate_tails: str = "homogeneous"   # "homogeneous" | "heterogeneous"
    covariate_alpha: float = 1.5
    covariate_lambda: float = 1.0
    # quadratic curvature
    quad_hessian: object = "identity"      # "identity" | "mismatched" | diag tuple
    # injected-noise method
    inject: bool = False
    injected_alpha: float = 1.5
    injected_lambda: float = 1.0
    mc_samples: int = 1_000_000
    # execution
    block_randomness: str = "fresh"
    theta0: float = 0.0
    workers: int = 1
    out: str = ""
    max_failure_fraction: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "subsample_exponents",
                           tuple(float(r) for r in self.subsample_exponents))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "noise_alphas",
                           tuple(float(a) for a in self.noise_alphas))
        if isinstance(self.quad_hessian, (list, tuple)):
            object.__setattr__(self, "quad_hessian",
                               tuple(float(h) for h in self.quad_hessian))
        self.validate()

    def validate(self):
        if self.model not in _MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {_MODELS}")
        if self.dim < 1:
            raise ConfigError("dim must be at least 1")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.replications < 2:
            raise ConfigError("replications must be at least 2")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        for r in self.subsample_exponents:
            if not 0.0 < r < 1.0:
                raise ConfigError(f"subsample exponent {r} must lie in (0, 1)")
        if self.functional not in ("coordinates", "max"):
            raise ConfigError("functional must be 'coordinates' or 'max'")
        unknown = set(self.methods) - set(METHOD_ORDER)
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHOD_ORDER}")
        if self.noise not in _NOISES:
            raise ConfigError(f"unknown noise {self.noise!r}; expected one of {_NOISES}")
        if self.covariance not in ("identity", "toeplitz"):
            raise ConfigError("covariance must be 'identity' or 'toeplitz'")
        if self.covariate_tails not in ("homogeneous", "heterogeneous"):
            raise ConfigError("covariate_tails must be 'homogeneous' or 'heterogeneous'")
        if self.block_randomness not in ("fresh", "shared"):
            raise ConfigError("block_randomness must be 'fresh' or 'shared'")
        if "subsampling" in self.methods and not self.subsample_exponents:
            raise ConfigError("subsampling requires at least one subsample exponent")
        if "oracle_aware" in self.methods:
            if not self.inject:
                raise ConfigError("the oracle_aware method requires inject = true")
            if not 1.0 < self.injected_alpha < 2.0:
                raise ConfigError("injected_alpha must lie in (1, 2)")
        if "random_scaling" in self.methods and self.functional == "max":
            raise ConfigError("random_scaling is coordinatewise; use functional = 'coordinates'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0.0 <= self.max_failure_fraction < 1.0:
            raise ConfigError("max_failure_fraction must lie in [0, 1)")
        StepSchedule(self.step_c, self.step_rho)  # validates positivity/range
        for r in self.subsample_exponents:
            if SubsampleConfig(r).block_length(self.n) > self.n:
                raise ConfigError("block length exceeds n")

    @classmethod
    def from_mapping(cls, mapping) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**mapping)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must contain a flat key-value mapping")
        return cls.from_mapping(data)


def _scalar_noise(cfg: ExperimentConfig):
    if cfg.noise == "pareto":
        return SymmetricParetoNoise.homogeneous(cfg.noise_alpha, cfg.noise_lambda, 1)
    if cfg.noise == "gaussian":
        return GaussianNoise.scalar(cfg.noise_variance)
    if cfg.noise == "varying":
        return VaryingIndexNoise(cfg.noise_alpha_lo, cfg.noise_alpha_hi, cfg.noise_lambda, 1)
    return ZeroNoise(1)


def _vector_noise(cfg: ExperimentConfig, dim):
    if cfg.noise_alphas:
        if len(cfg.noise_alphas) != dim:
            raise ConfigError("noise_alphas length must equal dim")
        specs = tuple(ParetoSpec(a, cfg.noise_lambda) for a in cfg.noise_alphas)
        return SymmetricParetoNoise(specs)
    if cfg.noise == "pareto":
        return SymmetricParetoNoise.homogeneous(cfg.noise_alpha, cfg.noise_lambda, dim)
    if cfg.noise == "gaussian":
        return GaussianNoise.from_matrix(np.eye(dim) * cfg.noise_variance)
    if cfg.noise == "varying":
        return VaryingIndexNoise(cfg.noise_alpha_lo, cfg.noise_alpha_hi,
                                 cfg.noise_lambda, dim)
    return ZeroNoise(dim)


def _quad_hessian(cfg: ExperimentConfig):
    if isinstance(cfg.quad_hessian, tuple):
        if len(cfg.quad_hessian) != cfg.dim:
            raise ConfigError("quad_hessian diagonal length must equal dim")
        return np.diag(np.asarray(cfg.quad_hessian, dtype=float))
    if cfg.quad_hessian == "identity":
        return np.eye(cfg.dim)
    if cfg.quad_hessian == "mismatched":
        if cfg.dim != 2:
            raise ConfigError("the mismatched-tails curvature is 2x2; set dim = 2")
        return mismatched_tails_hessian()
    raise ConfigError(f"unknown quad_hessian {cfg.quad_hessian!r}")


def build_oracle(cfg: ExperimentConfig, gen):
    """Construct the replication's oracle; draws the true parameter from ``gen``."""
    if cfg.model == "linear_regression":
        theta_star = gen.standard_normal(cfg.dim)
        cov = np.eye(cfg.dim) if cfg.covariance == "identity" else \
            toeplitz_covariance(cfg.dim, cfg.toeplitz_q)
        oracle = LinearRegressionModel(theta_star, cov, _scalar_noise(cfg))
    elif cfg.model == "logistic_regression":
        theta_star = gen.standard_normal(cfg.dim)
        if cfg.covariate_tails == "homogeneous":
            oracle = LogisticRegressionModel.homogeneous(
                theta_star, cfg.covariate_alpha, cfg.covariate_lambda)
        else:
            oracle = LogisticRegressionModel.heterogeneous(
                theta_star, cfg.covariate_alpha, gen, cfg.covariate_lambda)
    else:
        oracle = QuadraticModel(_quad_hessian(cfg), _vector_noise(cfg, cfg.dim))
    if cfg.inject:
        oracle = InjectedNoiseOracle(
            oracle, ParetoSpec(cfg.injected_alpha, cfg.injected_lambda))
    return oracle


# ---------------------------------------------------------------------------
# per-replication work


_ORACLE_QUANTILE_CACHE: dict = {}


def _injected_quantiles(cfg: ExperimentConfig, h_matrix: np.ndarray):
    """Coordinatewise quantiles of |(H^-1 L)_j|, memoized on identical inputs.

    For constant-curvature models every replication estimates the same
    Hessian, so the Monte Carlo runs once per experiment.
    """
    key = (h_matrix.tobytes(), h_matrix.shape, cfg.injected_alpha,
           cfg.injected_lambda, cfg.delta, cfg.mc_samples, cfg.seed,
           cfg.functional)
    hit = _ORACLE_QUANTILE_CACHE.get(key)
    if hit is not None:
        return hit
    sigma = stable_limit_scale(ParetoSpec(cfg.injected_alpha, cfg.injected_lambda))
    mc_rng = RngStream(cfg.seed, 0).child(0)
    if cfg.functional == "coordinates":
        q = oracle_coordinate_quantiles(h_matrix, cfg.injected_alpha, sigma,
                                        cfg.delta, cfg.mc_samples, mc_rng)
    else:
        q = np.array([oracle_quantile(h_matrix, cfg.injected_alpha, sigma,
                                      LinfNorm(), cfg.delta, cfg.mc_samples,
                                      mc_rng).q_dagger])
    if len(_ORACLE_QUANTILE_CACHE) > 8:  # bound worker memory
        _ORACLE_QUANTILE_CACHE.clear()
    _ORACLE_QUANTILE_CACHE[key] = q
    return q


def _subsampling_outcome(cfg, theta_bar, trace, theta_star, blocks):
    if cfg.functional == "coordinates":
        q, _ = coordinate_quantiles(blocks, theta_bar, cfg.delta)
        half = q * math.sqrt(trace / cfg.n)
        hits = np.abs(theta_bar - theta_star) <= half
        return hits, float(np.mean(2.0 * half))
    calib = calibrate(blocks, theta_bar, LinfNorm(), cfg.delta)
    half = calib.q_hat * math.sqrt(trace / cfg.n)
    hit = np.max(np.abs(theta_bar - theta_star)) <= half
    return np.array([hit]), 2.0 * half


def run_replication(cfg: ExperimentConfig, index: int) -> dict:
    """All requested methods on one replication; returns per-method outcomes.

    Keys are (method, r-or-None); values are ``{"hits": bool array,
    "length": float}`` or ``{"error": str}`` for per-method failures.
    """
    stream = RngStream(cfg.seed, index)
    oracle = build_oracle(cfg, stream.child(0).generator())
    schedule = StepSchedule(cfg.step_c, cfg.step_rho)
    need_rs = "random_scaling" in cfg.methods
    need_hessian = "oracle_aware" in cfg.methods
    theta_star = oracle.theta_star

    out = {}
    sub_blocks = {}
    if cfg.block_randomness == "fresh":
        raw = engine.run_main(oracle, cfg.n, schedule, stream.child(1).generator(),
                              cfg.theta0, collect_hessian=need_hessian,
                              random_scaling=need_rs)
        if "subsampling" in cfg.methods:
            for j, r in enumerate(cfg.subsample_exponents):
                sub = SubsampleConfig(r)
                t_n = sub.block_length(cfg.n)
                tb, tr = engine.run_blocks(oracle, t_n, sub.n_blocks(cfg.n),
                                           schedule, stream.child(2 + j).generator(),
                                           cfg.theta0)
                sub_blocks[r] = BlockSummaries(tb, tr, t_n)
    else:
        raw = None
        for r in cfg.subsample_exponents:
            sub = SubsampleConfig(r)
            t_n = sub.block_length(cfg.n)
            raw_r, tb, tr = engine.run_interleaved(
                oracle, cfg.n, t_n, schedule, stream.child(1).generator(),
                cfg.theta0, collect_hessian=need_hessian, random_scaling=need_rs)
            sub_blocks[r] = BlockSummaries(tb, tr, t_n)
            if raw is None:
                raw = raw_r  # identical across r: same stream, same steps
        if raw is None:  # no subsampling requested
            raw = engine.run_main(oracle, cfg.n, schedule,
                                  stream.child(1).generator(), cfg.theta0,
                                  collect_hessian=need_hessian,
                                  random_scaling=need_rs)

    theta_bar = raw.theta_sum / (cfg.n + 1)
    trace = raw.gsq_sum / cfg.n

    if "subsampling" in cfg.methods:
        for r in cfg.subsample_exponents:
            try:
                hits, length = _subsampling_outcome(cfg, theta_bar, trace,
                                                    theta_star, sub_blocks[r])
                out[("subsampling", r)] = {"hits": hits, "length": length}
            except SgdInferError as exc:
                out[("subsampling", r)] = {"error": str(exc)}

    if need_rs:
        v_hat = random_scaling_variance(raw.rs_s2, raw.rs_sv, raw.rs_sm,
                                        theta_bar, cfg.n)
        half = RS_CRITICAL_975 * np.sqrt(np.clip(np.diag(v_hat), 0.0, None) / cfg.n)
        hits = np.abs(theta_bar - theta_star) <= half
        out[("random_scaling", None)] = {"hits": hits,
                                         "length": float(np.mean(2.0 * half))}

    if need_hessian:
        try:
            h_hat = raw.hess_sum / cfg.n
            q = _injected_quantiles(cfg, h_hat)
            rate = float(cfg.n) ** (1.0 - 1.0 / cfg.injected_alpha)
            half = q / rate
            if cfg.functional == "coordinates":
                hits = np.abs(theta_bar - theta_star) <= half
            else:
                hits = np.array([np.max(np.abs(theta_bar - theta_star)) <= half[0]])
            out[("oracle_aware", None)] = {"hits": hits,
                                           "length": float(np.mean(2.0 * half))}
        except SgdInferError as exc:
            out[("oracle_aware", None)] = {"error": str(exc)}
    return out


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class MethodResult:
    method: str
    r: float | None
    coverage: float
    avg_length: float
    se_coverage: float
    se_length: float
    coord_coverage: np.ndarray
    mse: float
    band_fraction: float
    failures: int
    replications: int


@dataclass
class CoverageReport:
    config: ExperimentConfig
    nominal: float
    results: tuple

    def row(self, method, r=None) -> MethodResult:
        for res in self.results:
            if res.method == method and (res.r == r or (res.r is None and r is None)):
                return res
        raise KeyError(f"no result row for method={method!r}, r={r!r}")


def coverage_metrics(per_coordinate_hits, nominal=0.95):
    """Mean coverage, coordinatewise MSE against nominal, fraction in band.

    ``per_coordinate_hits`` is an R x d boolean matrix of per-replication,
    per-coordinate region hits. The band is nominal +/- 1.96 *
    sqrt(nominal * (1 - nominal) / R).
    """
    hits = np.asarray(per_coordinate_hits, dtype=float)
    if hits.ndim != 2 or hits.shape[0] < 2:
        raise ValueError("need an R x d hit matrix with R >= 2")
    rates = hits.mean(axis=0)
    half = 1.96 * math.sqrt(nominal * (1.0 - nominal) / hits.shape[0])
    mse = float(np.mean((rates - nominal) ** 2))
    fraction = float(np.mean(np.abs(rates - nominal) <= half))
    return float(hits.mean()), mse, fraction


def _aggregate(cfg: ExperimentConfig, per_rep: list) -> CoverageReport:
    nominal = 1.0 - cfg.delta
    max_failures = math.floor(cfg.max_failure_fraction * cfg.replications)
    rows = []
    keys = []
    for method in METHOD_ORDER:
        if method not in cfg.methods:
            continue
        if method == "subsampling":
            keys.extend(("subsampling", r) for r in cfg.subsample_exponents)
        else:
            keys.append((method, None))
    for method, r in keys:
        hits, lengths, failures = [], [], 0
        for rep in per_rep:
            entry = rep[(method, r)]
            if "error" in entry:
                failures += 1
            else:
                hits.append(entry["hits"])
                lengths.append(entry["length"])
        if failures > max_failures:
            raise ExperimentError(
                f"{failures} of {cfg.replications} replications failed for "
                f"method {method!r} (r={r}); cap is {max_failures}")
        hits = np.asarray(hits, dtype=float)
        lengths = np.asarray(lengths, dtype=float)
        n_ok = hits.shape[0]
        coverage, mse, fraction = coverage_metrics(hits, nominal)
        per_rep_cov = hits.mean(axis=1)
        rows.append(MethodResult(
            method=method,
            r=r,
            coverage=coverage,
            avg_length=float(lengths.mean()),
            se_coverage=float(per_rep_cov.std(ddof=1) / math.sqrt(n_ok)),
            se_length=float(lengths.std(ddof=1) / math.sqrt(n_ok)),
            coord_coverage=hits.mean(axis=0),
            mse=mse,
            band_fraction=fraction,
            failures=failures,
            replications=n_ok,
        ))
    return CoverageReport(cfg, nominal, tuple(rows))


def _rep_worker(args):
    cfg, index = args
    return index, run_replication(cfg, index)


def run_experiment(cfg: ExperimentConfig) -> CoverageReport:
    """Run all replications and aggregate; deterministic given cfg.seed.

    Replication i uses stream id i, so the result set is independent of
    worker count and scheduling order.
    """
    indices = range(1, cfg.replications + 1)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = dict(pool.map(_rep_worker, [(cfg, i) for i in indices],
                                    chunksize=max(1, cfg.replications // (cfg.workers * 4))))
        per_rep = [results[i] for i in indices]
    else:
        per_rep = [run_replication(cfg, i) for i in indices]
    report = _aggregate(cfg, per_rep)
    if cfg.out:
        emit_report(report, cfg.out)
    return report


# ---------------------------------------------------------------------------
# report serialization

REPORT_COLUMNS = ("method", "r", "coverage", "avg_length", "se_coverage",
                  "se_length", "mse", "band_fraction", "failures")

# execution details deliberately left out of the header so reruns of the
# same statistical configuration are byte-identical regardless of where
# they write or how many workers they use
_HEADER_EXCLUDE = ("out", "workers")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def render_report(report: CoverageReport) -> str:
    buf = io.StringIO()
    cfg = report.config
    for f in fields(cfg):
        if f.name in _HEADER_EXCLUDE:
            continue
        buf.write(f"# {f.name} = {getattr(cfg, f.name)}\n")
    buf.write(f"# nominal = {_fmt(report.nominal)}\n")
    buf.write(f"# package_version = {_pkg_version}\n")
    buf.write(f"# numpy_version = {np.__version__}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report.results:
        writer.writerow([
            row.method,
            "" if row.r is None else _fmt(float(row.r)),
            _fmt(row.coverage),
            _fmt(row.avg_length),
            _fmt(row.se_coverage),
            _fmt(row.se_length),
            _fmt(row.mse),
            _fmt(row.band_fraction),
            row.failures,
        ])
    return buf.getvalue()


def emit_report(report: CoverageReport, path) -> None:
    text = render_report(report)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def parse_report(path):
    """Read back a report file; returns (meta dict, list of row dicts)."""
    meta = {}
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read report from {path}: {exc}") from exc
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        else:
            body.append(line)
    reader = csv.DictReader(body)
    for rec in reader:
        row = dict(rec)
        for col in REPORT_COLUMNS[2:-1]:
            row[col] = float(row[col])
        row["failures"] = int(row["failures"])
        row["r"] = float(row["r"]) if row["r"] else None
        rows.append(row)
    return meta, rows


# ---------------------------------------------------------------------------
# CSV helpers for the diagnostics CLI


def write_csv(path, header, rows, meta=()):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for key, value in meta:
                fh.write(f"# {key} = {value}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Full-size protocol: one million steps, five hundred replications."""
    return replace(cfg, n=1_000_000, replications=500)
