"""Toy data-generating process and Monte Carlo harness.

The toy design places treated units in two tight clusters on the diagonal
of the unit square and controls in two clusters on the anti-diagonal, plus a
uniform sprinkle of controls that supplies overlap. Outcomes are::

    Y = f0(x) + Z * (3 x1 + 3 x2) + eps,    eps ~ N(0, noise_sd^2)

with ``f0`` the bivariate normal density centred at (0.5, 0.5) with unit
variances and correlation 0.8.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .data import CaliperSpec, Dataset, Norm, Policy, default_caliper
from .distance import distance_matrix
from .errors import LengthMismatch, ValidationError
from .estimator import (
    att_point_estimate,
    bias_term,
    estimate,
)
from .matching import cem_match, one_nn_match, radius_match
from .rng import CounterRNG
from .scm import Scheme, assign_weights

TOTAL_CONTROLS = 550


class Overlap(str, enum.Enum):
    VERY_LOW = "very_low"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    VERY_HIGH = "very_high"


#: Share of the control pool drawn uniformly on the unit square.
OVERLAP_FRACTIONS = {
    Overlap.VERY_LOW: 100 / 550,
    Overlap.LOW: 0.375,
    Overlap.MEDIUM: 0.55,
    Overlap.HIGH: 0.725,
    Overlap.VERY_HIGH: 0.9,
}

TREATED_CENTERS = ((0.25, 0.25), (0.75, 0.75))
CONTROL_CENTERS = ((0.25, 0.75), (0.75, 0.25))

_F0_MEAN = np.array([0.5, 0.5])
_F0_RHO = 0.8
_F0_NORM = 1.0 / (2.0 * math.pi * math.sqrt(1.0 - _F0_RHO ** 2))


def toy_f0(X: np.ndarray) -> np.ndarray:
    """Bivariate normal density at (0.5, 0.5), unit variances, correlation 0.8."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    a = X[:, 0] - _F0_MEAN[0]
    b = X[:, 1] - _F0_MEAN[1]
    q = (a * a - 2.0 * _F0_RHO * a * b + b * b) / (1.0 - _F0_RHO ** 2)
    return _F0_NORM * np.exp(-0.5 * q)


def toy_tau(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return 3.0 * X[:, 0] + 3.0 * X[:, 1]


@dataclass(frozen=True)
class ToyDGPConfig:
    """Toy design sizes and noise.

    With ``overlap_level`` set, the per-center and uniform control counts are
    recomputed from :data:`OVERLAP_FRACTIONS` so the pool keeps 550 controls;
    the first control center takes the extra unit when the clustered count
    is odd.
    """

    n_treated_per_center: int = 50
    n_control_per_center: int = 225
    n_uniform_controls: int = 100
    cluster_sd: float = 0.1
    noise_sd: float = 0.5
    overlap_level: Overlap | None = None
    seed: int = 0

    def __post_init__(self):
        if self.overlap_level is not None:
            object.__setattr__(self, "overlap_level", Overlap(self.overlap_level))
        for name in ("n_treated_per_center", "n_control_per_center", "n_uniform_controls", "seed"):
            if int(getattr(self, name)) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if not self.cluster_sd > 0 or not self.noise_sd >= 0:
            raise ValidationError("cluster_sd must be positive and noise_sd non-negative")
        if self.n_treated_per_center == 0:
            raise ValidationError("need at least one treated unit per center")
        if sum(self.control_counts()) == 0:
            raise ValidationError("need at least one control unit")

    def control_counts(self) -> tuple[int, int, int]:
        """Controls at the first center, the second center and uniform."""
        if self.overlap_level is None:
            return self.n_control_per_center, self.n_control_per_center, self.n_uniform_controls
        n_unif = int(round(OVERLAP_FRACTIONS[self.overlap_level] * TOTAL_CONTROLS))
        rest = TOTAL_CONTROLS - n_unif
        return (rest + 1) // 2, rest // 2, n_unif


def gen_toy_arrays(cfg: ToyDGPConfig, stream: int = 0):
    """Draw ``(X, Z, eps)`` for one toy sample.

    Draw order: treated normals (center by center), clustered control
    normals, uniform controls, then noise for treated and control rows.
    """
    rng = CounterRNG(cfg.seed, stream)
    nt = cfg.n_treated_per_center
    n1, n2, nu = cfg.control_counts()
    blocks = []
    for (cx, cy) in TREATED_CENTERS:
        blocks.append(np.array([cx, cy]) + cfg.cluster_sd * rng.normal(2 * nt).reshape(nt, 2))
    for (cx, cy), k in zip(CONTROL_CENTERS, (n1, n2)):
        blocks.append(np.array([cx, cy]) + cfg.cluster_sd * rng.normal(2 * k).reshape(k, 2))
    blocks.append(rng.uniform(2 * nu).reshape(nu, 2))
    X = np.vstack(blocks)
    n_t = 2 * nt
    Z = np.zeros(X.shape[0], dtype=np.int8)
    Z[:n_t] = 1
    eps = rng.normal(X.shape[0], sd=cfg.noise_sd) if cfg.noise_sd > 0 else np.zeros(X.shape[0])
    return X, Z, eps


def _toy_dataset(X, Z, Y) -> Dataset:
    n_t = int(Z.sum())
    ids = [f"t{i:04d}" for i in range(n_t)] + [f"c{i:04d}" for i in range(len(Z) - n_t)]
    return Dataset(ids=ids, X=X, Z=Z, Y=Y, column_names=("x1", "x2"))


def gen_toy(cfg: ToyDGPConfig, stream: int = 0) -> tuple[Dataset, float]:
    """One toy sample and its true SATT (mean effect over the drawn treated units)."""
    X, Z, eps = gen_toy_arrays(cfg, stream)
    Y = toy_f0(X) + Z * toy_tau(X) + eps
    return _toy_dataset(X, Z, Y), float(toy_tau(X[Z == 1]).mean())


# ---------------------------------------------------------------------------
# Lipschitz surfaces for property tests


@dataclass(frozen=True)
class SyntheticSurface:
    """Response surface with a certified Lipschitz constant under ``(pi, norm)``.

    ``f0(x) = sum_i a_i * d_V(x, anchor_i) + (b / pi) @ x`` and ``tau(x)`` is a
    constant effect. The triangle inequality and Hoelder's inequality give
    ``|f0(x) - f0(y)| <= (sum |a_i| + ||b||_*) d_V(x, y)`` with ``||.||_*`` the
    dual norm (L1 for L-infinity, L2 for L2).
    """

    anchors: np.ndarray
    coefs: np.ndarray
    linear: np.ndarray
    pi: np.ndarray
    norm: Norm = Norm.LINF
    effect: float = 0.0

    def f0(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = (X / self.pi) @ self.linear
        for a, anchor in zip(self.coefs, self.anchors):
            diff = (X - anchor) / self.pi
            if self.norm is Norm.LINF:
                out = out + a * np.abs(diff).max(axis=1)
            else:
                out = out + a * np.sqrt((diff * diff).sum(axis=1))
        return out

    def tau(self, X) -> np.ndarray:
        return np.full(np.atleast_2d(X).shape[0], float(self.effect))

    @property
    def lipschitz_constant(self) -> float:
        dual = np.abs(self.linear).sum() if self.norm is Norm.LINF else math.sqrt(self.linear @ self.linear)
        return float(np.abs(self.coefs).sum() + dual)

    @classmethod
    def random(cls, rng: np.random.Generator, pi, norm: Norm | str = Norm.LINF,
               n_anchors: int = 3) -> "SyntheticSurface":
        pi = np.asarray(pi, dtype=float)
        p = pi.shape[0]
        return cls(
            anchors=rng.uniform(0, 1, size=(n_anchors, p)),
            coefs=rng.normal(size=n_anchors),
            linear=rng.normal(size=p),
            pi=pi,
            norm=Norm(norm),
            effect=float(rng.normal()),
        )


# ---------------------------------------------------------------------------
# Monte Carlo harness


def true_se(tau_hats, biases, true_satts) -> float:
    """Sample SD (ddof 1) of ``tau_hat - bias - tau`` across trials."""
    a, b, c = (np.asarray(v, dtype=float) for v in (tau_hats, biases, true_satts))
    if not (a.shape == b.shape == c.shape) or a.ndim != 1:
        raise LengthMismatch("tau_hats, biases and true_satts must be equal-length vectors")
    if a.shape[0] < 2:
        raise LengthMismatch("need at least two trials")
    return float(np.std(a - b - c, ddof=1))


@dataclass(frozen=True)
class EstimatorSettings:
    """Matching and weighting choices for a coverage study."""

    policy: Policy = Policy.K_BOUNDED
    norm: Norm = Norm.LINF
    c: float = 1.0
    alpha: float = 1.0
    k_min: int = 1
    k_max: int = 5
    bins: int = 5
    scheme: Scheme = Scheme.SCM
    level: float = 0.95

    def caliper(self, ds: Dataset) -> CaliperSpec:
        return default_caliper(ds, self.bins).with_(
            c=self.c, alpha=self.alpha, policy=Policy(self.policy), norm=Norm(self.norm),
            k_min=self.k_min, k_max=self.k_max)


@dataclass(frozen=True)
class TrialResult:
    tau_hat: float
    se_hat: float
    covered: bool
    ess_control: float
    bias: float
    true_satt: float


@dataclass(frozen=True)
class ScenarioSummary:
    scenario: str
    n_trials: int
    ess_control_avg: float
    se_hat_avg: float
    se_true: float
    bias: float
    rmse: float
    coverage: float
    mc_se_bias: float
    mc_se_rmse: float
    mc_se_coverage: float
    n_se_unavailable: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class MonteCarloReport:
    rows: tuple[ScenarioSummary, ...]
    master_seed: int
    settings: EstimatorSettings = field(default_factory=EstimatorSettings)

    def row(self, scenario: str) -> ScenarioSummary:
        for r in self.rows:
            if r.scenario == scenario:
                return r
        raise KeyError(scenario)


def _stream(scenario: int, trial: int) -> int:
    return (scenario << 32) | trial


def coverage_trial(cfg: ToyDGPConfig, settings: EstimatorSettings, stream: int) -> TrialResult:
    ds, satt = gen_toy(cfg, stream)
    spec = settings.caliper(ds)
    mr = radius_match(ds, distance_matrix(ds, spec), spec)
    ws = assign_weights(mr, ds, spec, settings.scheme)
    est = estimate(ds, mr, ws, "all", settings.level)
    used = [u.treated_id for u in ws.units]
    bias = bias_term(ds, ws, toy_f0, used)
    if est.se_hat is None:
        se, covered = math.nan, False
    else:
        se, covered = est.se_hat, bool(est.ci_lo <= satt <= est.ci_hi)
    return TrialResult(est.tau_hat, se, covered, est.ess_control, bias, satt)


def _run_trials(fn, args: list[tuple], workers: int | None):
    if workers is None or workers <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so output does not depend on scheduling
        return list(pool.map(fn, *zip(*args), chunksize=max(1, len(args) // (4 * workers))))


def _rmse_mc_se(err: np.ndarray) -> float:
    n = err.shape[0]
    mse = float(np.mean(err ** 2))
    if mse == 0:
        return 0.0
    return float(np.std(err ** 2, ddof=1) / math.sqrt(n) / (2.0 * math.sqrt(mse)))


def summarize(scenario: str, trials: Sequence[TrialResult]) -> ScenarioSummary:
    n = len(trials)
    tau = np.array([t.tau_hat for t in trials])
    satt = np.array([t.true_satt for t in trials])
    biases = np.array([t.bias for t in trials])
    se = np.array([t.se_hat for t in trials])
    ok = ~np.isnan(se)
    err = tau - satt
    cov = float(np.mean([t.covered for t in trials]))
    return ScenarioSummary(
        scenario=scenario,
        n_trials=n,
        ess_control_avg=float(np.mean([t.ess_control for t in trials])),
        se_hat_avg=float(se[ok].mean()) if ok.any() else math.nan,
        se_true=true_se(tau, biases, satt),
        bias=float(err.mean()),
        rmse=float(math.sqrt(np.mean(err ** 2))),
        coverage=cov,
        mc_se_bias=float(np.std(err, ddof=1) / math.sqrt(n)),
        mc_se_rmse=_rmse_mc_se(err),
        mc_se_coverage=float(math.sqrt(cov * (1.0 - cov) / n)),
        n_se_unavailable=int((~ok).sum()),
    )


def run_coverage_study(levels: Sequence[Overlap | str] = tuple(Overlap), n_trials: int = 500,
                       settings: EstimatorSettings | None = None, master_seed: int = 0,
                       base: ToyDGPConfig | None = None, workers: int | None = None) -> MonteCarloReport:
    """Coverage, bias and SE calibration per overlap level.

    Trial ``r`` of the ``i``-th level in ``Overlap`` order draws from stream
    ``(i << 32) | r`` of ``master_seed``.
    """
    if n_trials < 2:
        raise ValidationError("n_trials must be at least 2")
    settings = settings or EstimatorSettings()
    base = base or ToyDGPConfig()
    order = list(Overlap)
    rows = []
    for level in levels:
        level = Overlap(level)
        cfg = replace(base, overlap_level=level, seed=master_seed)
        idx = order.index(level)
        args = [(cfg, settings, _stream(idx, r)) for r in range(n_trials)]
        rows.append(summarize(level.value, _run_trials(coverage_trial, args, workers)))
    return MonteCarloReport(tuple(rows), master_seed, settings)


class Comparator(str, enum.Enum):
    CSM = "csm"
    UNIFORM = "uniform"
    ONE_NN = "1nn"
    CEM = "cem"
    DIFF_MEANS = "diff_means"


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    n_trials: int
    rmse: float
    abs_bias: float
    mc_se_rmse: float
    mean_n_treated: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _method_estimates(cfg: ToyDGPConfig, methods: tuple[Comparator, ...], settings: EstimatorSettings,
                      stream: int):
    """Error ``tau_hat - SATT`` and treated count per method for one trial.

    Every method is scored against the SATT over all treated units.
    """
    ds, satt = gen_toy(cfg, stream)
    out = {}
    spec = settings.caliper(ds)
    D = None
    for m in methods:
        if m is Comparator.DIFF_MEANS:
            tau = float(ds.Y[ds.treated].mean() - ds.Y[ds.controls].mean())
            out[m] = (tau - satt, ds.n_treated)
            continue
        if m is Comparator.CEM:
            mr = cem_match(ds, settings.bins)
            ws = assign_weights(mr, ds, mr.spec, Scheme.UNIFORM)
        else:
            if D is None:
                D = distance_matrix(ds, spec)
            if m is Comparator.ONE_NN:
                mr = one_nn_match(ds, D)
                ws = assign_weights(mr, ds, spec, Scheme.ONE_NN)
            else:
                mr = radius_match(ds, D, spec)
                scheme = settings.scheme if m is Comparator.CSM else Scheme.UNIFORM
                ws = assign_weights(mr, ds, spec, scheme)
        tau = att_point_estimate(ds, ws)
        out[m] = (tau - satt, len(ws.units))
    return out


def _comparison_trials(cfg, n_trials, methods, settings, master_seed, workers):
    if n_trials < 2:
        raise ValidationError("n_trials must be at least 2")
    cfg = replace(cfg or ToyDGPConfig(), seed=master_seed)
    settings = settings or EstimatorSettings()
    args = [(cfg, methods, settings, _stream(0, r)) for r in range(n_trials)]
    return _run_trials(_method_estimates, args, workers)


def run_method_comparison(cfg: ToyDGPConfig | None = None, n_trials: int = 250,
                          methods: Sequence[Comparator | str] = tuple(Comparator),
                          settings: EstimatorSettings | None = None, master_seed: int = 0,
                          workers: int | None = None) -> tuple[ComparisonRow, ...]:
    """RMSE and absolute bias of each method's SATT estimate across toy trials.

    CSM and UNIFORM share the radius caliper from ``settings`` (the
    k-bounded coverage-study caliper by default) and use SCM and equal
    weights respectively; ONE_NN keeps ties; CEM uses ``settings.bins`` bins
    and drops treated units in control-free strata; DIFF_MEANS is the raw
    outcome mean difference.
    """
    methods = tuple(Comparator(m) for m in methods)
    per_trial = _comparison_trials(cfg, n_trials, methods, settings, master_seed, workers)
    rows = []
    for m in methods:
        err = np.array([t[m][0] for t in per_trial])
        rows.append(ComparisonRow(
            method=m.value,
            n_trials=n_trials,
            rmse=float(math.sqrt(np.mean(err ** 2))),
            abs_bias=float(abs(err.mean())),
            mc_se_rmse=_rmse_mc_se(err),
            mean_n_treated=float(np.mean([t[m][1] for t in per_trial])),
        ))
    return tuple(rows)


def paired_rmse_gap(errors_a, errors_b) -> tuple[float, float]:
    """``RMSE_a - RMSE_b`` and its delta-method Monte Carlo SE from paired errors."""
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape or a.shape[0] < 2:
        raise LengthMismatch("paired error vectors must have equal length >= 2")
    ra, rb = math.sqrt(np.mean(a ** 2)), math.sqrt(np.mean(b ** 2))
    g = a ** 2 / (2 * ra) - b ** 2 / (2 * rb)
    return ra - rb, float(np.std(g, ddof=1) / math.sqrt(a.shape[0]))


def comparison_errors(cfg: ToyDGPConfig | None = None, n_trials: int = 250,
                      methods: Sequence[Comparator | str] = tuple(Comparator),
                      settings: EstimatorSettings | None = None, master_seed: int = 0,
                      workers: int | None = None) -> dict[str, np.ndarray]:
    """Per-trial errors for each method, paired by trial."""
    methods = tuple(Comparator(m) for m in methods)
    per_trial = _comparison_trials(cfg, n_trials, methods, settings, master_seed, workers)
    return {m.value: np.array([t[m][0] for t in per_trial]) for m in methods}
