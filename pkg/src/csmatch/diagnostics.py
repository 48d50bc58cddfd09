"""Balance tables, nested-subset series, distance histograms and a transport oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .data import CaliperSpec, Dataset, Norm, ScalingMatrix, scaling_matrix
from .distance import DistanceMatrix, pairwise, scaled_distance
from .errors import EmptySubset, InsufficientControls, SizeLimitExceeded, ValidationError
from .estimator import EffectEstimate, estimate
from .lp import linprog
from .matching import MatchResult, feasible_subsets
from .scm import WeightSet

MAX_TRANSPORT_POINTS = 64


@dataclass(frozen=True)
class BalanceReport:
    """Weighted marginal means of treated units and their synthetic controls.

    ``bound[k] = c * pi_k``; ``joint`` is the scaled distance between the two
    mean vectors and ``joint_bound`` is ``c``.
    """

    columns: tuple[str, ...]
    treated_mean: np.ndarray
    control_mean: np.ndarray
    abs_diff: np.ndarray
    bound: np.ndarray
    within_bound: np.ndarray
    joint: float
    joint_bound: float
    n_treated: int

    def rows(self):
        for k, name in enumerate(self.columns):
            yield (name, float(self.treated_mean[k]), float(self.control_mean[k]),
                   float(self.abs_diff[k]), float(self.bound[k]), bool(self.within_bound[k]))


def _subset_units(ws: WeightSet, subset: Iterable[str] | None):
    if subset is None:
        units = list(ws.units)
    else:
        by_id = ws.by_id()
        ids = list(dict.fromkeys(subset))
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise ValidationError(f"treated units without weights: {missing}")
        units = [by_id[i] for i in sorted(ids)]
    if not units:
        raise EmptySubset("balance needs at least one treated unit")
    return units


def balance_report(ds: Dataset, ws: WeightSet, subset: Iterable[str] | None = None,
                   spec: CaliperSpec | None = None) -> BalanceReport:
    """Marginal and joint balance of ``subset`` against its synthetic controls."""
    if spec is None:
        raise ValidationError("balance_report needs the caliper spec")
    units = _subset_units(ws, subset)
    n = len(units)
    xt = np.zeros(ds.p)
    xc = np.zeros(ds.p)
    for u in units:
        xt += ds.X[u.treated]
        xc += u.weights @ ds.X[u.controls]
    xt /= n
    xc /= n
    diff = np.abs(xt - xc)
    bound = spec.c * spec.pi_array
    V = scaling_matrix(spec)
    return BalanceReport(
        columns=tuple(ds.column_names),
        treated_mean=xt,
        control_mean=xc,
        abs_diff=diff,
        bound=bound,
        within_bound=diff <= bound,
        joint=scaled_distance(xt, xc, V, spec.norm),
        joint_bound=float(spec.c),
        n_treated=n,
    )


def _matched_subsets(mr: MatchResult, ws: WeightSet) -> list[tuple[str, ...]]:
    have = ws.by_id()
    out = []
    for s in feasible_subsets(mr):
        kept = tuple(i for i in s if i in have)
        if kept and (not out or kept != out[-1]):
            out.append(kept)
    return out


def love_plot_series(ds: Dataset, mr: MatchResult, ws: WeightSet,
                     spec: CaliperSpec | None = None) -> list[tuple[int, BalanceReport]]:
    """Balance for the feasible set, then adding infeasible units by caliper size.

    Returns ``(step, report)`` pairs; step 0 is the first subset.
    """
    spec = mr.spec if spec is None else spec
    return [(i, balance_report(ds, ws, s, spec)) for i, s in enumerate(_matched_subsets(mr, ws))]


def love_plot_rows(series):
    """Long-format rows: step, n_treated, covariate, treated_mean, control_mean, abs_diff, bound, within_bound."""
    for step, rep in series:
        for row in rep.rows():
            yield (step, rep.n_treated) + row


@dataclass(frozen=True)
class FrontierPoint:
    step: int
    max_caliper: float
    added_id: str | None
    estimate: EffectEstimate


def frontier_series(ds: Dataset, mr: MatchResult, ws: WeightSet, spec: CaliperSpec | None = None,
                    level: float = 0.95) -> list[FrontierPoint]:
    """Effect estimates over the nested subsets used by :func:`love_plot_series`."""
    by_id = mr.by_id()
    points = []
    prev: set[str] = set()
    for step, s in enumerate(_matched_subsets(mr, ws)):
        est = estimate(ds, mr, ws, list(s), level)
        added = [i for i in s if i not in prev]
        points.append(FrontierPoint(
            step=step,
            max_caliper=max(by_id[i].difficulty for i in s),
            added_id=added[-1] if step > 0 and added else None,
            estimate=est,
        ))
        prev = set(s)
    return points


@dataclass(frozen=True)
class RankHistogram:
    rank: int
    edges: np.ndarray
    counts: np.ndarray
    quantiles: dict[int, float]
    values: np.ndarray


def topk_distance_histogram(D: DistanceMatrix, k: int, n_bins: int = 30) -> list[RankHistogram]:
    """Histograms of each treated unit's r-th smallest control distance, r = 1..k.

    All ranks share ``n_bins`` equal-width bins over the pooled range of the
    collected distances; a degenerate range uses ``[v - 0.5, v + 0.5]``.
    Quantiles at 25, 50, 75 and 90 percent use linear interpolation.
    """
    if int(k) != k or k < 1 or int(n_bins) != n_bins or n_bins < 1:
        raise ValidationError("k and n_bins must be positive integers")
    n_t, n_c = D.d.shape
    if n_t == 0:
        raise ValidationError("no treated units")
    if n_c < k:
        raise InsufficientControls(f"need at least {k} controls per treated unit, have {n_c}")
    ordered = np.sort(D.d, axis=1)[:, :k]
    lo, hi = float(ordered.min()), float(ordered.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, n_bins + 1)
    out = []
    for r in range(k):
        vals = ordered[:, r]
        counts, _ = np.histogram(vals, bins=edges)
        qs = {q: float(np.percentile(vals, q)) for q in (25, 50, 75, 90)}
        out.append(RankHistogram(r + 1, edges, counts, qs, vals))
    return out


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finite weighted point cloud with masses summing to one."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        m = np.asarray(self.masses, dtype=float).ravel()
        if pts.shape[0] != m.shape[0]:
            raise ValidationError("points and masses differ in length")
        if m.shape[0] == 0:
            raise ValidationError("empty measure")
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
            raise ValidationError("masses must be non-negative and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", m)

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))


def matched_measures(ds: Dataset, ws: WeightSet, subset: Iterable[str] | None = None
                     ) -> tuple[EmpiricalMeasure, EmpiricalMeasure]:
    """Treated measure (uniform) and weighted control measure for ``subset``.

    Control mass ``(1/n) sum_t w_jt`` is pooled per distinct control row.
    """
    units = _subset_units(ws, subset)
    n = len(units)
    totals: dict[int, float] = {}
    for u in units:
        for j, w in zip(u.controls, u.weights):
            totals[int(j)] = totals.get(int(j), 0.0) + w / n
    rows = sorted(totals)
    masses = np.array([totals[j] for j in rows])
    fT = EmpiricalMeasure.uniform(ds.X[[u.treated for u in units]])
    fC = EmpiricalMeasure(ds.X[rows], masses / masses.sum())
    return fT, fC


def wasserstein_exact(fT: EmpiricalMeasure, fC: EmpiricalMeasure, V: ScalingMatrix,
                      norm: Norm | str = Norm.LINF, q: float = 1) -> float:
    """Exact order-``q`` transport distance under the scaled metric, via the dense LP."""
    a, b = fT.masses, fC.masses
    n, m = a.shape[0], b.shape[0]
    if n > MAX_TRANSPORT_POINTS or m > MAX_TRANSPORT_POINTS:
        raise SizeLimitExceeded(f"transport oracle limited to {MAX_TRANSPORT_POINTS} points per side")
    if not q >= 1:
        raise ValidationError("q must be at least 1")
    if fT.points.shape[1] != fC.points.shape[1]:
        raise ValidationError("measures live in different dimensions")
    cost = pairwise(fT.points, fC.points, V.pi, Norm(norm)) ** q
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]))
    return float(max(res.fun, 0.0) ** (1.0 / q))


def coupling_cost(ds: Dataset, ws: WeightSet, spec: CaliperSpec, subset: Iterable[str] | None = None,
                  q: float = 1) -> float:
    """Transport cost of pairing each treated unit with its own weighted controls.

    The plan moves mass ``w_jt / n`` from treated ``t`` to control ``j``; its
    cost upper-bounds the optimal transport distance between the two measures.
    """
    units = _subset_units(ws, subset)
    n = len(units)
    total = 0.0
    for u in units:
        d = pairwise(ds.X[u.treated][None, :], ds.X[u.controls], spec.pi_array, spec.norm)[0]
        total += float(u.weights @ d ** q) / n
    return total ** (1.0 / q)
