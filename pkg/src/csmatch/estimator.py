"""Point estimates, effective sample sizes and plug-in standard errors."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Callable, Iterable

import numpy as np

from .data import Dataset
from .errors import AllZeroWeights, EmptySubset, NoMultiUnitClusters, ValidationError
from .matching import MatchResult
from .scm import WeightSet


class Estimand(str, enum.Enum):
    SATT = "SATT"
    FSATT = "FSATT"
    SUBSET = "SUBSET"


@dataclass(frozen=True)
class EffectEstimate:
    """Effect estimate for a set of treated units.

    ``se_hat``, ``ci_lo``, ``ci_hi`` and ``s2`` are None when no matched
    cluster has two or more controls.
    """

    tau_hat: float
    se_hat: float | None
    ci_lo: float | None
    ci_hi: float | None
    s2: float | None
    ess_control: float
    ess_treated: float
    n_treated_used: int
    n_clusters_used: int
    estimand: Estimand
    level: float
    excluded: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["estimand"] = self.estimand.value
        d["excluded"] = list(self.excluded)
        return d


def _units(ws: WeightSet, subset: Iterable[str] | None):
    by_id = ws.by_id()
    if subset is None:
        return list(ws.units)
    ids = list(dict.fromkeys(subset))
    if not ids:
        raise EmptySubset("subset of treated units is empty")
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ValidationError(f"treated units without weights: {missing}")
    return sorted((by_id[i] for i in ids), key=lambda u: u.treated_id)


def unit_effects(ds: Dataset, ws: WeightSet, subset: Iterable[str] | None = None) -> np.ndarray:
    """``Y_t - sum_j w_jt Y_j`` per treated unit, ordered by treated id."""
    units = _units(ws, subset)
    return np.array([ds.Y[u.treated] - u.weights @ ds.Y[u.controls] for u in units])


def att_point_estimate(ds: Dataset, ws: WeightSet, subset: Iterable[str] | None = None) -> float:
    """Average over ``subset`` of the treated outcome minus its weighted control outcome."""
    gaps = unit_effects(ds, ws, subset)
    if gaps.size == 0:
        raise EmptySubset("no treated units to average over")
    return float(gaps.mean())


def ess(weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValidationError("weights must be non-negative")
    total = w.sum()
    if not total > 0:
        raise AllZeroWeights("effective sample size needs a positive weight")
    return float(total * total / np.dot(w, w))


def control_totals(ds: Dataset, ws: WeightSet, subset: Iterable[str] | None = None) -> np.ndarray:
    """Total weight ``sum_t w_jt`` per dataset row (zero for unused rows)."""
    totals = np.zeros(ds.n)
    for u in _units(ws, subset):
        np.add.at(totals, u.controls, u.weights)
    return totals


def ess_control(ds: Dataset, ws: WeightSet, subset: Iterable[str] | None = None) -> float:
    totals = control_totals(ds, ws, subset)
    return ess(totals[totals > 0])


def pooled_residual_variance(ds: Dataset, mr: MatchResult,
                             subset: Iterable[str] | None = None) -> tuple[float, int, int]:
    """Pooled within-cluster outcome variance over matched sets with >= 2 controls.

    Returns ``(S2, n_clusters, N_C)`` where ``N_C`` sums the retained cluster
    sizes. Clusters are weighted uniformly, whatever the final weights are.
    """
    units = mr.units
    if subset is not None:
        keep = set(subset)
        units = [u for u in units if u.treated_id in keep]
    num = 0.0
    n_clusters = 0
    n_controls = 0
    for u in units:
        size = u.size
        if size < 2:
            continue
        y = ds.Y[u.controls]
        resid = y - y.mean()
        s2_t = float(resid @ resid) / (size - 1)
        num += size * s2_t
        n_clusters += 1
        n_controls += size
    if n_clusters == 0:
        raise NoMultiUnitClusters("no matched set has two or more controls; standard error unavailable")
    return num / n_controls, n_clusters, n_controls


def plug_in_se(s2: float, n_treated: float, ess_c: float) -> float:
    """``sqrt(S2 * (1/n_T + 1/ESS_C))``."""
    if s2 < 0 or n_treated <= 0 or ess_c <= 0:
        raise ValidationError("plug-in SE needs s2 >= 0 and positive sample sizes")
    return math.sqrt(s2 * (1.0 / n_treated + 1.0 / ess_c))


def critical_value(level: float) -> float:
    if not 0 < level < 1:
        raise ValidationError(f"confidence level must be in (0, 1), got {level}")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def resolve_subset(mr: MatchResult, ws: WeightSet, subset) -> tuple[list[str], tuple[str, ...], Estimand]:
    """Turn ``'feasible'``, ``'all'``, ``None`` or explicit ids into usable ids.

    Units without matched controls are dropped and reported as excluded.
    """
    if subset is None or subset == "all":
        requested = list(mr.all_ids)
    elif subset == "feasible":
        requested = list(mr.feasible_ids)
    elif isinstance(subset, str):
        raise ValidationError(f"unknown subset {subset!r}")
    else:
        requested = list(dict.fromkeys(subset))
    have = ws.by_id()
    used = [i for i in requested if i in have]
    excluded = tuple(i for i in requested if i not in have)
    if not used:
        raise EmptySubset("no treated units with matched controls in the requested subset")
    used_set = set(used)
    is_all = used_set == set(mr.all_ids)
    is_feasible = used_set == set(mr.feasible_ids)
    if is_all and (subset is None or subset == "all" or not is_feasible):
        label = Estimand.SATT
    elif is_feasible:
        label = Estimand.FSATT
    else:
        label = Estimand.SUBSET
    return sorted(used), excluded, label


def estimate(ds: Dataset, mr: MatchResult, ws: WeightSet, subset="all", level: float = 0.95) -> EffectEstimate:
    """Point estimate, plug-in SE and normal confidence interval for ``subset``."""
    used, excluded, label = resolve_subset(mr, ws, subset)
    tau = att_point_estimate(ds, ws, used)
    ess_c = ess_control(ds, ws, used)
    n_t = len(used)
    z = critical_value(level)
    try:
        s2, n_clusters, _ = pooled_residual_variance(ds, mr, used)
    except NoMultiUnitClusters:
        s2, n_clusters, se = None, 0, None
        lo = hi = None
    else:
        se = plug_in_se(s2, n_t, ess_c)
        lo, hi = tau - z * se, tau + z * se
    return EffectEstimate(
        tau_hat=tau,
        se_hat=se,
        ci_lo=lo,
        ci_hi=hi,
        s2=s2,
        ess_control=ess_c,
        ess_treated=float(n_t),
        n_treated_used=n_t,
        n_clusters_used=n_clusters,
        estimand=label,
        level=level,
        excluded=excluded,
    )


def bias_term(ds: Dataset, ws: WeightSet, f0: Callable[[np.ndarray], np.ndarray],
              subset: Iterable[str] | None = None) -> float:
    """Matching bias ``mean_t sum_j w_jt (f0(X_t) - f0(X_j))`` for a known response surface."""
    units = _units(ws, subset)
    f = np.asarray(f0(ds.X), dtype=float)
    return float(np.mean([u.weights @ (f[u.treated] - f[u.controls]) for u in units]))


def error_term(ds: Dataset, ws: WeightSet, eps, subset: Iterable[str] | None = None) -> float:
    """Noise part ``mean_t (eps_t - sum_j w_jt eps_j)``."""
    units = _units(ws, subset)
    eps = np.asarray(eps, dtype=float)
    return float(np.mean([eps[u.treated] - u.weights @ eps[u.controls] for u in units]))
