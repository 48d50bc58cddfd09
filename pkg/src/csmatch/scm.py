"""Synthetic-control weights within matched sets.

Each treated unit is projected onto the convex hull of its matched controls
in the scaled metric. Under L-infinity that projection is a small LP; under
L2 it is a minimum-norm-point problem solved with Wolfe's fully corrective
Frank-Wolfe method.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import CaliperSpec, Dataset, Norm, ScalingMatrix, scaling_matrix
from .distance import _scaled_norm
from .errors import DimensionMismatch, SolverFailure, ValidationError
from .lp import linprog
from .matching import MatchResult


class Scheme(str, enum.Enum):
    SCM = "scm"
    UNIFORM = "uniform"
    ONE_NN = "1nn"


def _project_simplex_weights(w: np.ndarray) -> np.ndarray:
    w = np.maximum(np.asarray(w, dtype=float), 0.0)
    s = w.sum()
    if not s > 0:
        raise SolverFailure("solver returned all-zero weights")
    return w / s


def _prepare(x_t, Xc, V: ScalingMatrix) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=float)
    Xc = np.atleast_2d(np.asarray(Xc, dtype=float))
    if Xc.shape[0] < 1:
        raise ValidationError("need at least one control")
    if x_t.ndim != 1 or Xc.shape[1] != x_t.shape[0] or V.v_diag.shape[0] != x_t.shape[0]:
        raise DimensionMismatch("x_t, Xc and V have inconsistent dimensions")
    # Controls relative to the treated unit, in scaled units.
    return (Xc - x_t) / V.pi


def imbalance(x_t, Xc, w, V: ScalingMatrix, norm: Norm | str) -> float:
    """Scaled distance from ``x_t`` to the synthetic control ``w @ Xc``."""
    synth = np.asarray(w, dtype=float) @ np.atleast_2d(np.asarray(Xc, dtype=float))
    diff = np.asarray(x_t, dtype=float) - synth
    return float(_scaled_norm(diff[None, :], V.pi, Norm(norm))[0])


def scm_weights_linf(x_t, Xc, V: ScalingMatrix, tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Minimise the scaled L-infinity imbalance over the simplex.

    Solved as ``min y`` subject to ``-y <= [sum_j w_j P_j]_k <= y``,
    ``sum w = 1``, ``w >= 0`` where ``P_j`` are the scaled offsets of the
    controls from the treated unit.
    """
    P = _prepare(x_t, Xc, V)
    m, p = P.shape
    if m == 1:
        w = np.ones(1)
        return w, imbalance(x_t, Xc, w, V, Norm.LINF)
    # variables: w_1..w_m, y
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A_ub = np.zeros((2 * p, m + 1))
    A_ub[:p, :m] = P.T
    A_ub[p:, :m] = -P.T
    A_ub[:, -1] = -1.0
    A_eq = np.zeros((1, m + 1))
    A_eq[0, :m] = 1.0
    res = linprog(c, A_ub, np.zeros(2 * p), A_eq, np.ones(1))
    w = _project_simplex_weights(res.x[:m])
    value = imbalance(x_t, Xc, w, V, Norm.LINF)
    if value > res.fun + max(tol, 1e-9 * (1.0 + np.abs(P).max())):
        raise SolverFailure(f"LP weights give imbalance {value} above optimum {res.fun}")
    return w, value


def _affine_minimizer(Q: np.ndarray) -> np.ndarray:
    """Coefficients summing to one of the point of minimum norm in the affine hull of the rows of Q."""
    k = Q.shape[0]
    if k == 1:
        return np.ones(1)
    G = Q @ Q.T
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    a = sol[:k]
    return a / a.sum()


def scm_weights_l2(x_t, Xc, V: ScalingMatrix, tol: float = 1e-8,
                   max_iter: int = 10_000) -> tuple[np.ndarray, float]:
    """Minimise the scaled L2 imbalance over the simplex.

    Wolfe's minimum-norm-point iteration: a Frank-Wolfe vertex step followed
    by an exact re-optimisation over the active vertices. Stops once the
    Frank-Wolfe duality gap on the squared norm is at most ``tol**2``, or a
    supporting-halfspace lower bound certifies the distance to within ``tol``.
    """
    P = _prepare(x_t, Xc, V)
    m = P.shape[0]
    if m == 1:
        w = np.ones(1)
        return w, imbalance(x_t, Xc, w, V, Norm.L2)
    sq = np.einsum("ij,ij->i", P, P)
    active = [int(np.argmin(sq))]
    lam = np.ones(1)
    for _ in range(max_iter):
        u = lam @ P[active]
        uu = float(u @ u)
        inner = P @ u
        j = int(np.argmin(inner))
        if 2.0 * (uu - float(inner[j])) <= tol * tol:
            break
        # The hull lies in {s : <u, s> >= inner[j]}, which bounds the optimal
        # distance from below; stop once ||u|| is within tol of that bound.
        norm_u = np.sqrt(uu)
        if norm_u - max(0.0, float(inner[j]) / norm_u) <= tol:
            break
        if j in active:
            # u already minimises over the active face up to rounding.
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        theta = 1.0
        # Corrective loop: move toward the affine minimizer, dropping vertices
        # whose weight reaches zero.
        while True:
            alpha = _affine_minimizer(P[active])
            if np.all(alpha > 1e-15):
                lam = alpha
                break
            neg = alpha <= 1e-15
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - alpha), np.inf)
            theta = float(np.clip(ratios.min(), 0.0, 1.0))
            lam = lam + theta * (alpha - lam)
            drop = lam <= 1e-15
            if not drop.any():
                drop[np.argmin(np.where(neg, lam, np.inf))] = True
            active = [a for a, d in zip(active, drop) if not d]
            lam = lam[~drop]
            lam = lam / lam.sum()
        if j not in active and theta == 0.0:
            # The new vertex could not enter: no descent direction left.
            break
    else:
        raise SolverFailure(f"min-norm-point iteration exceeded {max_iter} iterations")
    w = np.zeros(m)
    w[active] = lam
    w = _project_simplex_weights(w)
    return w, imbalance(x_t, Xc, w, V, Norm.L2)


def scm_weights(x_t, Xc, V: ScalingMatrix, norm: Norm | str, tol: float = 1e-8) -> tuple[np.ndarray, float]:
    if Norm(norm) is Norm.LINF:
        return scm_weights_linf(x_t, Xc, V, tol)
    return scm_weights_l2(x_t, Xc, V, tol)


@dataclass(frozen=True)
class UnitWeights:
    treated: int
    treated_id: str
    controls: np.ndarray
    control_ids: tuple[str, ...]
    weights: np.ndarray
    imbalance: float


@dataclass(frozen=True)
class WeightSet:
    """Convex control weights per matched treated unit.

    ``skipped`` lists treated ids that had no matched controls.
    """

    units: tuple[UnitWeights, ...]
    scheme: Scheme
    skipped: tuple[str, ...] = ()

    def by_id(self) -> dict[str, UnitWeights]:
        return {u.treated_id: u for u in self.units}

    def rows(self):
        """Rows of treated_id, control_id, weight, scheme, imbalance."""
        for u in self.units:
            for cid, w in zip(u.control_ids, u.weights):
                yield (u.treated_id, cid, float(w), self.scheme.value, u.imbalance)


def assign_weights(mr: MatchResult, ds: Dataset, spec: CaliperSpec | None = None,
                   scheme: Scheme | str = Scheme.SCM, tol: float = 1e-8) -> WeightSet:
    """Weights over each unit's matched set.

    UNIFORM gives ``1/|C_t|``; ONE_NN splits weight evenly over the controls
    tied at the minimum distance; SCM projects onto the matched controls'
    convex hull.
    """
    spec = mr.spec if spec is None else spec
    scheme = Scheme(scheme)
    if len(mr) == 0:
        raise ValidationError("empty match result")
    V = scaling_matrix(spec)
    units, skipped = [], []
    for u in mr.units:
        if u.size == 0:
            skipped.append(u.treated_id)
            continue
        x_t = ds.X[u.treated]
        Xc = ds.X[u.controls]
        if scheme is Scheme.UNIFORM:
            w = np.full(u.size, 1.0 / u.size)
        elif scheme is Scheme.ONE_NN:
            near = u.distances == u.distances.min()
            w = near / near.sum()
        else:
            w, _ = scm_weights(x_t, Xc, V, spec.norm, tol)
        w.setflags(write=False)
        units.append(UnitWeights(
            treated=u.treated,
            treated_id=u.treated_id,
            controls=u.controls,
            control_ids=u.control_ids,
            weights=w,
            imbalance=imbalance(x_t, Xc, w, V, spec.norm),
        ))
    return WeightSet(tuple(units), scheme, tuple(skipped))
