"""Scaled L2 / L-infinity distances and the treated x control distance matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CaliperSpec, Dataset, Norm, ScalingMatrix
from .errors import DimensionMismatch

# Treated rows per block in distance_matrix; bounds the (rows, n_C, p) temporary.
_BLOCK = 256


def _scaled_norm(diff: np.ndarray, pi: np.ndarray, norm: Norm) -> np.ndarray:
    """Norm over the last axis of ``diff / pi``.

    Covariates are accumulated one at a time in index order, so a single pair
    and a full matrix produce bit-identical values.
    """
    if norm is Norm.LINF:
        out = np.abs(diff[..., 0] / pi[0])
        for k in range(1, diff.shape[-1]):
            np.maximum(out, np.abs(diff[..., k] / pi[k]), out=out)
        return out
    acc = np.square(diff[..., 0] / pi[0])
    for k in range(1, diff.shape[-1]):
        acc += np.square(diff[..., k] / pi[k])
    return np.sqrt(acc)


def scaled_distance(x, y, V: ScalingMatrix, norm: Norm | str) -> float:
    """Distance between two covariate vectors under the scaling ``V``.

    L2 gives ``sqrt(sum(((x - y) / pi)**2))`` and LINF gives ``max(|x - y| / pi)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.shape[0] != V.v_diag.shape[0]:
        raise DimensionMismatch(f"shapes {x.shape}, {y.shape} and scaling of length {V.v_diag.shape[0]}")
    return float(_scaled_norm((x - y)[None, :], V.pi, Norm(norm))[0])


def pairwise(A: np.ndarray, B: np.ndarray, pi, norm: Norm | str) -> np.ndarray:
    """All distances between rows of ``A`` and rows of ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    pi = np.asarray(pi, dtype=float)
    if A.shape[1] != B.shape[1] or A.shape[1] != pi.shape[0]:
        raise DimensionMismatch(f"column counts {A.shape[1]}, {B.shape[1]} and {pi.shape[0]} calipers")
    norm = Norm(norm)
    out = np.empty((A.shape[0], B.shape[0]))
    for start in range(0, A.shape[0], _BLOCK):
        stop = start + _BLOCK
        out[start:stop] = _scaled_norm(A[start:stop, None, :] - B[None, :, :], pi, norm)
    return out


@dataclass(frozen=True)
class DistanceMatrix:
    """``d[a, b]`` is the distance from the a-th treated to the b-th control unit.

    ``treated_index`` / ``control_index`` are dataset row indices in the order
    of the matrix rows and columns.
    """

    d: np.ndarray
    treated_ids: tuple[str, ...]
    control_ids: tuple[str, ...]
    treated_index: np.ndarray
    control_index: np.ndarray
    spec: CaliperSpec


def distance_matrix(ds: Dataset, spec: CaliperSpec) -> DistanceMatrix:
    if spec.p != ds.p:
        raise DimensionMismatch(f"caliper has {spec.p} entries but dataset has {ds.p} covariates")
    t_idx, c_idx = ds.treated, ds.controls
    d = pairwise(ds.X[t_idx], ds.X[c_idx], spec.pi_array, spec.norm)
    d.setflags(write=False)
    return DistanceMatrix(
        d=d,
        treated_ids=tuple(ds.ids[i] for i in t_idx),
        control_ids=tuple(ds.ids[i] for i in c_idx),
        treated_index=t_idx,
        control_index=c_idx,
        spec=spec,
    )
