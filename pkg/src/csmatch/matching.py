"""Radius matching with fixed, adaptive and k-bounded calipers, plus 1-NN and CEM."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .data import CaliperSpec, Dataset, Norm, Policy, default_caliper, is_binary_column
from .distance import DistanceMatrix, pairwise
from .errors import ConstantNonBinaryColumn, DimensionMismatch, EmptyControlPool, ValidationError


class Method(str, enum.Enum):
    RADIUS = "radius"
    ONE_NN = "1nn"
    CEM = "cem"


@dataclass(frozen=True)
class UnitMatch:
    """Matched set of one treated unit.

    ``controls`` holds dataset row indices sorted by control id; ``distances``
    lines up with it. ``c_t`` is the realized caliper and ``d_t`` the distance
    to the nearest control in the whole pool.
    """

    treated: int
    treated_id: str
    controls: np.ndarray
    control_ids: tuple[str, ...]
    distances: np.ndarray
    c_t: float
    d_t: float
    feasible: bool

    @property
    def size(self) -> int:
        return len(self.controls)

    @property
    def difficulty(self) -> float:
        # Caliper needed to give this unit any match; equals c_t except for
        # infeasible units under a fixed caliper.
        return max(self.c_t, self.d_t)


@dataclass(frozen=True)
class MatchResult:
    """Per treated unit matches, ordered by treated id."""

    units: tuple[UnitMatch, ...]
    method: Method
    spec: CaliperSpec

    def __iter__(self) -> Iterator[UnitMatch]:
        return iter(self.units)

    def __len__(self) -> int:
        return len(self.units)

    def by_id(self) -> dict[str, UnitMatch]:
        return {u.treated_id: u for u in self.units}

    @property
    def feasible_ids(self) -> tuple[str, ...]:
        return tuple(u.treated_id for u in self.units if u.feasible)

    @property
    def matched_ids(self) -> tuple[str, ...]:
        return tuple(u.treated_id for u in self.units if u.size)

    @property
    def all_ids(self) -> tuple[str, ...]:
        return tuple(u.treated_id for u in self.units)

    def rows(self) -> Iterator[tuple]:
        """Long-format rows: treated_id, control_id, distance, c_t, feasible, method.

        A treated unit without matches yields one row with empty control fields.
        """
        for u in self.units:
            if u.size == 0:
                yield (u.treated_id, "", None, u.c_t, u.feasible, self.method.value)
            for cid, dist in zip(u.control_ids, u.distances):
                yield (u.treated_id, cid, float(dist), u.c_t, u.feasible, self.method.value)


def _unit(ds: Dataset, t: int, cols: np.ndarray, dists: np.ndarray, c_t: float, d_t: float,
          feasible: bool) -> UnitMatch:
    ctrl_ids = [ds.ids[j] for j in cols]
    order = sorted(range(len(cols)), key=ctrl_ids.__getitem__)
    cols = np.asarray(cols, dtype=np.intp)[order]
    dists = np.asarray(dists, dtype=float)[order]
    cols.setflags(write=False)
    dists.setflags(write=False)
    return UnitMatch(
        treated=int(t),
        treated_id=ds.ids[t],
        controls=cols,
        control_ids=tuple(ctrl_ids[i] for i in order),
        distances=dists,
        c_t=float(c_t),
        d_t=float(d_t),
        feasible=bool(feasible),
    )


def _check(ds: Dataset, D: DistanceMatrix) -> None:
    if D.d.shape != (ds.n_treated, ds.n_control):
        raise DimensionMismatch("distance matrix does not match the dataset")
    if D.d.shape[1] == 0:
        raise EmptyControlPool("no control units to match against")


def _sorted_units(units: list[UnitMatch]) -> tuple[UnitMatch, ...]:
    return tuple(sorted(units, key=lambda u: u.treated_id))


def radius_match(ds: Dataset, D: DistanceMatrix, spec: CaliperSpec | None = None) -> MatchResult:
    """Match every treated unit to all controls within its caliper (with replacement).

    FIXED uses ``c`` for everyone and leaves units without a control inside it
    unmatched. ADAPTIVE widens to ``c_t = max(c, alpha * d_t)``. K_BOUNDED uses
    ``c_t = max(d_(k_min), min(c, d_(k_max)))`` where ``d_(k)`` is the k-th
    smallest distance. Ties at exactly ``c_t`` are included.
    """
    spec = D.spec if spec is None else spec
    _check(ds, D)
    c = spec.c
    units = []
    for a, t in enumerate(D.treated_index):
        row = D.d[a]
        d_t = float(row.min())
        if spec.policy is Policy.FIXED:
            c_t = c
        elif spec.policy is Policy.ADAPTIVE:
            c_t = max(c, spec.alpha * d_t)
        else:
            ordered = np.sort(row)
            lo = ordered[min(spec.k_min, len(ordered)) - 1]
            hi = ordered[min(spec.k_max, len(ordered)) - 1]
            c_t = float(max(lo, min(c, hi)))
        hit = np.flatnonzero(row <= c_t)
        units.append(_unit(ds, t, D.control_index[hit], row[hit], c_t, d_t, d_t <= c))
    return MatchResult(_sorted_units(units), Method.RADIUS, spec)


def one_nn_match(ds: Dataset, D: DistanceMatrix) -> MatchResult:
    """Nearest control for each treated unit; exact ties are all kept."""
    _check(ds, D)
    units = []
    for a, t in enumerate(D.treated_index):
        row = D.d[a]
        d_t = float(row.min())
        hit = np.flatnonzero(row == d_t)
        units.append(_unit(ds, t, D.control_index[hit], row[hit], d_t, d_t, d_t <= D.spec.c))
    return MatchResult(_sorted_units(units), Method.ONE_NN, D.spec)


def cem_bins(ds: Dataset, bins: int = 5) -> np.ndarray:
    """Stratum code per unit and covariate.

    Continuous covariates are cut into ``bins`` equal-width intervals over
    their observed range, with the top interval closed; binary ones are kept.
    """
    if int(bins) != bins or bins < 1:
        raise ValidationError(f"bins must be a positive integer, got {bins}")
    codes = np.empty(ds.X.shape, dtype=np.int64)
    for k, name in enumerate(ds.column_names):
        col = ds.X[:, k]
        if is_binary_column(col):
            codes[:, k] = col.astype(np.int64)
            continue
        lo, hi = col.min(), col.max()
        if hi <= lo:
            raise ConstantNonBinaryColumn(f"covariate {name!r} is constant and not binary; cannot coarsen")
        edges = np.linspace(lo, hi, bins + 1)
        codes[:, k] = np.digitize(col, edges[1:-1], right=False)
    return codes


def cem_match(ds: Dataset, bins: int = 5) -> MatchResult:
    """Coarsened exact matching: treated units match every control in the same stratum.

    Reported distances are scaled L-infinity distances with one bin width as
    the covariate caliper; ``c_t`` is the largest matched distance.
    """
    codes = cem_bins(ds, bins)
    spec = default_caliper(ds, bins).with_(norm=Norm.LINF)
    strata: dict[tuple, list[int]] = {}
    for j in ds.controls:
        strata.setdefault(tuple(codes[j]), []).append(int(j))
    units = []
    c_idx = ds.controls
    for t in ds.treated:
        members = np.asarray(strata.get(tuple(codes[t]), []), dtype=np.intp)
        all_d = pairwise(ds.X[t][None, :], ds.X[c_idx], spec.pi_array, Norm.LINF)[0]
        d_t = float(all_d.min())
        if members.size:
            dists = pairwise(ds.X[t][None, :], ds.X[members], spec.pi_array, Norm.LINF)[0]
            c_t = float(dists.max())
        else:
            dists = np.empty(0)
            c_t = d_t
        units.append(_unit(ds, t, members, dists, c_t, d_t, members.size > 0))
    return MatchResult(_sorted_units(units), Method.CEM, spec)


def feasible_subsets(mr: MatchResult) -> list[tuple[str, ...]]:
    """Nested treated-id subsets: the feasible set, then one extra unit at a time.

    Infeasible units are added by increasing caliper (ties broken by id). With
    no feasible unit the first subset holds the easiest unit alone.
    """
    feasible = [u.treated_id for u in mr.units if u.feasible]
    rest = sorted((u for u in mr.units if not u.feasible), key=lambda u: (u.difficulty, u.treated_id))
    subsets = []
    current = list(feasible)
    if current:
        subsets.append(tuple(current))
    for u in rest:
        current.append(u.treated_id)
        subsets.append(tuple(current))
    return subsets
