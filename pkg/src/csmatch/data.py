"""Datasets, caliper specifications and their file formats."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConstantNonBinaryColumn,
    DuplicateId,
    MissingColumn,
    NoControlUnits,
    NonBinaryTreatment,
    NonFiniteValue,
    NoTreatedUnits,
    ValidationError,
)


class Norm(str, enum.Enum):
    L2 = "l2"
    LINF = "linf"


class Policy(str, enum.Enum):
    FIXED = "fixed"
    ADAPTIVE = "adaptive"
    K_BOUNDED = "kbounded"


@dataclass(frozen=True)
class Dataset:
    """Units with covariates ``X`` (n x p), treatment ``Z`` and outcome ``Y``.

    Row order defines the unit index. Arrays are made read-only on
    construction so a dataset can be shared freely.
    """

    ids: tuple[str, ...]
    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        Z = np.array(self.Z, copy=True)
        Y = np.array(self.Y, dtype=float, copy=True)
        ids = tuple(str(i) for i in self.ids)
        names = tuple(str(c) for c in self.column_names)
        if X.ndim != 2:
            raise ValidationError("X must be a 2-d array")
        n, p = X.shape
        if p < 1:
            raise ValidationError("at least one covariate is required")
        if n < 2:
            raise ValidationError("at least two units are required")
        if Z.shape != (n,) or Y.shape != (n,) or len(ids) != n:
            raise ValidationError("ids, X, Z and Y must have the same number of rows")
        if len(names) != p:
            raise ValidationError("column_names must have one entry per covariate")
        for i, z in enumerate(Z):
            if z not in (0, 1):
                raise NonBinaryTreatment(f"row {i} (id {ids[i]}): treatment value {z!r} is not 0 or 1")
        Z = Z.astype(np.int8)
        bad = np.argwhere(~np.isfinite(X))
        if bad.size:
            i, k = bad[0]
            raise NonFiniteValue(f"row {i} (id {ids[i]}), column {names[k]!r}: non-finite covariate")
        bad = np.flatnonzero(~np.isfinite(Y))
        if bad.size:
            raise NonFiniteValue(f"row {bad[0]} (id {ids[bad[0]]}): non-finite outcome")
        if len(set(ids)) != n:
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise DuplicateId(f"duplicate unit id {dup!r}")
        if not Z.any():
            raise NoTreatedUnits("dataset has no treated units (Z=1)")
        if Z.all():
            raise NoControlUnits("dataset has no control units (Z=0)")
        for a in (X, Z, Y):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def treated(self) -> np.ndarray:
        """Row indices of treated units."""
        return np.flatnonzero(self.Z == 1)

    @property
    def controls(self) -> np.ndarray:
        """Row indices of control units."""
        return np.flatnonzero(self.Z == 0)

    @property
    def n_treated(self) -> int:
        return int(self.Z.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated


@dataclass(frozen=True)
class Schema:
    """Column roles in an input table. ``covariates=None`` means all remaining columns."""

    treatment: str
    outcome: str
    covariates: tuple[str, ...] | None = None
    id: str | None = None


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise NonFiniteValue(f"row {row}, column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise NonFiniteValue(f"row {row}, column {column!r}: non-finite value {text!r}")
    return value


def load_dataset(path: str | Path, schema: Schema) -> Dataset:
    """Read a CSV file with a header row into a validated :class:`Dataset`."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]

    for role, col in (("treatment", schema.treatment), ("outcome", schema.outcome), ("id", schema.id)):
        if col is not None and col not in header:
            raise MissingColumn(f"{role} column {col!r} not found in {path}")
    if schema.covariates is None:
        reserved = {schema.treatment, schema.outcome, schema.id}
        covariates = [h for h in header if h not in reserved]
    else:
        covariates = list(schema.covariates)
        for col in covariates:
            if col not in header:
                raise MissingColumn(f"covariate column {col!r} not found in {path}")
    if not covariates:
        raise MissingColumn("no covariate columns")

    pos = {h: i for i, h in enumerate(header)}
    n = len(rows)
    X = np.empty((n, len(covariates)))
    Y = np.empty(n)
    Z = np.empty(n, dtype=np.int8)
    ids = []
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ValidationError(f"row {i}: expected {len(header)} fields, found {len(r)}")
        ztext = r[pos[schema.treatment]].strip()
        try:
            zval = float(ztext)
        except ValueError:
            zval = math.nan
        if zval not in (0.0, 1.0):
            raise NonBinaryTreatment(f"row {i}, column {schema.treatment!r}: treatment value {ztext!r} is not 0 or 1")
        Z[i] = int(zval)
        Y[i] = _parse_float(r[pos[schema.outcome]].strip(), i, schema.outcome)
        for k, col in enumerate(covariates):
            X[i, k] = _parse_float(r[pos[col]].strip(), i, col)
        ids.append(r[pos[schema.id]].strip() if schema.id else str(i))
    return Dataset(ids=tuple(ids), X=X, Z=Z, Y=Y, column_names=tuple(covariates))


def save_dataset(ds: Dataset, path: str | Path, *, treatment: str = "z", outcome: str = "y", id: str = "id") -> None:
    """Write ``ds`` as CSV; floats use shortest round-trip repr so a reload is bit-exact."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id, treatment, outcome, *ds.column_names])
        for i in range(ds.n):
            w.writerow([ds.ids[i], int(ds.Z[i]), repr(float(ds.Y[i])), *(repr(float(v)) for v in ds.X[i])])


@dataclass(frozen=True)
class CaliperSpec:
    """Covariate-wise calipers ``pi``, global caliper ``c`` and adaptivity policy.

    ``pi`` induces the diagonal scaling V = diag(1/pi).
    """

    pi: tuple[float, ...]
    c: float = 1.0
    alpha: float = 1.0
    policy: Policy = Policy.FIXED
    norm: Norm = Norm.LINF
    k_min: int = 1
    k_max: int = 5
    column_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        pi = tuple(float(v) for v in np.atleast_1d(self.pi))
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "policy", Policy(self.policy))
        object.__setattr__(self, "norm", Norm(self.norm))
        if not pi:
            raise ValidationError("pi must have at least one entry")
        if not all(math.isfinite(v) and v > 0 for v in pi):
            raise ValidationError(f"covariate calipers must be strictly positive, got {pi}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValidationError(f"global caliper c must be positive, got {self.c}")
        if not (math.isfinite(self.alpha) and self.alpha >= 1):
            raise ValidationError(f"alpha must be >= 1, got {self.alpha}")
        if int(self.k_min) != self.k_min or int(self.k_max) != self.k_max or not 1 <= self.k_min <= self.k_max:
            raise ValidationError(f"need integers 1 <= k_min <= k_max, got {self.k_min}, {self.k_max}")
        if self.column_names is not None and len(self.column_names) != len(pi):
            raise ValidationError("column_names must match pi")

    @property
    def p(self) -> int:
        return len(self.pi)

    @property
    def pi_array(self) -> np.ndarray:
        return np.asarray(self.pi, dtype=float)

    def with_(self, **changes) -> "CaliperSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class ScalingMatrix:
    """Diagonal of V; ``v_diag[k] = 1 / pi[k]``.

    Built with :meth:`from_pi`, the exact ``pi`` is kept so distances computed
    through V agree bit-for-bit with those computed from the caliper spec.
    """

    v_diag: np.ndarray
    _pi: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.v_diag, dtype=float)
        if v.ndim != 1 or not np.all(v > 0) or not np.all(np.isfinite(v)):
            raise ValidationError("scaling entries must be finite and strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "v_diag", v)
        pi = 1.0 / v if self._pi is None else np.array(self._pi, dtype=float)
        pi.setflags(write=False)
        object.__setattr__(self, "_pi", pi)

    @classmethod
    def from_pi(cls, pi: Sequence[float]) -> "ScalingMatrix":
        pi = np.asarray(pi, dtype=float)
        return cls(1.0 / pi, pi)

    @property
    def pi(self) -> np.ndarray:
        return self._pi


def scaling_matrix(spec: CaliperSpec) -> ScalingMatrix:
    return ScalingMatrix.from_pi(spec.pi)


def is_binary_column(values: np.ndarray) -> bool:
    return bool(np.all((values == 0) | (values == 1)))


def default_caliper(ds: Dataset, bins: int = 5, binary_pi: float = 1e-3) -> CaliperSpec:
    """Calipers from coarsening each covariate into ``bins`` equal-width bins.

    Continuous covariate k gets ``pi_k = range_k / bins``; a covariate with
    values in {0, 1} gets ``binary_pi`` so it is matched exactly.
    """
    if int(bins) != bins or bins < 1:
        raise ValidationError(f"bins must be a positive integer, got {bins}")
    if not binary_pi > 0:
        raise ValidationError(f"binary_pi must be positive, got {binary_pi}")
    pi = []
    for k, name in enumerate(ds.column_names):
        col = ds.X[:, k]
        if is_binary_column(col):
            pi.append(float(binary_pi))
            continue
        width = float(col.max() - col.min())
        if width <= 0:
            raise ConstantNonBinaryColumn(f"covariate {name!r} is constant and not binary; no caliper can be derived")
        pi.append(width / bins)
    return CaliperSpec(pi=tuple(pi), c=1.0, alpha=1.0, policy=Policy.FIXED, norm=Norm.LINF,
                       column_names=ds.column_names)


# -- flat key-value caliper config -------------------------------------------

def write_caliper_config(spec: CaliperSpec, path: str | Path) -> None:
    names = spec.column_names or tuple(f"x{k}" for k in range(spec.p))
    lines = [f"pi.{name} = {v!r}" for name, v in zip(names, spec.pi)]
    lines += [
        f"c = {float(spec.c)!r}",
        f"alpha = {float(spec.alpha)!r}",
        f"policy = {spec.policy.value}",
        f"norm = {spec.norm.value}",
        f"kmin = {spec.k_min}",
        f"kmax = {spec.k_max}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_caliper_config(path: str | Path, column_names: Sequence[str] | None = None) -> CaliperSpec:
    """Parse a caliper config. With ``column_names``, pi entries are reordered to match."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"caliper config not found: {path}")
    pis: dict[str, float] = {}
    opts: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("pi."):
            try:
                pis[key[3:]] = float(value)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad caliper value {value!r}") from None
        else:
            opts[key] = value
    unknown = set(opts) - {"c", "alpha", "policy", "norm", "kmin", "kmax"}
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")
    if column_names is None:
        names = tuple(pis)
    else:
        names = tuple(column_names)
        missing = [n for n in names if n not in pis]
        if missing:
            raise MissingColumn(f"{path}: no caliper for covariates {missing}")
    try:
        return CaliperSpec(
            pi=tuple(pis[n] for n in names),
            c=float(opts.get("c", 1.0)),
            alpha=float(opts.get("alpha", 1.0)),
            policy=Policy(opts.get("policy", "fixed").lower()),
            norm=Norm(opts.get("norm", "linf").lower()),
            k_min=int(opts.get("kmin", 1)),
            k_max=int(opts.get("kmax", 5)),
            column_names=names,
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: {exc}") from None
