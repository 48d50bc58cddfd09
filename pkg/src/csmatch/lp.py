"""Dense two-phase tableau simplex for small linear programs.

Solves::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                x >= 0

Pivoting follows Bland's rule (lowest-index entering column, lowest-index
leaving basic variable on ratio ties), which rules out cycling on the
heavily degenerate problems produced by simplex-weight and transport LPs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverFailure


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    nit: int


def _pivot(T: np.ndarray, r: int, s: int) -> None:
    T[r] /= T[r, s]
    col = T[:, s].copy()
    col[r] = 0.0
    nz = np.flatnonzero(col)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _run(T: np.ndarray, basis: np.ndarray, n_cols: int, tol: float, max_iter: int, nit: int,
         floor: float | None = None) -> int:
    """Iterate until optimal. The last row of ``T`` holds reduced costs and
    only the first ``n_cols`` columns may enter. With ``floor`` set, stop as
    soon as the objective is within ``floor`` of zero (phase 1)."""
    m = T.shape[0] - 1
    while True:
        if floor is not None and -T[m, -1] <= floor:
            return nit
        red = T[m, :n_cols]
        cand = np.flatnonzero(red < -tol)
        if cand.size == 0:
            return nit
        if nit >= max_iter:
            raise SolverFailure(f"simplex did not converge within {max_iter} pivots")
        s = int(cand[0])
        col = T[:m, s]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            raise SolverFailure("linear program is unbounded")
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        # ratio ties within rounding noise go to the lowest basic index
        tied = rows[ratios <= best + tol * max(1.0, abs(best))]
        r = int(tied[np.argmin(basis[tied])])
        _pivot(T, r, s)
        basis[r] = s
        nit += 1


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, *, tol: float = 1e-10,
            max_iter: int = 50_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # Equality form with one slack per inequality, then flip rows to b >= 0.
    A = np.zeros((m, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # Rows whose slack is still +1 start with the slack basic; the rest need
    # an artificial variable.
    basis = np.empty(m, dtype=np.intp)
    need = []
    for i in range(m):
        if i < m_ub and not neg[i]:
            basis[i] = n + i
        else:
            need.append(i)
    n_real = n + m_ub
    n_art = len(need)
    T = np.zeros((m + 1, n_real + n_art + 1))
    T[:m, :n_real] = A
    T[:m, -1] = b
    for a, i in enumerate(need):
        T[i, n_real + a] = 1.0
        basis[i] = n_real + a

    nit = 0
    if n_art:
        # Phase 1: minimise the sum of artificials.
        T[m, n_real:n_real + n_art] = 1.0
        for i in need:
            T[m] -= T[i]
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        nit = _run(T, basis, n_real + n_art, tol, max_iter, nit, floor=1e-12 * scale)
        if -T[m, -1] > 1e-9 * scale:
            raise SolverFailure(f"linear program is infeasible (phase-1 residual {-T[m, -1]:.3g})")
        # Drive zero-level artificials out of the basis; drop redundant rows.
        keep = np.ones(m + 1, dtype=bool)
        for i in range(m):
            if basis[i] >= n_real:
                row = T[i, :n_real]
                cand = np.flatnonzero(np.abs(row) > 1e-9)
                if cand.size:
                    s = int(cand[0])
                    _pivot(T, i, s)
                    basis[i] = s
                else:
                    keep[i] = False
        T = np.delete(T[keep], np.s_[n_real:n_real + n_art], axis=1)
        basis = basis[keep[:m]]
        m = T.shape[0] - 1

    # Phase 2 objective row: reduced costs of the original objective.
    T[m] = 0.0
    T[m, :n] = c
    cb = np.where(basis < n, c[np.minimum(basis, n - 1)], 0.0)
    T[m] -= cb @ T[:m]
    nit = _run(T, basis, n_real, tol, max_iter, nit)

    x = np.zeros(n_real)
    x[basis] = T[:m, -1]
    x = x[:n]
    np.maximum(x, 0.0, out=x)
    return LPResult(x=x, fun=float(c @ x), nit=nit)
