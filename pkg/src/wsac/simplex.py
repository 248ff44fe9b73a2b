"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Small LPs only (a few hundred variables). Solves

    minimize    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                x >= 0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(Exception):
    pass


class LPInfeasible(LPError):
    pass


class LPUnbounded(LPError):
    pass


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    n_pivots: int


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    col_vals = tab[:, col].copy()
    col_vals[row] = 0.0
    tab -= np.outer(col_vals, tab[row])


def _run(tab: np.ndarray, basis: list[int], n_cols: int, tol: float, max_pivots: int) -> int:
    """Iterate Bland pivots on `tab` in place. Returns the pivot count."""
    m = tab.shape[0] - 1
    pivots = 0
    while True:
        reduced = tab[m, :n_cols]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return pivots
        col = int(candidates[0])
        column = tab[:m, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            raise LPUnbounded(f"objective unbounded along column {col}")
        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(tab, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise LPError(f"pivot limit {max_pivots} exceeded")


def solve_lp(
    c,
    A_eq=None,
    b_eq=None,
    A_ub=None,
    b_ub=None,
    tol: float = 1e-10,
    max_pivots: int = 100_000,
) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    blocks = []
    rhs = []
    n_slack = 0
    if A_ub is not None:
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        n_slack = A_ub.shape[0]
    if A_eq is not None:
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        blocks.append(np.hstack([A_eq, np.zeros((A_eq.shape[0], n_slack))]))
        rhs.append(np.asarray(b_eq, dtype=float))
    if A_ub is not None:
        blocks.append(np.hstack([A_ub, np.eye(n_slack)]))
        rhs.append(np.asarray(b_ub, dtype=float))
    if not blocks:
        if np.any(c < -tol):
            raise LPUnbounded("no constraints and a negative cost")
        return LPResult(np.zeros(n), 0.0, 0)

    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    m, n_std = A.shape

    # Phase I: one artificial per row.
    tab = np.zeros((m + 1, n_std + m + 1))
    tab[:m, :n_std] = A
    tab[:m, n_std : n_std + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n_std] = -A.sum(axis=0)
    tab[m, -1] = -b.sum()
    basis = list(range(n_std, n_std + m))
    pivots = _run(tab, basis, n_std + m, tol, max_pivots)
    infeas = -tab[m, -1]
    if infeas > 1e3 * tol * max(1.0, float(b.sum())):
        raise LPInfeasible(f"phase I residual {infeas:.3e}")

    # Drive remaining artificials out of the basis; drop redundant rows.
    keep = []
    for r in range(m):
        if basis[r] >= n_std:
            nz = np.flatnonzero(np.abs(tab[r, :n_std]) > 1e-9)
            if nz.size == 0:
                continue
            _pivot(tab, r, int(nz[0]))
            basis[r] = int(nz[0])
            pivots += 1
        keep.append(r)

    tab2 = np.zeros((len(keep) + 1, n_std + 1))
    tab2[:-1, :n_std] = tab[keep, :n_std]
    tab2[:-1, -1] = tab[keep, -1]
    basis2 = [basis[r] for r in keep]
    cost = np.concatenate([c, np.zeros(n_slack)])
    tab2[-1, :n_std] = cost
    for r, j in enumerate(basis2):
        tab2[-1] -= cost[j] * tab2[r]
    pivots += _run(tab2, basis2, n_std, tol, max_pivots)

    x_std = np.zeros(n_std)
    for r, j in enumerate(basis2):
        x_std[j] = tab2[r, -1]
    x = np.maximum(x_std[:n], 0.0)
    return LPResult(x, float(c @ x), pivots)
