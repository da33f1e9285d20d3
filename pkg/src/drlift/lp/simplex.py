"""Dense two-phase revised simplex.

The basis inverse is kept explicitly and updated with product-form pivots,
with periodic refactorisation.  Pricing is Dantzig's rule with a Harris
two-pass ratio test; after a run of pivots without objective progress the
solver switches to Bland's rule until progress resumes.
"""

from __future__ import annotations

import logging

import numpy as np

from .program import INF, IterationLimitError, LinearProgram, LPSolution, Status

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64


def geometric_scaling(A: np.ndarray, passes: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Row and column factors ``R, S`` so that ``diag(R) A diag(S)`` has entries near 1."""
    m, n = A.shape
    R = np.ones(m)
    S = np.ones(n)
    absA = np.abs(A)
    nz = absA > 0
    for _ in range(passes):
        scaled = absA * R[:, None] * S[None, :]
        big = np.where(nz, scaled, 0.0).max(axis=1)
        small = np.where(nz, scaled, INF).min(axis=1)
        ok = big > 0
        R[ok] /= np.sqrt(big[ok] * small[ok])
        scaled = absA * R[:, None] * S[None, :]
        big = np.where(nz, scaled, 0.0).max(axis=0)
        small = np.where(nz, scaled, INF).min(axis=0)
        ok = big > 0
        S[ok] /= np.sqrt(big[ok] * small[ok])
    return R, S


class _Tableau:
    """Working state for ``min c x  s.t.  A x = b, x >= 0`` with ``b >= 0``."""

    def __init__(self, A: np.ndarray, b: np.ndarray, max_iter: int, stall_limit: int):
        self.m, self.n = A.shape
        self.b = b
        # artificial columns for rows lacking a usable unit column
        basis = -np.ones(self.m, dtype=int)
        single = (A != 0).sum(axis=0) == 1
        for j in np.flatnonzero(single):
            i = int(np.flatnonzero(A[:, j])[0])
            if A[i, j] > 0 and basis[i] < 0:
                basis[i] = j
        missing = np.flatnonzero(basis < 0)
        art = np.zeros((self.m, missing.size))
        art[missing, np.arange(missing.size)] = 1.0
        self.A = np.hstack([A, art])
        self.n_art = missing.size
        basis[missing] = self.n + np.arange(missing.size)
        self.basis = basis
        self.is_basic = np.zeros(self.n + self.n_art, dtype=bool)
        self.is_basic[basis] = True
        self.iterations = 0
        self.max_iter = max_iter
        self.stall_limit = stall_limit
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.xB[(self.xB < 0) & (self.xB > -FEAS_TOL * 10)] = 0.0
        self.since_refactor = 0

    def pivot(self, r: int, j: int, alpha: np.ndarray, theta: float):
        self.xB -= theta * alpha
        self.xB[r] = theta
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.is_basic[self.basis[r]] = False
        self.basis[r] = j
        self.is_basic[j] = True
        np.maximum(self.xB, 0.0, out=self.xB, where=self.xB > -FEAS_TOL)
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def run(self, cost: np.ndarray, allowed: np.ndarray) -> Status:
        """Iterate to optimality for ``cost`` over columns in ``allowed``."""
        best = np.inf
        stalled = 0
        bland = False
        cols = np.flatnonzero(allowed)
        Acols = self.A[:, cols]
        while True:
            if self.iterations >= self.max_iter:
                raise IterationLimitError(
                    "simplex iteration limit exceeded",
                    {
                        "iterations": self.iterations,
                        "rows": self.m,
                        "cols": self.n,
                        "objective": float(cost[self.basis] @ self.xB),
                        "bland": bland,
                    },
                )
            y = self.Binv.T @ cost[self.basis]
            d = cost[cols] - Acols.T @ y
            d[self.is_basic[cols]] = 0.0
            candidates = np.flatnonzero(d < -OPT_TOL)
            if candidates.size == 0:
                return Status.OPTIMAL
            k = candidates[0] if bland else candidates[np.argmin(d[candidates])]
            j = int(cols[k])
            alpha = self.Binv @ self.A[:, j]
            pos = np.flatnonzero(alpha > PIVOT_TOL)
            if pos.size == 0:
                return Status.UNBOUNDED
            ratios = self.xB[pos] / alpha[pos]
            if bland:
                theta = ratios.min()
                ties = pos[ratios <= theta + 1e-12 * max(1.0, abs(theta))]
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                theta_max = ((self.xB[pos] + FEAS_TOL) / alpha[pos]).min()
                ties = pos[ratios <= theta_max]
                r = int(ties[np.argmax(alpha[ties])])
            theta = max(self.xB[r] / alpha[r], 0.0)
            self.pivot(r, j, alpha, theta)
            self.iterations += 1
            obj = float(cost[self.basis] @ self.xB)
            if obj < best - 1e-12 * max(1.0, abs(best)):
                best = obj
                stalled = 0
                bland = False
            else:
                stalled += 1
                if stalled >= self.stall_limit and not bland:
                    log.debug("no progress for %d pivots, switching to Bland's rule", stalled)
                    bland = True

    def drive_out_artificials(self):
        """Pivot zero-level artificials out of the basis where a structural column allows it."""
        for r in range(self.m):
            if self.basis[r] < self.n:
                continue
            row = self.Binv[r] @ self.A[:, : self.n]
            row[self.is_basic[: self.n]] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-7:
                alpha = self.Binv @ self.A[:, j]
                self.pivot(r, j, alpha, 0.0)
        # artificials left in the basis sit on redundant rows and never move again


def _to_standard_form(lp: LinearProgram):
    """Rewrite ``lp`` as ``min c x, A x = b, x >= 0``; return data plus a recovery map."""
    A0 = lp.A.toarray()
    m0, n0 = A0.shape
    sign = -1.0 if lp.sense == "max" else 1.0
    c0 = sign * lp.c
    shift = np.zeros(n0)
    cols = []  # (original column, multiplier) per standard column
    const = 0.0
    extra_rows = []  # (std col index, ub) for bounded columns
    for j in range(n0):
        lo, hi = lp.col_lo[j], lp.col_hi[j]
        if lo > hi:
            return None
        if lo == hi:
            shift[j] = lo
        elif np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    const += float(c0 @ shift)
    rhs_shift = A0 @ shift
    n_struct = len(cols)
    rows = []
    rhs = []
    slacks = []  # (row index, coefficient)
    for i in range(m0):
        lo, hi = lp.row_lo[i] - rhs_shift[i], lp.row_hi[i] - rhs_shift[i]
        if lo > hi:
            return None
        if lo == hi:
            rows.append(i)
            rhs.append(lo)
            slacks.append(None)
            continue
        if np.isfinite(lo):
            rows.append(i)
            rhs.append(lo)
            slacks.append(-1.0)
        if np.isfinite(hi):
            rows.append(i)
            rhs.append(hi)
            slacks.append(1.0)
    n_slack = sum(s is not None for s in slacks) + len(extra_rows)
    m = len(rows) + len(extra_rows)
    n = n_struct + n_slack
    A = np.zeros((m, n))
    c = np.zeros(n)
    for k, (j, mult) in enumerate(cols):
        A[: len(rows), k] = mult * A0[rows, j]
        c[k] = mult * c0[j]
    b = np.zeros(m)
    b[: len(rows)] = rhs
    s = n_struct
    for r, coef in enumerate(slacks):
        if coef is not None:
            A[r, s] = coef
            s += 1
    for e, (k, ub) in enumerate(extra_rows):
        r = len(rows) + e
        A[r, k] = 1.0
        A[r, s] = 1.0
        b[r] = ub
        s += 1

    def recover(x_std: np.ndarray) -> np.ndarray:
        x = shift.copy()
        for k, (j, mult) in enumerate(cols):
            x[j] += mult * x_std[k]
        return x

    return A, b, c, const, sign, recover


def solve_simplex(lp: LinearProgram, max_iter: int | None = None) -> LPSolution:
    """Solve the continuous relaxation of ``lp`` with the dense revised simplex."""
    std = _to_standard_form(lp)
    if std is None:
        return LPSolution(Status.INFEASIBLE, solver="simplex")
    A, b, c, const, sign, recover = std
    m, n = A.shape
    if m == 0:
        if np.any(c < -OPT_TOL):
            return LPSolution(Status.UNBOUNDED, solver="simplex")
        x = recover(np.zeros(n))
        obj = lp.objective_value(x)
        return LPSolution(Status.OPTIMAL, obj, x, 0, obj, solver="simplex")
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    R, S = geometric_scaling(A)
    As = A * R[:, None] * S[None, :]
    bs = b * R
    cs = c * S
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    tab = _Tableau(As, bs, max_iter=max_iter, stall_limit=5 * (m + n))
    n_all = tab.n + tab.n_art
    if tab.n_art:
        phase1 = np.zeros(n_all)
        phase1[tab.n :] = 1.0
        tab.run(phase1, np.ones(n_all, dtype=bool))
        tab.refactor()
        infeas = float(tab.xB[tab.basis >= tab.n].sum())
        if infeas > 1e-7 * max(1.0, float(np.abs(bs).max())):
            return LPSolution(Status.INFEASIBLE, iterations=tab.iterations, solver="simplex")
        tab.drive_out_artificials()
        tab.refactor()
    cost = np.concatenate([cs, np.zeros(tab.n_art)])
    allowed = np.zeros(n_all, dtype=bool)
    allowed[: tab.n] = True
    status = tab.run(cost, allowed)
    if status is Status.UNBOUNDED:
        return LPSolution(Status.UNBOUNDED, iterations=tab.iterations, solver="simplex")
    tab.refactor()
    xs = np.zeros(n_all)
    xs[tab.basis] = tab.xB
    x_std = xs[: tab.n] * S
    y = tab.Binv.T @ cost[tab.basis]
    dual = float(bs @ y)
    x = recover(x_std)
    obj = lp.objective_value(x)
    dual_obj = sign * (dual + const) + lp.obj_const
    return LPSolution(Status.OPTIMAL, obj, x, tab.iterations, dual_obj, solver="simplex")
