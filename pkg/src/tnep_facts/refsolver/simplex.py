"""Dense-tableau bounded-variable primal simplex.

Works on ``min c.x  s.t.  A x = b,  lb <= x <= ub`` with any mix of finite
and infinite bounds.  Nonbasic variables sit at a finite bound (or at zero
when free).  Phase 1 minimises the sum of artificials; phase 2 keeps
basic artificials fixed at zero.  Dantzig pricing switches to Bland's rule
after a run of degenerate pivots, which guarantees termination.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..milp_core import ArrayForm, ModelIR

MAX_DESK_VARS = 5000

AT_LOWER, AT_UPPER, FREE_ZERO, BASIC = 0, 1, 2, 3


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL = "numerical_failure"
    ITERATION_LIMIT = "iteration_limit"


class DeskScaleError(ValueError):
    """The model exceeds what the dense reference engine is meant to handle."""


@dataclass
class LpResult:
    status: LpStatus
    objective: float = math.nan
    x: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    def __init__(self, A, b, lb, ub, feas_tol, bland_after, max_iter):
        m, n = A.shape
        x = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        status = np.where(np.isfinite(lb), AT_LOWER, np.where(np.isfinite(ub), AT_UPPER, FREE_ZERO))
        r = b - A @ x
        # crash basis: a column with a single nonzero can start basic in its
        # row when the value it must take lies within its bounds
        basis = np.full(m, -1)
        single = np.flatnonzero((A != 0).sum(axis=0) == 1)
        for j in single:
            i = int(np.flatnonzero(A[:, j])[0])
            if basis[i] >= 0:
                continue
            v = x[j] + r[i] / A[i, j]
            if lb[j] - feas_tol <= v <= ub[j] + feas_tol:
                basis[i] = j
                x[j] = v
                r[i] = 0.0
                status[j] = BASIC
        uncovered = np.flatnonzero(basis < 0)
        k = uncovered.size
        art = np.zeros((m, k))
        art[uncovered, np.arange(k)] = np.where(r[uncovered] >= 0, 1.0, -1.0)
        basis[uncovered] = n + np.arange(k)
        self.m, self.n, self.n_art = m, n, k
        self.lb = np.concatenate([lb, np.zeros(k)])
        self.ub = np.concatenate([ub, np.full(k, np.inf)])
        self.full = np.hstack([A, art])
        self.b = b
        diag = self.full[np.arange(m), basis]
        self.T = self.full / diag[:, None]
        self.x = np.concatenate([x, np.abs(r[uncovered])])
        self.status = np.concatenate([status, np.full(k, BASIC)])
        self.basis = basis
        self.feas_tol = feas_tol
        self.bland_after = bland_after
        self.max_iter = max_iter
        self.iterations = 0
        self.pivots_since_refactor = 0

    def refactor(self) -> bool:
        if self.m == 0:
            return True
        Bm = self.full[:, self.basis]
        nonbasic = self.status != BASIC
        rhs = self.b - self.full[:, nonbasic] @ self.x[nonbasic]
        try:
            self.T = np.linalg.solve(Bm, self.full)
            self.x[self.basis] = np.linalg.solve(Bm, rhs)
        except np.linalg.LinAlgError:
            return False
        self.pivots_since_refactor = 0
        return bool(np.isfinite(self.T).all())

    def run(self, cost: np.ndarray, dual_tol: float) -> LpStatus:
        T = self.T
        d = cost - cost[self.basis] @ T
        degenerate_run = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                return LpStatus.ITERATION_LIMIT
            st = self.status
            movable = self.lb < self.ub
            inc = ((st == AT_LOWER) | (st == FREE_ZERO)) & (d < -dual_tol) & movable
            dec = ((st == AT_UPPER) | (st == FREE_ZERO)) & (d > dual_tol) & movable
            cand = inc | dec
            if not cand.any():
                # confirm optimality on a fresh factorisation
                if self.pivots_since_refactor == 0:
                    return LpStatus.OPTIMAL
                if not self.refactor():
                    return LpStatus.NUMERICAL
                T = self.T
                d = cost - cost[self.basis] @ T
                continue
            if bland:
                j = int(np.flatnonzero(cand)[0])
            else:
                j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            sigma = 1.0 if inc[j] else -1.0
            alpha = T[:, j]
            step = self.ub[j] - self.lb[j]
            leave = -1
            leave_to_upper = False
            piv_tol = 1e-9 * max(1.0, float(np.abs(alpha).max(initial=0.0)))
            sa = sigma * alpha
            xb = self.x[self.basis]
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                r_dn = np.where((sa > piv_tol) & np.isfinite(lbb), np.maximum(xb - lbb, 0.0) / sa, np.inf)
                r_up = np.where((sa < -piv_tol) & np.isfinite(ubb), np.maximum(ubb - xb, 0.0) / -sa, np.inf)
            ratios = np.minimum(r_dn, r_up)
            if ratios.size:
                tmin = float(ratios.min())
                if tmin < step:
                    ties = np.flatnonzero(ratios <= tmin + 1e-12 * max(1.0, tmin))
                    if bland:
                        leave = int(ties[np.argmin(self.basis[ties])])
                    else:
                        leave = int(ties[np.argmax(np.abs(alpha[ties]))])
                    step = tmin
                    leave_to_upper = bool(r_up[leave] <= r_dn[leave])
            if not math.isfinite(step):
                return LpStatus.UNBOUNDED
            self.iterations += 1
            if step <= 1e-12:
                degenerate_run += 1
                if degenerate_run >= self.bland_after:
                    bland = True
            else:
                degenerate_run = 0
            self.x[j] += sigma * step
            self.x[self.basis] -= sigma * step * alpha
            if leave < 0:
                self.status[j] = AT_UPPER if sigma > 0 else AT_LOWER
                continue
            out = int(self.basis[leave])
            self.status[out] = AT_UPPER if leave_to_upper else AT_LOWER
            self.x[out] = self.ub[out] if leave_to_upper else self.lb[out]
            self.status[j] = BASIC
            self.basis[leave] = j
            prow = T[leave] / alpha[leave]
            T -= np.outer(alpha, prow)
            T[leave] = prow
            d = d - d[j] * prow
            self.pivots_since_refactor += 1
            if self.pivots_since_refactor >= 100:
                if not self.refactor():
                    return LpStatus.NUMERICAL
                T = self.T
                d = cost - cost[self.basis] @ T


def simplex(c, A, b, lb, ub, *, tol: float = 1e-9, bland_after: int = 50,
            max_iter: int | None = None) -> LpResult:
    """Solve min c.x s.t. A x = b, lb <= x <= ub."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, c.size)
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    if (lb > ub).any():
        return LpResult(LpStatus.INFEASIBLE)
    max_iter = max_iter or 50 * (m + n) + 1000
    scale_b = max(1.0, float(np.abs(b).max(initial=0.0)),
                  float(np.abs(np.where(np.isfinite(lb), lb, 0)).max(initial=0.0)),
                  float(np.abs(np.where(np.isfinite(ub), ub, 0)).max(initial=0.0)))
    feas_tol = tol * scale_b
    tab = _Tableau(A, b, lb, ub, feas_tol, bland_after, max_iter)

    phase1 = np.concatenate([np.zeros(n), np.ones(tab.n_art)])
    status = tab.run(phase1, tol) if tab.n_art else LpStatus.OPTIMAL
    if status is not LpStatus.OPTIMAL:
        return LpResult(status if status is not LpStatus.UNBOUNDED else LpStatus.NUMERICAL,
                        iterations=tab.iterations)
    infeas = float(tab.x[n:].sum())
    if infeas > feas_tol * max(1, m) ** 0.5:
        return LpResult(LpStatus.INFEASIBLE, iterations=tab.iterations)

    # artificials are pinned at zero for phase 2
    tab.ub[n:] = 0.0
    art_nonbasic = tab.status[n:] != BASIC
    tab.status[n:][art_nonbasic] = AT_LOWER
    tab.x[n:][art_nonbasic] = 0.0
    if not tab.refactor():
        return LpResult(LpStatus.NUMERICAL, iterations=tab.iterations)
    cost = np.concatenate([c, np.zeros(tab.n_art)])
    dual_tol = tol * max(1.0, float(np.abs(c).max(initial=0.0)))
    status = tab.run(cost, dual_tol)
    if status is not LpStatus.OPTIMAL:
        return LpResult(status, iterations=tab.iterations)

    x = tab.x[:n].copy()
    # accept only a basis that is primal feasible to tolerance
    check_tol = 1e-7 * scale_b
    resid = np.abs(A @ x + tab.full[:, n:] @ tab.x[n:] - b).max(initial=0.0)
    if (x < lb - check_tol).any() or (x > ub + check_tol).any() or resid > check_tol \
            or np.abs(tab.x[n:]).max(initial=0.0) > check_tol:
        return LpResult(LpStatus.NUMERICAL, iterations=tab.iterations)
    x = np.clip(x, lb, ub)
    return LpResult(LpStatus.OPTIMAL, float(c @ x), x, tab.iterations)


def to_equality_form(form: ArrayForm):
    """Append one slack per row so that every row becomes an equality."""
    m, n = form.A.shape
    slack_lb = np.where(form.sense == ">=", -np.inf, 0.0)
    slack_ub = np.where(form.sense == "<=", np.inf, 0.0)
    A = np.hstack([form.A, np.eye(m)])
    c = np.concatenate([form.c, np.zeros(m)])
    return c, A, form.b, slack_lb, slack_ub


def solve_arrays(form: ArrayForm, lb=None, ub=None, **kw) -> LpResult:
    """LP over an ArrayForm, optionally overriding the variable bounds."""
    n = form.c.size
    if n > MAX_DESK_VARS:
        raise DeskScaleError(f"{n} variables exceed the reference engine limit of {MAX_DESK_VARS}")
    c, A, b, s_lb, s_ub = to_equality_form(form)
    lb = form.lb if lb is None else lb
    ub = form.ub if ub is None else ub
    res = simplex(c, A, b, np.concatenate([lb, s_lb]), np.concatenate([ub, s_ub]), **kw)
    if res.x is not None:
        res.x = res.x[:n]
        res.objective = float(form.c @ res.x) + form.constant
    return res


def solve_lp(model: ModelIR | ArrayForm, **kw) -> LpResult:
    """LP relaxation of ``model`` (integrality ignored)."""
    form = model.to_arrays() if isinstance(model, ModelIR) else model
    return solve_arrays(form, **kw)
