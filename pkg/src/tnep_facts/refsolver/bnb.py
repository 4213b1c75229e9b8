"""Best-bound branch-and-bound and exhaustive enumeration over the simplex."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from ..milp_core import ArrayForm, ModelIR, SolutionRecord, SolveStatus
from .simplex import LpStatus, solve_arrays

MAX_BRUTE_FORCE_INTEGERS = 20
MAX_BRUTE_FORCE_ASSIGNMENTS = 1 << 20


@dataclass(frozen=True)
class BnBConfig:
    int_tol: float = 1e-6
    rel_gap: float = 1e-3
    node_limit: int = 100_000
    time_limit: float = math.inf

    def __post_init__(self):
        if not (self.int_tol > 0 and self.rel_gap >= 0 and self.node_limit > 0 and self.time_limit > 0):
            raise ValueError("BnBConfig tolerances and limits must be positive")


@dataclass
class BnBStats:
    nodes: int = 0
    incumbent: float = math.inf
    bound: float = -math.inf
    gap: float = math.inf


def relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


def _record(form: ArrayForm, status: SolveStatus, obj: float, bound: float,
            x: np.ndarray | None) -> SolutionRecord:
    values = {} if x is None else dict(zip(form.names, map(float, x)))
    return SolutionRecord(status, obj, bound, values)


def _polish(form: ArrayForm, x: np.ndarray) -> tuple[float, np.ndarray] | None:
    """Re-solve with the integer variables fixed at their rounded values."""
    lb = form.lb.copy()
    ub = form.ub.copy()
    rounded = np.round(x[form.integer])
    lb[form.integer] = rounded
    ub[form.integer] = rounded
    res = solve_arrays(form, lb, ub)
    if not res.optimal:
        return None
    return res.objective, res.x


def solve_milp(model: ModelIR, cfg: BnBConfig = BnBConfig()) -> tuple[SolutionRecord, BnBStats]:
    """Branch on the most fractional integer (lowest index on ties), explore
    the open node with the smallest LP bound (FIFO on ties)."""
    form = model.to_arrays()
    stats = BnBStats()
    start = time.perf_counter()
    counter = itertools.count()
    int_idx = np.flatnonzero(form.integer)

    root = solve_arrays(form)
    stats.nodes = 1
    if root.status is LpStatus.INFEASIBLE:
        return _record(form, SolveStatus.INFEASIBLE, math.nan, math.nan, None), stats
    if root.status is LpStatus.UNBOUNDED:
        return _record(form, SolveStatus.UNBOUNDED, -math.inf, -math.inf, None), stats
    if not root.optimal:
        return _record(form, SolveStatus.LIMIT, math.nan, -math.inf, None), stats

    incumbent_x = None
    incumbent = math.inf
    heap = [(root.objective, next(counter), form.lb.copy(), form.ub.copy(), root.x)]
    limited = False

    def prune_level() -> float:
        if incumbent_x is None:
            return math.inf
        return incumbent - cfg.rel_gap * max(1.0, abs(incumbent))

    while heap:
        bound = heap[0][0]
        stats.bound = min(bound, incumbent)
        if bound >= prune_level() and incumbent_x is not None:
            break
        if stats.nodes >= cfg.node_limit or time.perf_counter() - start > cfg.time_limit:
            limited = True
            break
        obj, _, lb, ub, x = heapq.heappop(heap)
        xi = x[int_idx]
        frac = np.abs(xi - np.round(xi))
        if frac.size == 0 or frac.max() <= cfg.int_tol:
            if obj < incumbent:
                incumbent, incumbent_x = obj, x
            continue
        score = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
        k = int(int_idx[int(np.argmax(score))])
        for side in ("down", "up"):
            clb, cub = lb.copy(), ub.copy()
            if side == "down":
                cub[k] = math.floor(x[k])
            else:
                clb[k] = math.ceil(x[k])
            if clb[k] > cub[k]:
                continue
            res = solve_arrays(form, clb, cub)
            stats.nodes += 1
            if res.optimal and res.objective < prune_level():
                heapq.heappush(heap, (res.objective, next(counter), clb, cub, res.x))
            elif res.status not in (LpStatus.OPTIMAL, LpStatus.INFEASIBLE):
                limited = True
    else:
        stats.bound = incumbent

    if heap and not limited:
        stats.bound = min(heap[0][0], incumbent)
    if incumbent_x is None:
        status = SolveStatus.LIMIT if limited else SolveStatus.INFEASIBLE
        stats.gap = math.inf
        return _record(form, status, math.nan, stats.bound, None), stats

    polished = _polish(form, incumbent_x)
    if polished is not None:
        incumbent, incumbent_x = polished
    stats.incumbent = incumbent
    stats.bound = min(stats.bound, incumbent)
    stats.gap = relative_gap(incumbent, stats.bound)
    status = SolveStatus.LIMIT if limited and stats.gap > cfg.rel_gap else SolveStatus.OPTIMAL
    return _record(form, status, incumbent, stats.bound, incumbent_x), stats


def _integer_only_rows(form: ArrayForm) -> list[tuple[np.ndarray, np.ndarray, str, float]]:
    """Rows touching integer variables only, for cheap assignment screening."""
    out = []
    for i in range(form.A.shape[0]):
        nz = np.flatnonzero(form.A[i])
        if nz.size and form.integer[nz].all():
            out.append((nz, form.A[i, nz], form.sense[i], form.b[i]))
    return out


def brute_force_milp(model: ModelIR) -> SolutionRecord:
    """Exact optimum by solving the LP for every integral assignment.

    Integer variables with a bound range wider than one are enumerated over
    that range; assignments that violate a row containing only integer
    variables are skipped without an LP.
    """
    form = model.to_arrays()
    free = [int(k) for k in np.flatnonzero(form.integer) if form.ub[k] > form.lb[k]]
    for k in np.flatnonzero(form.integer):
        if not (math.isfinite(form.lb[k]) and math.isfinite(form.ub[k])):
            raise ValueError(f"integer variable {form.names[k]} needs finite bounds for enumeration")
    if len(free) > MAX_BRUTE_FORCE_INTEGERS:
        raise ValueError(f"{len(free)} free integer variables exceed the enumeration limit "
                         f"of {MAX_BRUTE_FORCE_INTEGERS}")
    ranges = [range(math.ceil(form.lb[k]), math.floor(form.ub[k]) + 1) for k in free]
    if math.prod(len(r) for r in ranges) > MAX_BRUTE_FORCE_ASSIGNMENTS:
        raise ValueError("too many integer assignments to enumerate")

    lb = form.lb.copy()
    ub = form.ub.copy()
    fixed_int = np.flatnonzero(form.integer)
    lb[fixed_int] = np.ceil(lb[fixed_int] - 1e-9)
    ub[fixed_int] = np.floor(ub[fixed_int] + 1e-9)
    screens = _integer_only_rows(form)
    best = math.inf
    best_x = None
    any_limit = False
    free_arr = np.array(free, dtype=int)
    for combo in itertools.product(*ranges):
        vals = np.array(combo, dtype=float)
        lb[free_arr] = vals
        ub[free_arr] = vals
        skip = False
        for nz, coef, sense, rhs in screens:
            act = float(coef @ lb[nz])
            if (sense == "<=" and act > rhs + 1e-9) or (sense == ">=" and act < rhs - 1e-9) \
                    or (sense == "=" and abs(act - rhs) > 1e-9):
                skip = True
                break
        if skip:
            continue
        res = solve_arrays(form, lb, ub)
        if res.status is LpStatus.UNBOUNDED:
            return _record(form, SolveStatus.UNBOUNDED, -math.inf, -math.inf, None)
        if not res.optimal:
            any_limit = any_limit or res.status is not LpStatus.INFEASIBLE
            continue
        if res.objective < best:
            best, best_x = res.objective, res.x
    if best_x is None:
        status = SolveStatus.LIMIT if any_limit else SolveStatus.INFEASIBLE
        return _record(form, status, math.nan, math.nan, None)
    return _record(form, SolveStatus.OPTIMAL, best, best, best_x)
