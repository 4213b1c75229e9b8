"""Brute-force polyhedral checks of the per-branch flow-change disjunction.

Points live in (psi, z+, z-, theta, dpf) space.  The three pieces are

* P000: psi = z+ = z- = 0, dpf = 0, theta in [theta_min, theta_max]
* P110: psi = z+ = 1, 0 <= theta <= theta_max, dB_min*theta <= dpf <= dB_max*theta
* P101: psi = z- = 1, theta_min <= theta <= 0, dB_max*theta <= dpf <= dB_min*theta
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .formulations import DisjunctBlockParams, facet_coefficients
from .milp_core import Sense

REL_TOL = 1e-9


@dataclass(frozen=True)
class DisjunctPoint:
    psi: float
    z_plus: float
    z_minus: float
    theta: float
    dpf: float

    def as_array(self) -> np.ndarray:
        return np.array([self.psi, self.z_plus, self.z_minus, self.theta, self.dpf])


class Membership(str, enum.Enum):
    P000 = "P000"
    P110 = "P110"
    P101 = "P101"
    NONE = "none"


def enumerate_extreme_points(p: DisjunctBlockParams) -> list[DisjunctPoint]:
    """The eight vertices generating the convex hull of the three pieces."""
    tl, tu, bl, bu = p.theta_min, p.theta_max, p.dB_min, p.dB_max
    return [
        DisjunctPoint(0, 0, 0, tl, 0.0),
        DisjunctPoint(0, 0, 0, tu, 0.0),
        DisjunctPoint(1, 1, 0, 0.0, 0.0),
        DisjunctPoint(1, 1, 0, tu, tu * bl),
        DisjunctPoint(1, 1, 0, tu, tu * bu),
        DisjunctPoint(1, 0, 1, 0.0, 0.0),
        DisjunctPoint(1, 0, 1, tl, tl * bl),
        DisjunctPoint(1, 0, 1, tl, tl * bu),
    ]


def _envelope_scale(p: DisjunctBlockParams) -> float:
    return max(1.0, *(abs(t * b) for t in (p.theta_min, p.theta_max) for b in (p.dB_min, p.dB_max)))


def _bits(pt: DisjunctPoint, tol: float) -> tuple[int, int, int]:
    bits = []
    for v in (pt.psi, pt.z_plus, pt.z_minus):
        r = round(v)
        if abs(v - r) > tol or r not in (0, 1):
            raise ValueError(f"binary coordinates must be integral, got {v}")
        bits.append(int(r))
    return tuple(bits)


def disjunction_violation(pt: DisjunctPoint, p: DisjunctBlockParams, tol: float = 1e-9) -> float:
    """Distance-like violation of the piece selected by the binaries.

    Angle terms are absolute; flow-change terms are divided by the largest
    |theta * dB| product of the block.  Binary patterns outside the three
    pieces return inf.
    """
    bits = _bits(pt, tol)
    th, d = pt.theta, pt.dpf
    scale = _envelope_scale(p)
    viol = max(0.0, p.theta_min - th, th - p.theta_max)
    if bits == (0, 0, 0):
        return max(viol, abs(d) / scale)
    if bits == (1, 1, 0):
        lo, hi = p.dB_min * th, p.dB_max * th
        return max(viol, -th, (lo - d) / scale, (d - hi) / scale)
    if bits == (1, 0, 1):
        lo, hi = p.dB_max * th, p.dB_min * th
        return max(viol, th, (lo - d) / scale, (d - hi) / scale)
    return float("inf")


def check_point_in_disjunction(pt: DisjunctPoint, p: DisjunctBlockParams,
                               tol: float = 1e-9) -> Membership:
    """Which piece contains ``pt`` (binaries must be integral within tol).

    Angle tests use ``tol`` directly; flow-change tests scale it by the
    largest |theta * dB| product of the block.
    """
    bits = _bits(pt, tol)
    if disjunction_violation(pt, p, tol) > tol:
        return Membership.NONE
    return {(0, 0, 0): Membership.P000, (1, 1, 0): Membership.P110,
            (1, 0, 1): Membership.P101}[bits]


def affine_rank(points: np.ndarray, rtol: float = REL_TOL) -> int:
    """Number of affinely independent rows, by Gaussian elimination with
    partial pivoting on the homogenised matrix [points | 1]."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return 0
    M = np.hstack([pts, np.ones((pts.shape[0], 1))])
    tol = rtol * max(1.0, np.abs(M).max())
    rank = 0
    rows, cols = M.shape
    for col in range(cols):
        if rank == rows:
            break
        piv = rank + int(np.argmax(np.abs(M[rank:, col])))
        if abs(M[piv, col]) <= tol:
            continue
        M[[rank, piv]] = M[[piv, rank]]
        M[rank + 1:] -= np.outer(M[rank + 1:, col] / M[rank, col], M[rank])
        rank += 1
    return rank


@dataclass
class InequalityCheck:
    name: str
    applicable: bool
    valid: bool = False
    tight_points: list[int] = field(default_factory=list)
    affine_rank_of_tight_set: int = 0
    is_facet: bool = False
    min_slack: float = 0.0


@dataclass
class FacetReport:
    params: DisjunctBlockParams
    checks: list[InequalityCheck]
    hull_dimension: int

    @property
    def all_facets(self) -> bool:
        return all(c.is_facet for c in self.checks if c.applicable)

    def as_dict(self) -> dict:
        return {
            "params": {
                "theta_min": self.params.theta_min, "theta_max": self.params.theta_max,
                "dB_min": self.params.dB_min, "dB_max": self.params.dB_max,
            },
            "hull_dimension": self.hull_dimension,
            "all_facets": self.all_facets,
            "inequalities": [
                {"name": c.name, "applicable": c.applicable, "valid": c.valid,
                 "tight_points": c.tight_points, "affine_rank": c.affine_rank_of_tight_set,
                 "is_facet": c.is_facet}
                for c in self.checks
            ],
        }


# the binary bounds psi <= 1, z+ >= 0, z- >= 0 are facets as well
BOUND_ROWS = (
    ("psi_le_1", (1.0, 0.0, 0.0, 0.0, 0.0), Sense.LE, 1.0),
    ("zplus_ge_0", (0.0, 1.0, 0.0, 0.0, 0.0), Sense.GE, 0.0),
    ("zminus_ge_0", (0.0, 0.0, 1.0, 0.0, 0.0), Sense.GE, 0.0),
)


def verify_facets(p: DisjunctBlockParams, rtol: float = REL_TOL) -> FacetReport:
    """Check every inequality of the extended formulation (plus the three
    binary bounds) against the eight hull vertices.

    Facet = valid at all vertices and tight on 4 affinely independent ones
    (the hull is 4-dimensional inside the psi = z+ + z- hyperplane).
    Degenerate parameters mark every row not applicable.
    """
    verts = np.array([q.as_array() for q in enumerate_extreme_points(p)])
    hull_dim = affine_rank(verts, rtol) - 1
    rows = [r for r in facet_coefficients(p) if r[2] is not Sense.EQ] + list(BOUND_ROWS)
    checks = []
    for name, coef, sense, rhs in rows:
        if p.degenerate:
            checks.append(InequalityCheck(name, applicable=False))
            continue
        a = np.array(coef)
        lhs = verts @ a
        # slack >= 0 means satisfied
        slack = rhs - lhs if sense is Sense.LE else lhs - rhs
        scale = np.maximum(max(1.0, abs(rhs), np.abs(a).max()), np.abs(verts * a).max(axis=1))
        tol = rtol * scale
        valid = bool((slack >= -tol).all())
        tight = [int(k) for k in np.flatnonzero(np.abs(slack) <= tol)]
        rank = affine_rank(verts[tight], rtol) if tight else 0
        checks.append(InequalityCheck(
            name, True, valid, tight, rank,
            is_facet=valid and rank == hull_dim, min_slack=float(slack.min()),
        ))
    return FacetReport(p, checks, hull_dim)


# ---------------------------------------------------------------------------
# relaxation comparison


def _interval_for(coef_z: np.ndarray, rest: np.ndarray, sense: Sense, lo: np.ndarray,
                  hi: np.ndarray, tol: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Intersect [lo, hi] with {z : coef_z * z + rest (sense) 0}, vectorised."""
    lo, hi = lo.copy(), hi.copy()
    if sense is Sense.GE:
        coef_z, rest = -coef_z, -rest
    # now coef_z * z + rest <= tol
    pos = coef_z > 0
    neg = coef_z < 0
    zero = ~(pos | neg)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = (tol - rest) / coef_z
    hi = np.where(pos, np.minimum(hi, bound), hi)
    lo = np.where(neg, np.maximum(lo, bound), lo)
    bad = zero & (rest > tol)
    hi = np.where(bad, -np.inf, hi)
    return lo, hi


def fbsm_block_feasible(psi, theta, dpf, p: DisjunctBlockParams, M: float, rtol=REL_TOL):
    """Is there z in [0, 1] meeting the big-M rows at (psi, theta, dpf)?"""
    psi, theta, dpf = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (psi, theta, dpf)))
    tol = rtol * max(1.0, M, _envelope_scale(p))
    lo = np.zeros(psi.shape)
    hi = np.ones(psi.shape)
    bl, bu = p.dB_min, p.dB_max
    # dpf - bl*th - M z >= -M ; dpf - bu*th + M z <= M ; dpf - bu*th + M z >= 0 ; dpf - bl*th - M z <= 0
    for cz, rest, sense in (
        (-M, dpf - bl * theta + M, Sense.GE),
        (M, dpf - bu * theta - M, Sense.LE),
        (M, dpf - bu * theta, Sense.GE),
        (-M, dpf - bl * theta, Sense.LE),
    ):
        lo, hi = _interval_for(np.full(psi.shape, float(cz)), rest, sense, lo, hi, tol)
    ok = lo <= hi + tol
    ok &= np.abs(dpf) <= M * psi + tol
    ok &= (psi >= -tol) & (psi <= 1 + tol)
    ok &= (theta >= p.theta_min - tol) & (theta <= p.theta_max + tol)
    return ok


def facet_block_feasible(psi, theta, dpf, p: DisjunctBlockParams, rtol=REL_TOL):
    """Is there (z+, z-) in [0, 1]^2 with z+ + z- = psi meeting the extended rows?"""
    psi, theta, dpf = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (psi, theta, dpf)))
    tol = rtol * _envelope_scale(p)
    lo = np.maximum(0.0, psi - 1.0)
    hi = np.minimum(1.0, psi)
    for name, (a_psi, a_zp, a_zm, a_th, a_d), sense, rhs in facet_coefficients(p):
        if sense is Sense.EQ:
            continue
        # substitute z- = psi - z+
        cz = np.full(psi.shape, a_zp - a_zm)
        rest = a_psi * psi + a_zm * psi + a_th * theta + a_d * dpf - rhs
        lo, hi = _interval_for(cz, rest, sense, lo, hi, tol)
    return lo <= hi + tol


@dataclass(frozen=True)
class ContainmentSample:
    n_samples: int
    n_bigm_feasible: int
    n_strict: int
    violations: int

    @property
    def strict_fraction(self) -> float:
        return self.n_strict / self.n_bigm_feasible if self.n_bigm_feasible else 0.0


def relaxation_containment_sample(p: DisjunctBlockParams, n_samples: int, seed: int = 0,
                                  M: float | None = None) -> ContainmentSample:
    """Monte Carlo comparison of the big-M and extended LP relaxations projected
    onto (psi, theta, dpf).

    Samples are uniform on psi in [0, 1], theta in the angle box, |dpf| <= M
    (M defaults to the block's flow cap, the per-branch big-M).  Returns the
    fraction of big-M-feasible samples the extended rows cut off, and the
    number of samples feasible for the extended rows but not the big-M rows.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    M = p.flow_cap if M is None else M
    if not np.isfinite(M):
        raise ValueError("a finite big-M is required")
    rng = np.random.default_rng(seed)
    psi = rng.uniform(0, 1, n_samples)
    theta = rng.uniform(p.theta_min, p.theta_max, n_samples)
    dpf = rng.uniform(-M, M, n_samples)
    big = fbsm_block_feasible(psi, theta, dpf, p, M)
    ext = facet_block_feasible(psi, theta, dpf, p)
    return ContainmentSample(
        n_samples, int(big.sum()), int((big & ~ext).sum()), int((ext & ~big).sum()))
