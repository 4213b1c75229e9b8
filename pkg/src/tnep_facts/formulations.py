"""MILP builders for expansion planning with and without series compensation.

Four formulations share one skeleton (power balance, thermal limits with
upgrade levels, angle-difference limits):

* ``tnep``   -- plain DC expansion planning, flow = B * angle difference.
* ``fbsm``   -- flow = B * angle difference + flow change, with the sign
  disjunction on the flow change linearised by one global big-M.
* ``fbsmi``  -- ``fbsm`` with a big-M per branch.
* ``facets`` -- the flow-change disjunction written as an extended
  formulation on (psi, z+, z-) whose inequalities are facets of the convex
  hull of the three-way disjunction.

Variable names follow ``<kind>_<branch-or-bus>[_<scenario>]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .grid import CostConfig, Network, Scenario
from .milp_core import INF, Integrality, LinearConstraintDef, ModelIR, Sense

KINDS = ("tnep", "fbsm", "fbsmi", "facets")


class FormulationError(ValueError):
    pass


class BigMMode(str, enum.Enum):
    GLOBAL = "global"
    PER_BRANCH = "per_branch"


@dataclass(frozen=True)
class BigMPolicy:
    mode: BigMMode = BigMMode.GLOBAL

    def values(self, net: Network) -> list[float]:
        caps = [br.flow_cap_mw for br in net.branches]
        if self.mode is BigMMode.PER_BRANCH or not caps:
            return caps
        return [max(caps)] * len(caps)


@dataclass(frozen=True)
class FactsParams:
    """Susceptance change range of one branch's TCSC, in MW/rad."""

    dB_min: float = 0.0
    dB_max: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.dB_min) and math.isfinite(self.dB_max)):
            raise FormulationError("susceptance change bounds must be finite")
        if not self.dB_min <= 0 <= self.dB_max:
            raise FormulationError(f"need dB_min <= 0 <= dB_max, got ({self.dB_min}, {self.dB_max})")


@dataclass(frozen=True)
class DisjunctBlockParams:
    theta_min: float
    theta_max: float
    dB_min: float
    dB_max: float
    flow_cap: float = INF

    def __post_init__(self):
        if not self.theta_min < 0 < self.theta_max:
            raise FormulationError("need theta_min < 0 < theta_max")
        if not self.dB_min <= self.dB_max:
            raise FormulationError("need dB_min <= dB_max")

    @property
    def degenerate(self) -> bool:
        return not self.dB_min < self.dB_max


# ---------------------------------------------------------------------------
# parameter preparation


def compute_susceptance_deltas(X: float, dx_min_frac: float, dx_max_frac: float,
                               base_mva: float = 100.0) -> tuple[float, float]:
    """Susceptance change range (dB_min, dB_max) in MW/rad for a reactance
    change in [X*dx_min_frac, X*dx_max_frac].

    dB(dX) = -dX / (X (X + dX)) decreases in dX, so the smallest reactance
    gives the largest susceptance change.
    """
    if not X > 0:
        raise FormulationError(f"reactance must be positive, got {X}")
    if not dx_min_frac > -1:
        raise FormulationError("reactance change range must keep X + dX > 0")
    if dx_min_frac > dx_max_frac:
        raise FormulationError("dx_min_frac exceeds dx_max_frac")

    def delta_b(dx: float) -> float:
        return -dx / (X * (X + dx)) * base_mva

    return delta_b(X * dx_max_frac) + 0.0, delta_b(X * dx_min_frac) + 0.0


def facts_params(net: Network) -> list[FactsParams]:
    out = []
    for br in net.branches:
        if br.tcsc_allowed:
            lo, hi = compute_susceptance_deltas(br.reactance_pu, br.tcsc_dx_min_frac,
                                                br.tcsc_dx_max_frac, net.base_mva)
            out.append(FactsParams(lo, hi))
        else:
            out.append(FactsParams())
    return out


def tighten_angle_bounds(theta_min: float, theta_max: float, susceptance: float,
                         dB_min: float, flow_cap: float) -> tuple[float, float]:
    """Shrink an angle-difference box using |flow| <= flow_cap.

    With flow = (B + dB) * theta and dB >= dB_min, a positive theta satisfies
    (B + dB_min) * theta <= flow_cap; the negative side is symmetric.  Skipped
    when B + dB_min <= 0.
    """
    weakest = susceptance + dB_min
    if weakest <= 0:
        return theta_min, theta_max
    reach = flow_cap / weakest
    return max(theta_min, -reach), min(theta_max, reach)


def _check_inputs(net: Network, scenarios: Sequence[Scenario]) -> None:
    if not scenarios:
        raise FormulationError("at least one scenario is required")
    for s in scenarios:
        if len(s.pd_mw) != net.n_buses:
            raise FormulationError(
                f"scenario {s.id}: {len(s.pd_mw)} loads for {net.n_buses} buses")
        if len(s.pmax_mw) != net.n_generators:
            raise FormulationError(
                f"scenario {s.id}: {len(s.pmax_mw)} generator limits for {net.n_generators} generators")


# ---------------------------------------------------------------------------
# naming


def vname(kind: str, idx: int, s: int | None = None) -> str:
    return f"{kind}_{idx}" if s is None else f"{kind}_{idx}_{s}"


# ---------------------------------------------------------------------------
# shared skeleton


def _skeleton(net: Network, scenarios: Sequence[Scenario], costs: CostConfig, kind: str,
              angle_box: Sequence[tuple[float, float]] | None = None,
              facts_binaries: Sequence[str] | None = None) -> ModelIR:
    flow_change = facts_binaries is not None
    _check_inputs(net, scenarios)
    S = len(scenarios)
    weight = 1.0 / S
    model = ModelIR(metadata={
        "kind": kind, "N": net.n_buses, "E": net.n_branches, "G": net.n_generators, "S": S,
    })
    lam = costs.imbalance_penalty_per_mwh

    for br in net.branches:
        model.add_var(vname("gamma", br.id), 0.0, float(br.max_upgrades), Integrality.INTEGER,
                      cost=costs.upgrade_cost(br))

    for s_idx, sc in enumerate(scenarios):
        for g in net.generators:
            model.add_var(vname("pg", g.id, s_idx), sc.pmin_mw[g.id], sc.pmax_mw[g.id],
                          cost=weight * g.cost_per_mwh)
        for bus in net.buses:
            fixed = bus.id == 0
            model.add_var(vname("theta", bus.id, s_idx), 0.0 if fixed else -INF, 0.0 if fixed else INF)
        for br in net.branches:
            model.add_var(vname("pf", br.id, s_idx), -INF, INF)
        for bus in net.buses:
            # unserved load (xip) and over-supply (xim)
            model.add_var(vname("xip", bus.id, s_idx), 0.0, INF, cost=weight * lam)
            model.add_var(vname("xim", bus.id, s_idx), 0.0, INF, cost=weight * lam)
    if flow_change:
        _add_facts_vars(model, net, costs, S, facts_binaries)

    gens_at = [[] for _ in net.buses]
    for g in net.generators:
        gens_at[g.bus].append(g.id)
    for s_idx, sc in enumerate(scenarios):
        for bus in net.buses:
            terms = [(vname("pg", g, s_idx), 1.0) for g in gens_at[bus.id]]
            for br in net.branches:
                if br.to_bus == bus.id:
                    terms.append((vname("pf", br.id, s_idx), 1.0))
                elif br.from_bus == bus.id:
                    terms.append((vname("pf", br.id, s_idx), -1.0))
            terms += [(vname("xip", bus.id, s_idx), 1.0), (vname("xim", bus.id, s_idx), -1.0)]
            model.add_constr(vname("bal", bus.id, s_idx), terms, Sense.EQ, sc.pd_mw[bus.id])

    for s_idx in range(S):
        for br in net.branches:
            B = br.susceptance(net.base_mva)
            pf = vname("pf", br.id, s_idx)
            terms = [(pf, 1.0), (vname("theta", br.to_bus, s_idx), -B),
                     (vname("theta", br.from_bus, s_idx), B)]
            if flow_change:
                terms.append((vname("dpf", br.id, s_idx), -1.0))
            model.add_constr(vname("flow" if flow_change else "ohm", br.id, s_idx), terms, Sense.EQ, 0.0)

    for s_idx in range(S):
        for br in net.branches:
            pf = vname("pf", br.id, s_idx)
            gam = vname("gamma", br.id)
            dc = br.upgrade_increment_mw
            model.add_constr(vname("thmax", br.id, s_idx), [(pf, 1.0), (gam, -dc)], Sense.LE,
                             br.thermal_limit_mw)
            model.add_constr(vname("thmin", br.id, s_idx), [(pf, 1.0), (gam, dc)], Sense.GE,
                             -br.thermal_limit_mw)

    for s_idx in range(S):
        for br in net.branches:
            lo, hi = angle_box[br.id] if angle_box else (br.angle_min_rad, br.angle_max_rad)
            diff = [(vname("theta", br.to_bus, s_idx), 1.0), (vname("theta", br.from_bus, s_idx), -1.0)]
            model.add_constr(vname("angmax", br.id, s_idx), diff, Sense.LE, hi)
            model.add_constr(vname("angmin", br.id, s_idx), diff, Sense.GE, lo)
    return model


def _add_facts_vars(model: ModelIR, net: Network, costs: CostConfig, S: int,
                    binaries: Sequence[str]) -> None:
    """psi per branch; dpf and the given per-scenario binaries per (branch, scenario).

    Branches without a TCSC option keep their variables (uniform structure)
    with psi and the binaries fixed to zero.
    """
    for br in net.branches:
        ub = 1.0 if br.tcsc_allowed else 0.0
        model.add_var(vname("psi", br.id), 0.0, ub, Integrality.BINARY, cost=costs.tcsc_cost(br))
    for s_idx in range(S):
        for br in net.branches:
            ub = 1.0 if br.tcsc_allowed else 0.0
            model.add_var(vname("dpf", br.id, s_idx), -INF, INF)
            for b in binaries:
                model.add_var(vname(b, br.id, s_idx), 0.0, ub, Integrality.BINARY)


# ---------------------------------------------------------------------------
# formulations


def build_tnep(net: Network, scenarios: Sequence[Scenario], costs: CostConfig) -> ModelIR:
    """Expansion planning without flow control devices."""
    return _skeleton(net, scenarios, costs, "tnep")


def build_fbsm(net: Network, scenarios: Sequence[Scenario], costs: CostConfig,
               policy: BigMPolicy = BigMPolicy()) -> ModelIR:
    """Big-M formulation: z = 1 selects the non-negative angle side.

    Rows per (branch, scenario)::

        dpf >= dB_min*theta - M(1 - z)      dpf <= dB_max*theta + M(1 - z)
        dpf >= dB_max*theta - M z           dpf <= dB_min*theta + M z
        -M psi <= dpf <= M psi
    """
    kind = "fbsm" if policy.mode is BigMMode.GLOBAL else "fbsmi"
    model = _skeleton(net, scenarios, costs, kind, facts_binaries=["z"])
    model.metadata["bigm"] = policy.mode.value
    S = len(scenarios)
    fp = facts_params(net)
    bigm = policy.values(net)
    for s_idx in range(S):
        for br in net.branches:
            M = bigm[br.id]
            lo, hi = fp[br.id].dB_min, fp[br.id].dB_max
            d = vname("dpf", br.id, s_idx)
            z = vname("z", br.id, s_idx)
            tj = vname("theta", br.to_bus, s_idx)
            ti = vname("theta", br.from_bus, s_idx)
            psi = vname("psi", br.id)

            def angle(coef):
                return [(tj, -coef), (ti, coef)]

            model.add_constr(vname("bmposlo", br.id, s_idx), [(d, 1.0), *angle(lo), (z, -M)], Sense.GE, -M)
            model.add_constr(vname("bmposhi", br.id, s_idx), [(d, 1.0), *angle(hi), (z, M)], Sense.LE, M)
            model.add_constr(vname("bmneglo", br.id, s_idx), [(d, 1.0), *angle(hi), (z, M)], Sense.GE, 0.0)
            model.add_constr(vname("bmneghi", br.id, s_idx), [(d, 1.0), *angle(lo), (z, -M)], Sense.LE, 0.0)
            model.add_constr(vname("instmax", br.id, s_idx), [(d, 1.0), (psi, -M)], Sense.LE, 0.0)
            model.add_constr(vname("instmin", br.id, s_idx), [(d, 1.0), (psi, M)], Sense.GE, 0.0)
    return model


def build_fbsmi(net: Network, scenarios: Sequence[Scenario], costs: CostConfig) -> ModelIR:
    """Big-M formulation with M_ij = thermal limit + all upgrade levels."""
    return build_fbsm(net, scenarios, costs, BigMPolicy(BigMMode.PER_BRANCH))


# coefficient order: (psi, z+, z-, theta, dpf)
FACET_ROWS = (
    "ang_floor", "ang_ceil", "dpf_floor", "dpf_ceil",
    "dpf_floor_maxang", "dpf_ceil_maxang", "dpf_ceil_minang", "dpf_floor_minang",
)


def facet_coefficients(p: DisjunctBlockParams) -> list[tuple[str, tuple[float, ...], Sense, float]]:
    """The linking equality then the eight inequalities of the extended formulation,
    as (name, coefficients on (psi, z+, z-, theta, dpf), sense, rhs)."""
    tl, tu, bl, bu = p.theta_min, p.theta_max, p.dB_min, p.dB_max
    return [
        ("link", (-1.0, 1.0, 1.0, 0.0, 0.0), Sense.EQ, 0.0),
        ("ang_floor", (0.0, tl, 0.0, 1.0, 0.0), Sense.GE, tl),
        ("ang_ceil", (0.0, 0.0, tu, 1.0, 0.0), Sense.LE, tu),
        ("dpf_floor", (0.0, -tu * bl, -tl * bu, 0.0, 1.0), Sense.GE, 0.0),
        ("dpf_ceil", (0.0, -tu * bu, -tl * bl, 0.0, 1.0), Sense.LE, 0.0),
        ("dpf_floor_maxang", (0.0, tu * bl, tu * bu, bu, -1.0), Sense.LE, tu * bu),
        ("dpf_ceil_maxang", (0.0, tu * bu, tu * bl, bl, -1.0), Sense.GE, tu * bl),
        ("dpf_ceil_minang", (0.0, tl * bu, tl * bl, bu, -1.0), Sense.GE, tl * bu),
        ("dpf_floor_minang", (0.0, tl * bl, tl * bu, bl, -1.0), Sense.LE, tl * bl),
    ]


def facet_block(params: DisjunctBlockParams, psi: str, z_plus: str, z_minus: str,
                theta_to: str, theta_from: str, dpf: str, suffix: str = "",
                emit_cap_rows: bool = True) -> list[LinearConstraintDef]:
    """Rows of the extended formulation for one (branch, scenario).

    The angle difference is theta_to - theta_from.  With ``emit_cap_rows``
    the redundant |dpf| <= flow_cap * psi pair is appended.
    """
    rows = []
    for name, (a_psi, a_zp, a_zm, a_th, a_d), sense, rhs in facet_coefficients(params):
        terms = {}
        for var, coef in ((psi, a_psi), (z_plus, a_zp), (z_minus, a_zm), (dpf, a_d)):
            if var in terms:
                raise FormulationError("facet block variables must be distinct")
            terms[var] = coef
        if a_th:
            terms[theta_to] = terms.get(theta_to, 0.0) + a_th
            terms[theta_from] = terms.get(theta_from, 0.0) - a_th
        if name == "link":
            terms.pop(dpf)
        elif name in ("ang_floor", "ang_ceil"):
            terms.pop(dpf)
            terms.pop(psi)
            terms.pop(z_minus if name == "ang_floor" else z_plus)
        else:
            terms.pop(psi)
        rows.append(LinearConstraintDef(f"{name}{suffix}", tuple(terms.items()), sense, rhs))
    if emit_cap_rows:
        cap = params.flow_cap
        rows.append(LinearConstraintDef(f"capmax{suffix}", ((dpf, 1.0), (psi, -cap)), Sense.LE, 0.0))
        rows.append(LinearConstraintDef(f"capmin{suffix}", ((dpf, 1.0), (psi, cap)), Sense.GE, 0.0))
    return rows


def facets_angle_box(net: Network, apply_bound_tightening: bool = True) -> list[tuple[float, float]]:
    fp = facts_params(net)
    box = []
    for br in net.branches:
        lo, hi = br.angle_min_rad, br.angle_max_rad
        if apply_bound_tightening:
            lo, hi = tighten_angle_bounds(lo, hi, br.susceptance(net.base_mva),
                                          fp[br.id].dB_min, br.flow_cap_mw)
        box.append((lo, hi))
    return box


def build_facets(net: Network, scenarios: Sequence[Scenario], costs: CostConfig,
                 apply_bound_tightening: bool = True, emit_eq22: bool = True) -> ModelIR:
    """Extended formulation with facet-defining rows per (branch, scenario).

    ``apply_bound_tightening`` shrinks the angle-difference limits (rows and
    block parameters) before building; ``emit_eq22`` adds the redundant
    |dpf| <= (thermal limit + all upgrades) * psi pair.
    """
    box = facets_angle_box(net, apply_bound_tightening)
    model = _skeleton(net, scenarios, costs, "facets", angle_box=box, facts_binaries=["zp", "zm"])
    model.metadata.update(bound_tightening=apply_bound_tightening, emit_eq22=emit_eq22)
    S = len(scenarios)
    fp = facts_params(net)
    for s_idx in range(S):
        for br in net.branches:
            lo, hi = box[br.id]
            params = DisjunctBlockParams(lo, hi, fp[br.id].dB_min, fp[br.id].dB_max, br.flow_cap_mw)
            rows = facet_block(
                params, vname("psi", br.id), vname("zp", br.id, s_idx), vname("zm", br.id, s_idx),
                vname("theta", br.to_bus, s_idx), vname("theta", br.from_bus, s_idx),
                vname("dpf", br.id, s_idx), suffix=f"_{br.id}_{s_idx}", emit_cap_rows=emit_eq22)
            for row in rows:
                model.add_constr(row.name, row.terms, row.sense, row.rhs)
    return model


def build(kind: str, net: Network, scenarios: Sequence[Scenario], costs: CostConfig, *,
          apply_bound_tightening: bool = True, emit_eq22: bool = True) -> ModelIR:
    """Dispatch on the formulation name."""
    if kind == "tnep":
        return build_tnep(net, scenarios, costs)
    if kind == "fbsm":
        return build_fbsm(net, scenarios, costs)
    if kind == "fbsmi":
        return build_fbsmi(net, scenarios, costs)
    if kind == "facets":
        return build_facets(net, scenarios, costs, apply_bound_tightening, emit_eq22)
    raise FormulationError(f"unknown formulation {kind!r}; expected one of {', '.join(KINDS)}")
