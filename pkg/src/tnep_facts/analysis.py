"""Solution validation, cost and energy decomposition, and map-ready CSVs.

The validator re-derives every constraint family from the network, the
scenarios and the formulation name; it never looks at a built model, so it
is an independent check on the builders.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .formulations import (
    KINDS,
    BigMMode,
    BigMPolicy,
    DisjunctBlockParams,
    FormulationError,
    facet_coefficients,
    facets_angle_box,
    facts_params,
    vname,
)
from .grid import CostConfig, GridError, Network, Scenario, buses_missing_coordinates
from .milp_core import SolutionRecord, Sense
from .polyhedra import DisjunctPoint, disjunction_violation

FAMILIES = ("balance", "flow", "thermal", "angle", "bounds", "integrality",
            "bigm", "facet", "disjunction")


class ValidationError(ValueError):
    pass


@dataclass
class ValidationReport:
    tol: float
    violations: dict[str, float] = field(default_factory=lambda: dict.fromkeys(FAMILIES, 0.0))
    worst: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.violations.values())

    @property
    def failed_families(self) -> list[str]:
        return [f for f, v in self.violations.items() if v > self.tol]

    def record(self, family: str, amount: float, where: str) -> None:
        if amount > self.violations[family]:
            self.violations[family] = amount
            self.worst[family] = where

    def as_dict(self) -> dict:
        return {"passed": self.passed, "tol": self.tol, "violations": self.violations,
                "worst": self.worst, "failed": self.failed_families}


def expected_variables(net: Network, n_scenarios: int, kind: str) -> list[str]:
    if kind not in KINDS:
        raise FormulationError(f"unknown formulation {kind!r}")
    names = [vname("gamma", br.id) for br in net.branches]
    for s in range(n_scenarios):
        names += [vname("pg", g.id, s) for g in net.generators]
        names += [vname("theta", b.id, s) for b in net.buses]
        names += [vname("pf", br.id, s) for br in net.branches]
        names += [vname(k, b.id, s) for b in net.buses for k in ("xip", "xim")]
    if kind == "tnep":
        return names
    binaries = ("z",) if kind in ("fbsm", "fbsmi") else ("zp", "zm")
    names += [vname("psi", br.id) for br in net.branches]
    for s in range(n_scenarios):
        for br in net.branches:
            names.append(vname("dpf", br.id, s))
            names += [vname(b, br.id, s) for b in binaries]
    return names


def _row_violation(lhs: float, sense: Sense, rhs: float) -> float:
    if sense is Sense.LE:
        return max(0.0, lhs - rhs)
    if sense is Sense.GE:
        return max(0.0, rhs - lhs)
    return abs(lhs - rhs)


def validate_solution(net: Network, scenarios: Sequence[Scenario], kind: str,
                      sol: SolutionRecord, tol: float = 1e-6, *,
                      apply_bound_tightening: bool = True, emit_eq22: bool = True,
                      bigm: BigMPolicy | None = None) -> ValidationReport:
    """Largest violation per constraint family; ``passed`` when all are <= tol.

    Violations are absolute except for the disjunction family, whose
    flow-change terms are relative to the block's largest |theta * dB|.
    """
    S = len(scenarios)
    names = expected_variables(net, S, kind)
    missing = [n for n in names if n not in sol.values]
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise ValidationError(f"solution lacks {len(missing)} variables: {shown}")
    v = sol.values
    rep = ValidationReport(tol)
    facts = kind != "tnep"
    fp = facts_params(net)

    def bounds(name: str, lo: float, hi: float) -> None:
        rep.record("bounds", max(0.0, lo - v[name], v[name] - hi), name)

    def integral(name: str) -> None:
        rep.record("integrality", abs(v[name] - round(v[name])), name)

    for br in net.branches:
        g = vname("gamma", br.id)
        bounds(g, 0.0, br.max_upgrades)
        integral(g)
        if facts:
            psi = vname("psi", br.id)
            bounds(psi, 0.0, 1.0 if br.tcsc_allowed else 0.0)
            integral(psi)

    for s, sc in enumerate(scenarios):
        for g in net.generators:
            bounds(vname("pg", g.id, s), sc.pmin_mw[g.id], sc.pmax_mw[g.id])
        bounds(vname("theta", 0, s), 0.0, 0.0)
        for b in net.buses:
            bounds(vname("xip", b.id, s), 0.0, math.inf)
            bounds(vname("xim", b.id, s), 0.0, math.inf)

        net_in = [sc.pd_mw[b.id] * -1.0 for b in net.buses]
        for g in net.generators:
            net_in[g.bus] += v[vname("pg", g.id, s)]
        for br in net.branches:
            pf = v[vname("pf", br.id, s)]
            net_in[br.to_bus] += pf
            net_in[br.from_bus] -= pf
        for b in net.buses:
            residual = net_in[b.id] + v[vname("xip", b.id, s)] - v[vname("xim", b.id, s)]
            rep.record("balance", abs(residual), vname("bal", b.id, s))

        for br in net.branches:
            where = f"branch {br.id} scenario {s}"
            pf = v[vname("pf", br.id, s)]
            diff = v[vname("theta", br.to_bus, s)] - v[vname("theta", br.from_bus, s)]
            dpf = v[vname("dpf", br.id, s)] if facts else 0.0
            rep.record("flow", abs(pf - br.susceptance(net.base_mva) * diff - dpf), where)
            cap = br.thermal_limit_mw + br.upgrade_increment_mw * v[vname("gamma", br.id)]
            rep.record("thermal", max(0.0, abs(pf) - cap), where)
            rep.record("angle", max(0.0, br.angle_min_rad - diff, diff - br.angle_max_rad), where)

    if kind in ("fbsm", "fbsmi"):
        _check_bigm(net, S, kind, v, rep, bigm)
    elif kind == "facets":
        _check_facets(net, S, v, rep, apply_bound_tightening, emit_eq22)

    if facts:
        for s in range(S):
            for br in net.branches:
                psi = v[vname("psi", br.id)]
                if kind == "facets":
                    zp, zm = v[vname("zp", br.id, s)], v[vname("zm", br.id, s)]
                else:
                    z = v[vname("z", br.id, s)]
                    zp, zm = psi * z, psi * (1.0 - z)
                pt = DisjunctPoint(psi, zp, zm,
                                   v[vname("theta", br.to_bus, s)] - v[vname("theta", br.from_bus, s)],
                                   v[vname("dpf", br.id, s)])
                params = DisjunctBlockParams(br.angle_min_rad, br.angle_max_rad,
                                             fp[br.id].dB_min, fp[br.id].dB_max)
                try:
                    amount = disjunction_violation(pt, params, tol)
                except ValueError:
                    amount = math.inf
                rep.record("disjunction", amount, f"branch {br.id} scenario {s}")
    return rep


def _check_bigm(net, S, kind, v, rep, bigm):
    policy = bigm or BigMPolicy(BigMMode.GLOBAL if kind == "fbsm" else BigMMode.PER_BRANCH)
    Ms = policy.values(net)
    fp = facts_params(net)
    for br in net.branches:
        psi = v[vname("psi", br.id)]
        for s in range(S):
            where = f"branch {br.id} scenario {s}"
            z = v[vname("z", br.id, s)]
            rep.record("bounds", max(0.0, -z, z - (1.0 if br.tcsc_allowed else 0.0)), vname("z", br.id, s))
            rep.record("integrality", abs(z - round(z)), vname("z", br.id, s))
            M = Ms[br.id]
            th = v[vname("theta", br.to_bus, s)] - v[vname("theta", br.from_bus, s)]
            d = v[vname("dpf", br.id, s)]
            lo, hi = fp[br.id].dB_min * th, fp[br.id].dB_max * th
            for amount in (lo - M * (1 - z) - d, d - hi - M * (1 - z),
                           hi - M * z - d, d - lo - M * z, abs(d) - M * psi):
                rep.record("bigm", max(0.0, amount), where)


def _check_facets(net, S, v, rep, apply_bound_tightening, emit_eq22):
    fp = facts_params(net)
    box = facets_angle_box(net, apply_bound_tightening)
    for br in net.branches:
        lo, hi = box[br.id]
        params = DisjunctBlockParams(lo, hi, fp[br.id].dB_min, fp[br.id].dB_max, br.flow_cap_mw)
        psi = v[vname("psi", br.id)]
        for s in range(S):
            where = f"branch {br.id} scenario {s}"
            zp, zm = v[vname("zp", br.id, s)], v[vname("zm", br.id, s)]
            top = 1.0 if br.tcsc_allowed else 0.0
            for name in ("zp", "zm"):
                val = v[vname(name, br.id, s)]
                rep.record("bounds", max(0.0, -val, val - top), vname(name, br.id, s))
                rep.record("integrality", abs(val - round(val)), vname(name, br.id, s))
            th = v[vname("theta", br.to_bus, s)] - v[vname("theta", br.from_bus, s)]
            d = v[vname("dpf", br.id, s)]
            point = (psi, zp, zm, th, d)
            for name, coef, sense, rhs in facet_coefficients(params):
                lhs = sum(a * x for a, x in zip(coef, point))
                rep.record("facet", _row_violation(lhs, sense, rhs), f"{name} {where}")
            # the tightened angle box is part of the extended formulation
            rep.record("facet", max(0.0, lo - th, th - hi), f"angle box {where}")
            if emit_eq22:
                rep.record("facet", max(0.0, abs(d) - br.flow_cap_mw * psi), f"cap {where}")


# ---------------------------------------------------------------------------
# plan summary


@dataclass
class PlanSummary:
    total_cost: float
    capacity_cost: float
    tcsc_cost: float
    generation_cost: float
    unserved_mwh: float
    overserved_mwh: float
    curtailed_mwh: float
    unserved_mwh_mean: float
    overserved_mwh_mean: float
    curtailed_mwh_mean: float
    upgrades_by_level: dict[int, int]
    tcsc_count: int
    n_scenarios: int

    def as_dict(self) -> dict:
        d = asdict(self)
        d["upgrades_by_level"] = {str(k): c for k, c in self.upgrades_by_level.items()}
        return d

    def table_rows(self) -> list[tuple[str, float]]:
        """Physical and investment rows in a fixed order for text tables."""
        rows = [
            ("Total cost ($)", self.total_cost),
            ("Capacity upgrade cost ($)", self.capacity_cost),
            ("TCSC cost ($)", self.tcsc_cost),
            ("Generation cost, all scenarios ($)", self.generation_cost),
            ("Unserved energy, sum (MWh)", self.unserved_mwh),
            ("Unserved energy, mean (MWh)", self.unserved_mwh_mean),
            ("Over-served energy, sum (MWh)", self.overserved_mwh),
            ("Curtailed energy, sum (MWh)", self.curtailed_mwh),
            ("Curtailed energy, mean (MWh)", self.curtailed_mwh_mean),
        ]
        rows += [(f"Upgrades at level {k}", float(c)) for k, c in sorted(self.upgrades_by_level.items())]
        rows.append(("TCSC installed", float(self.tcsc_count)))
        return rows


def _curtailment(net: Network, sc: Scenario, s: int, v) -> list[float]:
    """Per-bus renewable energy left undispatched in scenario ``s``."""
    out = [0.0] * net.n_buses
    for g in net.generators:
        if g.renewable:
            out[g.bus] += max(0.0, sc.pmax_mw[g.id] - v[vname("pg", g.id, s)])
    return out


def summarize_plan(net: Network, scenarios: Sequence[Scenario], costs: CostConfig,
                   sol: SolutionRecord) -> PlanSummary:
    """Cost and energy decomposition.  Scenario energies are one-hour values;
    sums run over scenarios and means divide by their count."""
    v = sol.values
    S = len(scenarios)
    cap_cost = tcsc_cost = 0.0
    levels: dict[int, int] = {}
    tcsc_count = 0
    for br in net.branches:
        gamma = round(v.get(vname("gamma", br.id), 0.0))
        cap_cost += costs.upgrade_cost(br) * gamma
        if gamma > 0:
            levels[gamma] = levels.get(gamma, 0) + 1
        psi = round(v.get(vname("psi", br.id), 0.0))
        tcsc_cost += costs.tcsc_cost(br) * psi
        tcsc_count += psi
    gen = unserved = over = curtailed = 0.0
    for s, sc in enumerate(scenarios):
        gen += sum(g.cost_per_mwh * v[vname("pg", g.id, s)] for g in net.generators)
        unserved += sum(v[vname("xip", b.id, s)] for b in net.buses)
        over += sum(v[vname("xim", b.id, s)] for b in net.buses)
        curtailed += sum(_curtailment(net, sc, s, v))
    lam = costs.imbalance_penalty_per_mwh
    total = cap_cost + tcsc_cost + (gen + lam * (unserved + over)) / S
    return PlanSummary(
        total_cost=total, capacity_cost=cap_cost, tcsc_cost=tcsc_cost, generation_cost=gen,
        unserved_mwh=unserved, overserved_mwh=over, curtailed_mwh=curtailed,
        unserved_mwh_mean=unserved / S, overserved_mwh_mean=over / S,
        curtailed_mwh_mean=curtailed / S, upgrades_by_level=dict(sorted(levels.items())),
        tcsc_count=int(tcsc_count), n_scenarios=S,
    )


# ---------------------------------------------------------------------------
# figure data

GEO_METRICS = ("unserved", "curtailed", "investment")


def geo_rows(net: Network, scenarios: Sequence[Scenario], sol: SolutionRecord,
             metric: str) -> list[tuple[str, float, float, float]]:
    if metric not in GEO_METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {', '.join(GEO_METRICS)}")
    missing = buses_missing_coordinates(net)
    if missing:
        raise GridError(f"buses without coordinates: {', '.join(map(str, missing))}")
    v = sol.values
    S = len(scenarios)
    if metric == "investment":
        rows = []
        for br in net.branches:
            a, b = net.buses[br.from_bus], net.buses[br.to_bus]
            x, y = (a.x_coord + b.x_coord) / 2, (a.y_coord + b.y_coord) / 2
            rows.append((f"branch_{br.id}", x, y, float(round(v.get(vname("gamma", br.id), 0.0)))))
        for br in net.branches:
            if br.tcsc_allowed and vname("psi", br.id) in v:
                a, b = net.buses[br.from_bus], net.buses[br.to_bus]
                x, y = (a.x_coord + b.x_coord) / 2, (a.y_coord + b.y_coord) / 2
                rows.append((f"tcsc_{br.id}", x, y, float(round(v[vname("psi", br.id)]))))
        return rows
    totals = [0.0] * net.n_buses
    for s, sc in enumerate(scenarios):
        per_bus = ([v[vname("xip", b.id, s)] for b in net.buses] if metric == "unserved"
                   else _curtailment(net, sc, s, v))
        totals = [t + p for t, p in zip(totals, per_bus)]
    return [(f"bus_{b.id}", b.x_coord, b.y_coord, totals[b.id] / S) for b in net.buses]


def emit_geo_csv(net: Network, scenarios: Sequence[Scenario], sol: SolutionRecord,
                 metric: str, path: str | Path) -> None:
    """Write ``entity_id,x,y,value`` rows: scenario means per bus, or per-branch
    upgrade level and TCSC flag at the branch midpoint."""
    rows = geo_rows(net, scenarios, sol, metric)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entity_id", "x", "y", "value"])
        for eid, x, y, val in rows:
            w.writerow([eid, repr(float(x)), repr(float(y)), repr(float(val))])
