"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected and repeated in the terminal summary, so a plain
``pytest tests/test_acceptance.py`` shows all of them.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from tnep_facts import fixtures, formulations, grid
from tnep_facts.analysis import summarize_plan, validate_solution
from tnep_facts.formulations import DisjunctBlockParams, facets_angle_box
from tnep_facts.milp_core import Sense, model_stats
from tnep_facts.polyhedra import verify_facets
from tnep_facts.refsolver import BnBConfig, brute_force_milp, solve_lp, solve_milp

N_INSTANCES = 200
KINDS = formulations.KINDS
FACTS = ("fbsm", "fbsmi", "facets")
TOL = 1e-6

RESULTS: list[str] = []


def report(number, title, ok, detail=""):
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
    RESULTS.append(line)
    print(line)
    assert ok, line


def close(a, b, rel=1e-6):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# criterion 1


TABLE_SIZES = {
    "tnep": (9_415, 13_980),
    "fbsm": (14_770, 29_280),
    "fbsmi": (14_770, 29_280),
    "facets": (17_320, 36_930),
}


def test_criterion_1_model_sizes():
    net, ts = grid.synth_network(0, *grid.TEXAS_DIMS)
    scen = grid.select_scenarios(net, ts)
    assert len(scen) == 10
    bad, slowest = [], 0.0
    for kind in KINDS:
        start = time.perf_counter()
        model = formulations.build(kind, net, scen, grid.CostConfig(), emit_eq22=False)
        elapsed = time.perf_counter() - start
        slowest = max(slowest, elapsed)
        stats = model_stats(model)
        if (stats.n_vars, stats.n_constraints) != TABLE_SIZES[kind] or elapsed >= 5.0:
            bad.append(f"{kind} {stats.n_vars}/{stats.n_constraints} in {elapsed:.2f}s")
    report(1, "model sizes match exactly, build < 5 s each", not bad,
           "; ".join(bad) or f"slowest build {slowest:.2f}s")


# ---------------------------------------------------------------------------
# criterion 2


def test_criterion_2_facets():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    failures = 0
    for _ in range(1000):
        tl = -rng.uniform(0.01, 1.5)
        tu = rng.uniform(0.01, 1.5)
        bl = -rng.uniform(1e-2, 2e3)
        bu = rng.uniform(1e-2, 2e3)
        rep = verify_facets(DisjunctBlockParams(tl, tu, bl, bu), rtol=1e-9)
        rows = [c for c in rep.checks if c.name not in ("psi_le_1", "zplus_ge_0", "zminus_ge_0")]
        ok = (len(rows) == 8 and rep.hull_dimension == 4
              and all(c.valid and c.affine_rank_of_tight_set == 4 for c in rows))
        failures += not ok
    elapsed = time.perf_counter() - start
    report(2, "8 rows valid and facet-defining on 1000 draws in < 10 s",
           failures == 0 and elapsed < 10.0, f"{failures} failures, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# criteria 3-7 share one pass over the random instance set


@dataclass
class InstanceResult:
    seed: int
    inst: fixtures.Instance
    models: dict = field(default_factory=dict)
    brute: dict = field(default_factory=dict)
    lp: dict = field(default_factory=dict)
    bnb: dict = field(default_factory=dict)
    nodes: dict = field(default_factory=dict)
    untightened: object = None


@pytest.fixture(scope="module")
def instance_set():
    out = []
    for seed in range(N_INSTANCES):
        inst = fixtures.random_small_instance(seed)
        r = InstanceResult(seed, inst)
        for kind in KINDS:
            model = formulations.build(kind, inst.net, inst.scenarios, inst.costs)
            r.models[kind] = model
            r.brute[kind] = brute_force_milp(model)
            r.lp[kind] = solve_lp(model).objective
            runs = [solve_milp(model, BnBConfig(rel_gap=1e-9)) for _ in range(2)]
            r.bnb[kind] = runs[0][0]
            r.nodes[kind] = [stats.nodes for _, stats in runs]
        loose = formulations.build("facets", inst.net, inst.scenarios, inst.costs,
                                   apply_bound_tightening=False)
        r.untightened = brute_force_milp(loose)
        out.append(r)
    return out


def test_criterion_3_equivalence(instance_set):
    net_sizes = [(r.inst.net.n_buses, r.inst.net.n_branches, len(r.inst.scenarios),
                  fixtures.free_integer_count(r.inst.net, len(r.inst.scenarios))) for r in instance_set]
    in_envelope = all(n <= 5 and e <= 7 and s <= 2 and k <= 12 for n, e, s, k in net_sizes)
    bad = []
    for r in instance_set:
        obj = {k: r.brute[k].objective_value for k in KINDS}
        if not all(math.isfinite(v) for v in obj.values()):
            bad.append(f"seed {r.seed} not solved")
            continue
        if not (close(obj["fbsm"], obj["fbsmi"]) and close(obj["fbsm"], obj["facets"])):
            bad.append(f"seed {r.seed} {obj}")
        if obj["tnep"] < max(obj[k] for k in FACTS) - 1e-6 * max(1.0, abs(obj["tnep"])):
            bad.append(f"seed {r.seed} tnep below facts")
    report(3, f"FBSM = FBSMi = FACeTS and TNEP >= FACTS on {len(instance_set)} instances",
           in_envelope and len(instance_set) >= 200 and not bad, "; ".join(bad[:3]))


def test_criterion_4_relaxation_dominance(instance_set):
    bad = []
    for r in instance_set:
        lp = r.lp
        if not (lp["facets"] >= lp["fbsmi"] - 1e-9 and lp["fbsmi"] >= lp["fbsm"] - 1e-9):
            bad.append(f"seed {r.seed} {lp}")
    strict = []
    for name, inst in fixtures.catalogue().items():
        lp = {k: solve_lp(formulations.build(k, inst.net, inst.scenarios, inst.costs)).objective
              for k in ("fbsm", "facets")}
        if lp["facets"] > lp["fbsm"] + 1e-9:
            strict.append(f"{name}: {lp['facets']:.6g} > {lp['fbsm']:.6g}")
    report(4, "LP(FACeTS) >= LP(FBSMi) >= LP(FBSM), strict on a fixture",
           not bad and bool(strict), "; ".join(bad[:3] or strict))


def _angle_limit_rows(model):
    return {c.name: c.rhs for c in model.constraints if c.name.startswith(("angmax", "angmin"))}


def test_criterion_5_bound_tightening(instance_set):
    bad, shrunk = [], 0
    for r in instance_set:
        net = r.inst.net
        tight = facets_angle_box(net, True)
        loose = facets_angle_box(net, False)
        if any(t[0] < l[0] or t[1] > l[1] for t, l in zip(tight, loose)):
            bad.append(f"seed {r.seed} box loosened")
        rows = _angle_limit_rows(r.models["facets"])
        base = _angle_limit_rows(formulations.build(
            "facets", net, r.inst.scenarios, r.inst.costs, apply_bound_tightening=False))
        if not rows or rows.keys() != base.keys():
            bad.append(f"seed {r.seed} angle rows missing")
        for name, rhs in rows.items():
            looser = rhs > base[name] if name.startswith("angmax") else rhs < base[name]
            if looser:
                bad.append(f"seed {r.seed} {name} loosened")
            shrunk += rhs != base[name]
        if not close(r.brute["facets"].objective_value, r.untightened.objective_value):
            bad.append(f"seed {r.seed} objective changed")
    report(5, "tightening keeps every optimum and never loosens a bound", not bad,
           "; ".join(bad[:3]) or f"{shrunk} angle rows strictly tightened")


def test_criterion_6_solver_cross_check(instance_set):
    bad = []
    for r in instance_set:
        for kind in KINDS:
            if not close(r.bnb[kind].objective_value, r.brute[kind].objective_value):
                bad.append(f"seed {r.seed} {kind} objective")
            if r.nodes[kind][0] != r.nodes[kind][1]:
                bad.append(f"seed {r.seed} {kind} nodes {r.nodes[kind]}")
    report(6, "branch-and-bound matches enumeration, node counts repeat", not bad, "; ".join(bad[:3]))


def _active_variables(model, values, tol):
    """Variables appearing in rows whose slack is at most tol."""
    names = set()
    for row in model.constraints:
        lhs = sum(c * values[v] for v, c in row.terms)
        slack = abs(lhs - row.rhs) if row.sense is Sense.EQ else (
            row.rhs - lhs if row.sense is Sense.LE else lhs - row.rhs)
        if slack <= tol:
            names.update(v for v, _ in row.terms)
    return sorted(names)


def test_criterion_7_validation_round_trip(instance_set):
    unvalidated, survived, checked = [], [], 0
    for r in instance_set:
        for kind in KINDS:
            sol = r.brute[kind]
            if not validate_solution(r.inst.net, r.inst.scenarios, kind, sol, TOL).passed:
                unvalidated.append(f"seed {r.seed} {kind}")
                continue
            for name in _active_variables(r.models[kind], sol.values, TOL):
                for step in (10 * TOL, -10 * TOL):
                    values = dict(sol.values)
                    values[name] += step
                    moved = type(sol)(sol.status, sol.objective_value, sol.bound, values)
                    checked += 1
                    if validate_solution(r.inst.net, r.inst.scenarios, kind, moved, TOL).passed:
                        survived.append(f"seed {r.seed} {kind} {name}{step:+g}")
    report(7, "optima validate; every 10*tol perturbation on an active row is caught",
           not unvalidated and not survived and checked > 0,
           "; ".join([f"{checked} perturbations", *(unvalidated + survived)[:3]]))


# ---------------------------------------------------------------------------
# criterion 8


def _energy(inst, kind):
    sol = brute_force_milp(formulations.build(kind, inst.net, inst.scenarios, inst.costs))
    s = summarize_plan(inst.net, inst.scenarios, inst.costs, sol)
    return s.unserved_mwh + s.curtailed_mwh


def test_criterion_8_congestion_relief():
    lines, ok = [], True
    for name, inst in fixtures.catalogue().items():
        tnep = _energy(inst, "tnep")
        facts = _energy(inst, "facets")
        ok &= facts <= tnep + 1e-6
        if name == "three_bus_congestion":
            ok &= facts < tnep - 1e-6
        lines.append(f"{name}: {facts:.6g} vs {tnep:.6g} MWh")
    report(8, "FACTS unserved + curtailed <= TNEP, strictly lower on the congestion fixture",
           ok, "; ".join(lines))
