"""Catalogued small instances and a random generator of desk-scale instances."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Branch, Bus, CostConfig, Generator, Network, Scenario


@dataclass(frozen=True)
class Instance:
    name: str
    net: Network
    scenarios: tuple[Scenario, ...]
    costs: CostConfig


def two_bus() -> Instance:
    """Generator (200 MW, $10/MWh) at bus 0 feeding 150 MW at bus 1 over a
    100 MW line that one 50 MW upgrade ($100) can relieve; penalty $1000/MWh.
    Optimum: upgrade once, objective 1600."""
    net = Network(
        [Bus(0, "gen", 0.0, 0.0), Bus(1, "load", 2.0, 0.0)],
        [Branch(0, 0, 1, reactance_pu=0.1, thermal_limit_mw=100.0, length_km=2.0,
                angle_min_rad=-0.6, angle_max_rad=0.6, upgrade_increment_mw=50.0,
                max_upgrades=1, tcsc_allowed=False)],
        [Generator(0, 0, "nonrenewable", 0.0, 200.0, 10.0, tech="thermal")],
    )
    sc = Scenario(0, [0.0, 150.0], [0.0], [200.0], label="peak")
    return Instance("two_bus", net, (sc,), CostConfig(1000.0, 1.0, 2200.0))


def three_bus_congestion(tcsc_cost_per_mva: float = 10.0) -> Instance:
    """Wind at bus 0 (300 MW available) serving 200 MW at bus 2.

    The direct branch 0-2 is limited to 100 MW while the two-hop path 0-1-2
    has ample capacity; with equal reactances two thirds of any transfer
    takes the direct branch, so only 150 MW arrive.  A TCSC that weakens the
    direct branch or strengthens the long path pushes more flow around the
    bottleneck.  No upgrades are available.
    """
    kw = dict(angle_min_rad=-0.6, angle_max_rad=0.6, upgrade_increment_mw=50.0, max_upgrades=0)
    net = Network(
        [Bus(0, "wind", 0.0, 0.0), Bus(1, "mid", 50.0, 40.0), Bus(2, "city", 100.0, 0.0)],
        [
            Branch(0, 0, 2, 0.1, 100.0, 100.0, **kw),
            Branch(1, 0, 1, 0.1, 1000.0, 64.0, **kw),
            Branch(2, 1, 2, 0.1, 1000.0, 64.0, **kw),
        ],
        [Generator(0, 0, "renewable", 0.0, 300.0, 0.0, tech="wind")],
    )
    sc = Scenario(0, [0.0, 0.0, 200.0], [0.0], [300.0], label="windy_peak")
    return Instance("three_bus_congestion", net, (sc,), CostConfig(1000.0, 1.0, tcsc_cost_per_mva))


def three_bus_no_tcsc() -> Instance:
    """The congestion fixture with every TCSC option removed."""
    inst = three_bus_congestion()
    branches = [Branch(**{**br.__dict__, "tcsc_allowed": False}) for br in inst.net.branches]
    net = Network(inst.net.buses, branches, inst.net.generators)
    return Instance("three_bus_no_tcsc", net, inst.scenarios, inst.costs)


def catalogue() -> dict[str, Instance]:
    return {f.__name__: f() for f in (two_bus, three_bus_congestion, three_bus_no_tcsc)}


def fbsm_assignments(net: Network, n_scenarios: int) -> int:
    """Integer assignments enumerated for the big-M formulation."""
    count = 1
    for br in net.branches:
        count *= br.max_upgrades + 1
        if br.tcsc_allowed:
            count *= 2 ** (1 + n_scenarios)
    return count


def free_integer_count(net: Network, n_scenarios: int) -> int:
    """Non-fixed integer variables of the extended formulation (the largest)."""
    u = sum(br.max_upgrades > 0 for br in net.branches)
    k = sum(br.tcsc_allowed for br in net.branches)
    return u + k + 2 * k * n_scenarios


def random_small_instance(seed: int, max_buses: int = 5, max_branches: int = 7,
                          max_scenarios: int = 2, max_integers: int = 12,
                          max_assignments: int = 144) -> Instance:
    """Random connected instance within the desk-scale envelope.

    TCSC reactance ranges stay within (-0.4 X, +0.2 X), which keeps the
    branch big-M values valid for the sign disjunction.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_buses + 1))
    e = int(rng.integers(n - 1, max_branches + 1))
    S = int(rng.integers(1, max_scenarios + 1))
    xy = rng.uniform(0, 100, size=(n, 2))
    buses = [Bus(i, f"b{i}", float(xy[i, 0]), float(xy[i, 1])) for i in range(n)]
    order = rng.permutation(n)
    edges = [(int(order[rng.integers(k)]), int(order[k])) for k in range(1, n)]
    while len(edges) < e:
        i, j = (int(v) for v in rng.choice(n, size=2, replace=False))
        edges.append((i, j))

    while True:
        upgradable = rng.random(e) < 0.4
        levels = np.where(upgradable, rng.integers(1, 3, size=e), 0)
        tcsc = rng.random(e) < 0.3
        branches = []
        for k, (i, j) in enumerate(edges):
            theta = float(rng.uniform(0.3, 0.6))
            branches.append(Branch(
                k, i, j,
                reactance_pu=float(rng.uniform(0.05, 0.2)),
                thermal_limit_mw=float(rng.uniform(40, 200)),
                length_km=float(max(1.0, math.dist(xy[i], xy[j]))),
                angle_min_rad=-theta, angle_max_rad=theta,
                upgrade_increment_mw=float(rng.uniform(20, 80)),
                max_upgrades=int(levels[k]),
                tcsc_allowed=bool(tcsc[k]),
                tcsc_dx_min_frac=float(rng.uniform(-0.4, -0.05)),
                tcsc_dx_max_frac=float(rng.uniform(0.05, 0.2)),
            ))
        probe = Network(buses, branches, [])
        if free_integer_count(probe, S) <= max_integers and fbsm_assignments(probe, S) <= max_assignments:
            break

    n_gen = int(rng.integers(1, 4))
    gens = []
    for g in range(n_gen):
        bus = int(rng.integers(n))
        if rng.random() < 0.4:
            gens.append(Generator(g, bus, "renewable", 0.0, float(rng.uniform(100, 400)), 0.0,
                                  tech=str(rng.choice(["wind", "solar"]))))
        else:
            gens.append(Generator(g, bus, "nonrenewable", 0.0, float(rng.uniform(100, 400)),
                                  float(rng.uniform(5, 50)), tech="thermal"))
    net = Network(buses, branches, gens)

    total_cap = sum(g.pmax_mw for g in gens)
    scenarios = []
    for s in range(S):
        share = rng.dirichlet(np.ones(n)) * (rng.random(n) < 0.8)
        if share.sum() == 0:
            share[int(rng.integers(n))] = 1.0
        load = share / share.sum() * total_cap * float(rng.uniform(0.3, 0.9))
        pmax = [g.pmax_mw * (float(rng.uniform(0.2, 1.0)) if g.renewable else 1.0) for g in gens]
        scenarios.append(Scenario(s, load, [0.0] * n_gen, pmax, label=f"s{s}"))
    costs = CostConfig(float(rng.uniform(200, 2000)), float(rng.uniform(0.2, 2.0)),
                       float(rng.uniform(1.0, 30.0)))
    return Instance(f"random_{seed}", net, tuple(scenarios), costs)
