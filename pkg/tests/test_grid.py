import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tnep_facts import grid
from tnep_facts.grid import (
    Branch,
    Bus,
    CostConfig,
    Generator,
    GridParseError,
    GridValidationError,
    HourlyTimeSeries,
    Network,
    Scenario,
)

MINIMAL = {
    "base_mva": 100,
    "buses": [{"id": 0, "name": "a"}, {"id": 1, "name": "b"}],
    "branches": [{"id": 0, "from_bus": 0, "to_bus": 1, "reactance_pu": 0.1, "thermal_limit_mw": 100}],
    "generators": [{"id": 0, "bus": 0, "kind": "nonrenewable", "pmin_mw": 0, "pmax_mw": 50,
                    "cost_per_mwh": 12}],
}


def connected(net):
    adj = {b.id: set() for b in net.buses}
    for br in net.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen, todo = {0}, deque([0])
    while todo:
        for nb in adj[todo.popleft()] - seen:
            seen.add(nb)
            todo.append(nb)
    return len(seen) == net.n_buses


def test_load_minimal_network(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps(MINIMAL))
    net = grid.load_network(path)
    assert net.n_buses == 2 and net.n_branches == 1
    assert net.branches[0].susceptance(net.base_mva) == pytest.approx(1000.0)


def test_dangling_branch_names_the_branch(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["branches"][0]["to_bus"] = 99
    path = tmp_path / "g.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(GridValidationError, match="branch 0.*99"):
        grid.load_network(path)


def test_nonpositive_reactance_rejected():
    doc = json.loads(json.dumps(MINIMAL))
    doc["branches"][0]["reactance_pu"] = 0.0
    with pytest.raises(GridValidationError, match="branch 0"):
        grid.network_from_dict(doc)


def test_malformed_file_is_parse_error(tmp_path):
    path = tmp_path / "g.json"
    path.write_text("{not json")
    with pytest.raises(GridParseError):
        grid.load_network(path)
    doc = json.loads(json.dumps(MINIMAL))
    doc["buses"][0]["colour"] = "red"
    with pytest.raises(GridParseError, match="bus entry 0"):
        grid.network_from_dict(doc)


@pytest.mark.parametrize("change, match", [
    ({"from_bus": 1}, "from_bus equals to_bus"),
    ({"angle_min_rad": 0.1}, "branch 0"),
    ({"tcsc_dx_min_frac": -1.0}, "branch 0"),
    ({"tcsc_dx_max_frac": -0.1}, "branch 0"),
    ({"max_upgrades": -1}, "branch 0"),
])
def test_branch_invariants(change, match):
    doc = json.loads(json.dumps(MINIMAL))
    doc["branches"][0].update(change)
    with pytest.raises(GridValidationError, match=match):
        grid.network_from_dict(doc)


def test_renewable_must_be_free_and_flexible():
    doc = json.loads(json.dumps(MINIMAL))
    doc["generators"][0].update(kind="renewable")
    with pytest.raises(GridValidationError, match="generator 0"):
        grid.network_from_dict(doc)


def test_network_json_round_trip(tmp_path):
    net, _ = grid.synth_network(3, 6, 8, 5, 0.4, n_hours=24)
    grid.save_network(net, tmp_path / "n.json")
    assert grid.load_network(tmp_path / "n.json") == net


def _series(loads, avail, techs, seasons=None):
    n = len(loads)
    loads = np.asarray(loads, dtype=float).reshape(n, -1)
    avail = np.asarray(avail, dtype=float).reshape(n, -1)
    return HourlyTimeSeries(
        tuple(f"2030-07-01T{h:02d}:00:00" for h in range(n)),
        tuple(seasons or ["summer"] * n), loads, avail,
        list(range(1, 1 + avail.shape[1])), techs)


def test_scale_identity_and_scalar():
    ts = _series([[10.0], [20.0]], [[1.0], [2.0]], ["wind"])
    same = grid.scale_series(ts, 1, 1, 1)
    np.testing.assert_array_equal(same.load_mw, ts.load_mw)
    np.testing.assert_array_equal(same.renewable_avail_mw, ts.renewable_avail_mw)
    np.testing.assert_allclose(grid.scale_series(ts, 1.5).load_mw.ravel(), [15.0, 30.0])


def test_scale_by_technology():
    # high-renewable case: load 1.5, wind 2, solar 3
    ts = _series(np.ones((3, 2)), np.ones((3, 3)), ["wind", "solar", "wind"])
    out = grid.scale_series(ts, 1.5, 2, 3)
    assert (out.load_mw == 1.5).all()
    np.testing.assert_array_equal(out.renewable_avail_mw[0], [2, 3, 2])


def test_scale_rejects_negative():
    ts = _series([[1.0]], [[1.0]], ["wind"])
    with pytest.raises(ValueError):
        grid.scale_series(ts, -1.0)


def _net_for(n_buses, techs):
    buses = [Bus(i) for i in range(n_buses)]
    branches = [Branch(k, k, k + 1, 0.1, 100.0) for k in range(n_buses - 1)]
    gens = [Generator(0, 0, "nonrenewable", 0.0, 100.0, 10.0)]
    gens += [Generator(k + 1, 0, "renewable", 0.0, 100.0, 0.0, tech=t) for k, t in enumerate(techs)]
    return Network(buses, branches, gens)


def test_constant_series_picks_first_hour():
    net = _net_for(2, ["wind", "solar"])
    ts = _series(np.full((6, 2), 5.0), np.full((6, 2), 1.0), ["wind", "solar"],
                 ["summer"] * 3 + ["winter"] * 3)
    picks = grid.select_scenarios(net, ts)
    assert len(picks) == 10
    assert [p.hour for p in picks] == [0] * 5 + [3] * 5


def test_selection_by_hand():
    # loads [5, 9, 7], renewables [1, 8, 2]: net load [4, 1, 5]
    net = _net_for(1, ["wind"])
    ts = _series([[5], [9], [7], [1]], [[1], [8], [2], [0]], ["wind"], ["summer"] * 3 + ["winter"])
    picks = {p.label: p for p in grid.select_scenarios(net, ts)}
    assert picks["summer_max_load"].hour == 1
    assert picks["summer_max_net_load"].hour == 2
    assert picks["summer_max_wind"].hour == 1
    assert picks["summer_min_wind"].hour == 0
    assert picks["summer_max_load"].pmax_mw == (100.0, 8.0)


def test_selection_needs_both_seasons():
    net = _net_for(1, ["wind"])
    ts = _series([[1], [2]], [[0], [0]], ["wind"])
    with pytest.raises(GridValidationError, match="winter"):
        grid.select_scenarios(net, ts)


def _brute_select(load, avail, techs, seasons):
    """Straight loops over hours; strict comparisons keep the earliest tie."""
    out = []
    techs = np.array(techs)
    for season in ("summer", "winter"):
        hours = [h for h, s in enumerate(seasons) if s == season]
        crits = [
            lambda h: load[h].sum(),
            lambda h: load[h].sum() - avail[h].sum(),
            lambda h: avail[h][techs == "wind"].sum(),
            lambda h: avail[h][techs == "solar"].sum(),
            lambda h: -avail[h][techs == "wind"].sum(),
        ]
        for f in crits:
            best = hours[0]
            for h in hours[1:]:
                if f(h) > f(best):
                    best = h
            out.append(best)
    return out


@given(st.integers(0, 10_000), st.floats(0.5, 3.0), st.floats(0.5, 4.0))
def test_selection_matches_brute_force_after_scaling(seed, load_f, wind_f):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    techs = ["wind", "solar", "wind"]
    seasons = ["summer", "winter"] + list(rng.choice(["summer", "winter", "other"], n - 2))
    ts = _series(rng.integers(0, 5, (n, 2)), rng.integers(0, 5, (n, 3)), techs, seasons)
    ts = grid.scale_series(ts, load_f, wind_f, 1.0)
    net = _net_for(2, techs)
    picks = grid.select_scenarios(net, ts)
    assert [p.hour for p in picks] == _brute_select(ts.load_mw, ts.renewable_avail_mw, techs, seasons)


def test_timeseries_csv_round_trip(tmp_path):
    net, ts = grid.synth_network(5, 4, 4, 4, 0.5, n_hours=48)
    grid.save_timeseries(ts, tmp_path / "t.csv")
    back = grid.load_timeseries(tmp_path / "t.csv", net)
    assert back.timestamps == ts.timestamps and back.seasons == ts.seasons
    assert back.avail_tech == ts.avail_tech
    np.testing.assert_allclose(back.load_mw, ts.load_mw, rtol=1e-5)
    np.testing.assert_allclose(back.renewable_avail_mw, ts.renewable_avail_mw, rtol=1e-5, atol=1e-6)


def test_timeseries_rejects_nonrenewable_column(tmp_path):
    net = _net_for(1, ["wind"])
    (tmp_path / "t.csv").write_text("timestamp,season,load_0,avail_0\n2030-01-01,winter,1,1\n")
    with pytest.raises(GridValidationError, match="avail_0"):
        grid.load_timeseries(tmp_path / "t.csv", net)


def test_scenarios_json_round_trip(tmp_path):
    scen = [Scenario(0, [1.0, 2.0], [0.0], [5.0], label="x", season="summer", hour=3)]
    grid.save_scenarios(scen, tmp_path / "s.json")
    assert grid.load_scenarios(tmp_path / "s.json") == scen


def test_scenario_limits_checked():
    with pytest.raises(GridValidationError, match="generator 0"):
        Scenario(0, [1.0], [5.0], [1.0])


def test_synth_is_deterministic_and_connected():
    a, ta = grid.synth_network(1, 4, 4, 4, 0.5, n_hours=48)
    b, tb = grid.synth_network(1, 4, 4, 4, 0.5, n_hours=48)
    assert a == b
    np.testing.assert_array_equal(ta.load_mw, tb.load_mw)
    assert connected(a)


def test_synth_texas_dimensions():
    net, ts = grid.synth_network(0, *grid.TEXAS_DIMS, n_hours=8760)
    assert (net.n_buses, net.n_branches, net.n_generators) == (123, 255, 292)
    assert len(net.renewable_ids()) == 154
    assert ts.n_hours == 8760
    assert len(grid.select_scenarios(net, ts)) == 10


def test_synth_rejects_too_few_branches():
    with pytest.raises(ValueError):
        grid.synth_network(0, 5, 3, 2, 0.5)


@given(st.integers(0, 2**31), st.integers(2, 12), st.integers(0, 10), st.integers(0, 6),
       st.floats(0, 1))
def test_synth_networks_are_valid(seed, n, extra, g, frac):
    net, ts = grid.synth_network(seed, n, n - 1 + extra, g, frac, n_hours=24)
    grid.validate_network(net)
    assert connected(net)
    for br in net.branches:
        assert 0.01 <= br.reactance_pu <= 0.2 and 100 <= br.thermal_limit_mw <= 2000
    assert ts.load_mw.shape == (24, n)
    assert (ts.renewable_avail_mw <= np.array([net.generators[k].pmax_mw for k in ts.avail_gen_ids]) + 1e-9).all()


def test_cost_config():
    c = CostConfig()
    assert (c.imbalance_penalty_per_mwh, c.capacity_cost_per_mw_km, c.tcsc_cost_per_mva) == (50_000, 124, 2_200)
    br = Branch(0, 0, 1, 0.1, 500.0, length_km=10.0, upgrade_increment_mw=300.0)
    assert c.upgrade_cost(br) == 124 * 10 * 300
    assert c.tcsc_cost(br) == 2_200 * 500
    with pytest.raises(ValueError):
        CostConfig(0.0)
