"""Grid data model, file ingestion, time-series scaling and scenario selection.

Unit conventions used throughout the package: angles in radians, power in MW,
reactance in per-unit on ``Network.base_mva``.  The susceptance used in flow
equations is ``base_mva / X`` so that a flow in MW is susceptance times angle
difference.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

SEASONS = ("summer", "winter")


class GridError(ValueError):
    """Base class for grid ingestion problems."""


class GridParseError(GridError):
    pass


class GridValidationError(GridError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    name: str = ""
    x_coord: float | None = None
    y_coord: float | None = None


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance_pu: float
    thermal_limit_mw: float
    length_km: float = 0.0
    angle_min_rad: float = -math.pi / 6
    angle_max_rad: float = math.pi / 6
    upgrade_increment_mw: float = 300.0
    max_upgrades: int = 3
    tcsc_allowed: bool = True
    tcsc_dx_min_frac: float = -0.4
    tcsc_dx_max_frac: float = 0.2

    def susceptance(self, base_mva: float) -> float:
        """Susceptance in MW/rad."""
        return base_mva / self.reactance_pu

    @property
    def flow_cap_mw(self) -> float:
        """Thermal limit with every upgrade level installed."""
        return self.thermal_limit_mw + self.max_upgrades * self.upgrade_increment_mw


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    kind: str  # "renewable" | "nonrenewable"
    pmin_mw: float
    pmax_mw: float
    cost_per_mwh: float = 0.0
    tech: str = ""  # free-form tag; "wind" and "solar" drive scale_series

    @property
    def renewable(self) -> bool:
        return self.kind == "renewable"


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        validate_network(self)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    def renewable_ids(self) -> list[int]:
        return [g.id for g in self.generators if g.renewable]

    def to_dict(self) -> dict:
        return {
            "base_mva": self.base_mva,
            "buses": [asdict(b) for b in self.buses],
            "branches": [asdict(br) for br in self.branches],
            "generators": [asdict(g) for g in self.generators],
        }


def validate_network(net: Network) -> None:
    """Check every structural invariant; errors name the offending entity."""
    if not net.buses:
        raise GridValidationError("network has no buses")
    if not net.base_mva > 0:
        raise GridValidationError(f"base_mva must be positive, got {net.base_mva}")
    for k, bus in enumerate(net.buses):
        if bus.id != k:
            raise GridValidationError(f"bus ids must be 0..N-1 in order; bus at position {k} has id {bus.id}")
    n = len(net.buses)
    for k, br in enumerate(net.branches):
        where = f"branch {br.id}"
        if br.id != k:
            raise GridValidationError(f"{where}: branch ids must be 0..E-1 in order (position {k})")
        for end in (br.from_bus, br.to_bus):
            if not 0 <= end < n:
                raise GridValidationError(f"{where}: references unknown bus {end}")
        if br.from_bus == br.to_bus:
            raise GridValidationError(f"{where}: from_bus equals to_bus ({br.from_bus})")
        if not br.reactance_pu > 0:
            raise GridValidationError(f"{where}: reactance_pu must be positive, got {br.reactance_pu}")
        if not br.thermal_limit_mw > 0:
            raise GridValidationError(f"{where}: thermal_limit_mw must be positive, got {br.thermal_limit_mw}")
        if br.length_km < 0:
            raise GridValidationError(f"{where}: negative length_km")
        if not br.angle_min_rad < 0 < br.angle_max_rad:
            raise GridValidationError(f"{where}: angle limits must satisfy min < 0 < max")
        if not br.upgrade_increment_mw > 0:
            raise GridValidationError(f"{where}: upgrade_increment_mw must be positive")
        if br.max_upgrades < 0 or int(br.max_upgrades) != br.max_upgrades:
            raise GridValidationError(f"{where}: max_upgrades must be a non-negative integer")
        if not br.tcsc_dx_min_frac > -1:
            raise GridValidationError(f"{where}: tcsc_dx_min_frac must exceed -1")
        if not br.tcsc_dx_min_frac <= 0 <= br.tcsc_dx_max_frac:
            raise GridValidationError(f"{where}: TCSC range must satisfy dx_min_frac <= 0 <= dx_max_frac")
    for k, g in enumerate(net.generators):
        where = f"generator {g.id}"
        if g.id != k:
            raise GridValidationError(f"{where}: generator ids must be 0..G-1 in order (position {k})")
        if not 0 <= g.bus < n:
            raise GridValidationError(f"{where}: references unknown bus {g.bus}")
        if g.kind not in ("renewable", "nonrenewable"):
            raise GridValidationError(f"{where}: kind must be renewable or nonrenewable, got {g.kind!r}")
        if not 0 <= g.pmin_mw <= g.pmax_mw:
            raise GridValidationError(f"{where}: need 0 <= pmin_mw <= pmax_mw")
        if g.renewable and (g.pmin_mw != 0 or g.cost_per_mwh != 0):
            raise GridValidationError(f"{where}: renewable generators need pmin_mw = 0 and zero cost")


def _build(cls, rows, what):
    out = []
    for k, row in enumerate(rows):
        try:
            out.append(cls(**row))
        except TypeError as exc:
            raise GridParseError(f"{what} entry {k}: {exc}") from None
    return out


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise GridParseError("grid document must be a JSON object")
    try:
        buses = _build(Bus, doc["buses"], "bus")
        branches = _build(Branch, doc.get("branches", []), "branch")
        gens = _build(Generator, doc.get("generators", []), "generator")
    except KeyError as exc:
        raise GridParseError(f"missing key {exc}") from None
    return Network(buses, branches, gens, base_mva=float(doc.get("base_mva", 100.0)))


def load_network(path: str | Path) -> Network:
    """Read and validate a JSON grid file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GridParseError(f"{path}: {exc}") from None
    return network_from_dict(doc)


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=1))


# ---------------------------------------------------------------------------
# time series


@dataclass(frozen=True)
class HourlyTimeSeries:
    """Hourly loads (hours x buses) and renewable availability (hours x renewables).

    ``avail_gen_ids`` names the generator behind each availability column and
    ``avail_tech`` carries its technology tag (used by :func:`scale_series`).
    """

    timestamps: tuple[str, ...]
    seasons: tuple[str, ...]
    load_mw: np.ndarray
    renewable_avail_mw: np.ndarray
    avail_gen_ids: tuple[int, ...]
    avail_tech: tuple[str, ...] = ()

    def __post_init__(self):
        load = np.asarray(self.load_mw, dtype=float)
        avail = np.asarray(self.renewable_avail_mw, dtype=float)
        n = len(self.timestamps)
        if avail.ndim == 1 and avail.size == 0:
            avail = np.zeros((n, 0))
        object.__setattr__(self, "load_mw", load)
        object.__setattr__(self, "renewable_avail_mw", avail)
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "seasons", tuple(self.seasons))
        object.__setattr__(self, "avail_gen_ids", tuple(int(g) for g in self.avail_gen_ids))
        tech = tuple(self.avail_tech) or ("",) * len(self.avail_gen_ids)
        object.__setattr__(self, "avail_tech", tech)
        if len(self.seasons) != n or load.shape[0] != n or avail.shape[0] != n:
            raise GridValidationError("time series rows have inconsistent lengths")
        if avail.shape[1] != len(self.avail_gen_ids) or len(tech) != len(self.avail_gen_ids):
            raise GridValidationError("availability columns do not match generator ids")
        if (load < 0).any() or (avail < 0).any():
            raise GridValidationError("time series entries must be non-negative")

    @property
    def n_hours(self) -> int:
        return len(self.timestamps)


def scale_series(ts: HourlyTimeSeries, load_factor: float = 1.0, wind_factor: float = 1.0,
                 solar_factor: float = 1.0) -> HourlyTimeSeries:
    """Scale loads, wind and solar availability by separate factors.

    Renewable columns whose tech tag is neither wind nor solar are left as is.
    """
    if min(load_factor, wind_factor, solar_factor) < 0:
        raise ValueError("scaling factors must be non-negative")
    factors = np.array([
        wind_factor if t == "wind" else solar_factor if t == "solar" else 1.0
        for t in ts.avail_tech
    ])
    return HourlyTimeSeries(
        ts.timestamps, ts.seasons, ts.load_mw * load_factor,
        ts.renewable_avail_mw * factors, ts.avail_gen_ids, ts.avail_tech,
    )


def load_timeseries(path: str | Path, net: Network | None = None) -> HourlyTimeSeries:
    """Read the time-series CSV (timestamp, season, load_<bus>..., avail_<gen>...)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise GridParseError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    load_cols = [k for k, h in enumerate(header) if h.startswith("load_")]
    avail_cols = [k for k, h in enumerate(header) if h.startswith("avail_")]
    try:
        bus_ids = [int(header[k][5:]) for k in load_cols]
        gen_ids = [int(header[k][6:]) for k in avail_cols]
        data = np.array([[float(r[k]) for k in load_cols + avail_cols] for r in rows]).reshape(
            len(rows), len(load_cols) + len(avail_cols))
    except (ValueError, IndexError) as exc:
        raise GridParseError(f"{path}: {exc}") from None
    if bus_ids != list(range(len(bus_ids))):
        raise GridParseError(f"{path}: load columns must be load_0..load_<N-1> in order")
    tech: tuple[str, ...] = ()
    if net is not None:
        if len(bus_ids) != net.n_buses:
            raise GridValidationError(f"{path}: {len(bus_ids)} load columns for {net.n_buses} buses")
        for g in gen_ids:
            if not (0 <= g < net.n_generators and net.generators[g].renewable):
                raise GridValidationError(f"{path}: avail_{g} is not a renewable generator")
        tech = tuple(net.generators[g].tech for g in gen_ids)
    n_load = len(load_cols)
    return HourlyTimeSeries(
        tuple(r[0] for r in rows), tuple(r[1] for r in rows),
        data[:, :n_load], data[:, n_load:], gen_ids, tech,
    )


def save_timeseries(ts: HourlyTimeSeries, path: str | Path) -> None:
    header = ["timestamp", "season"]
    header += [f"load_{b}" for b in range(ts.load_mw.shape[1])]
    header += [f"avail_{g}" for g in ts.avail_gen_ids]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for h in range(ts.n_hours):
            w.writerow([ts.timestamps[h], ts.seasons[h]]
                       + [f"{v:.6g}" for v in ts.load_mw[h]]
                       + [f"{v:.6g}" for v in ts.renewable_avail_mw[h]])


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    id: int
    pd_mw: tuple[float, ...]
    pmin_mw: tuple[float, ...]
    pmax_mw: tuple[float, ...]
    label: str = ""
    season: str = ""
    hour: int = -1
    timestamp: str = ""

    def __post_init__(self):
        for name in ("pd_mw", "pmin_mw", "pmax_mw"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if len(self.pmin_mw) != len(self.pmax_mw):
            raise GridValidationError(f"scenario {self.id}: pmin/pmax length mismatch")
        for g, (lo, hi) in enumerate(zip(self.pmin_mw, self.pmax_mw)):
            if lo > hi:
                raise GridValidationError(f"scenario {self.id}: generator {g} has pmin > pmax")


def scenario_to_dict(s: Scenario) -> dict:
    return asdict(s)


def save_scenarios(scenarios: Sequence[Scenario], path: str | Path) -> None:
    Path(path).write_text(json.dumps([asdict(s) for s in scenarios], indent=1))


def load_scenarios(path: str | Path) -> list[Scenario]:
    try:
        docs = json.loads(Path(path).read_text())
        return [Scenario(**d) for d in docs]
    except (json.JSONDecodeError, TypeError) as exc:
        raise GridParseError(f"{path}: {exc}") from None


SELECTION_CRITERIA = ("max_load", "max_net_load", "max_wind", "max_solar", "min_wind")


def _criterion_scores(ts: HourlyTimeSeries) -> dict[str, np.ndarray]:
    load = ts.load_mw.sum(axis=1)
    avail = ts.renewable_avail_mw
    tech = np.array(ts.avail_tech, dtype=object)
    wind = avail[:, tech == "wind"].sum(axis=1) if avail.shape[1] else np.zeros(ts.n_hours)
    solar = avail[:, tech == "solar"].sum(axis=1) if avail.shape[1] else np.zeros(ts.n_hours)
    # scores are maximised; the min-wind pick negates
    return {
        "max_load": load,
        "max_net_load": load - avail.sum(axis=1),
        "max_wind": wind,
        "max_solar": solar,
        "min_wind": -wind,
    }


def scenario_for_hour(net: Network, ts: HourlyTimeSeries, hour: int, sid: int = 0,
                      label: str = "") -> Scenario:
    """Scenario for one hour: renewables capped by availability, others at base limits."""
    pmin = [g.pmin_mw for g in net.generators]
    pmax = [g.pmax_mw for g in net.generators]
    for col, gid in enumerate(ts.avail_gen_ids):
        pmin[gid] = 0.0
        pmax[gid] = float(ts.renewable_avail_mw[hour, col])
    return Scenario(sid, ts.load_mw[hour], pmin, pmax, label=label,
                    season=ts.seasons[hour], hour=int(hour), timestamp=ts.timestamps[hour])


def select_scenarios(net: Network, ts: HourlyTimeSeries) -> list[Scenario]:
    """Pick the five extreme hours of summer and of winter (ten scenarios).

    Per season: highest total load, highest net load, highest wind, highest
    solar and lowest wind.  Ties go to the earliest hour; an hour picked by
    several criteria appears once per criterion.
    """
    if ts.load_mw.shape[1] != net.n_buses:
        raise GridValidationError("time series load columns do not match network buses")
    scores = _criterion_scores(ts)
    seasons = np.array(ts.seasons)
    out: list[Scenario] = []
    for season in SEASONS:
        hours = np.flatnonzero(seasons == season)
        if hours.size == 0:
            raise GridValidationError(f"time series has no {season} hours")
        for crit in SELECTION_CRITERIA:
            vals = scores[crit][hours]
            # argmax returns the first occurrence: earliest hour wins ties
            h = int(hours[int(np.argmax(vals))])
            out.append(scenario_for_hour(net, ts, h, sid=len(out), label=f"{season}_{crit}"))
    return out


# ---------------------------------------------------------------------------
# synthetic instances

TEXAS_DIMS = (123, 255, 292, 154 / 292)


def _season_of(ts: datetime) -> str:
    if ts.month in (6, 7, 8):
        return "summer"
    if ts.month in (12, 1, 2):
        return "winter"
    return "other"


def synth_network(seed: int, n_buses: int, n_branches: int, n_gens: int,
                  renewable_fraction: float, n_hours: int = 8760) -> tuple[Network, HourlyTimeSeries]:
    """Random connected network with an hourly series starting 1 January.

    Draw ranges: bus coordinates uniform on a 1000 km square; reactance
    U[0.01, 0.2] pu; thermal limit U[100, 2000] MW; angle limit
    +/- U[0.4, 0.8] rad; length is the Euclidean distance (at least 1 km);
    300 MW upgrade increments, 3 levels.  Renewables alternate wind/solar.
    The topology is a random spanning tree plus extra random edges
    (parallel branches allowed once the simple graph is complete).
    """
    if n_buses < 1:
        raise ValueError("need at least one bus")
    if n_branches < n_buses - 1:
        raise ValueError(f"{n_branches} branches cannot connect {n_buses} buses")
    if n_buses == 1 and n_branches > 0:
        raise ValueError("a single bus cannot carry branches")
    if n_gens < 0 or not 0 <= renewable_fraction <= 1:
        raise ValueError("invalid generator counts")
    if n_hours < 1:
        raise ValueError("need at least one hour")
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 1000, size=(n_buses, 2))
    buses = [Bus(i, f"bus{i}", float(xy[i, 0]), float(xy[i, 1])) for i in range(n_buses)]

    order = rng.permutation(n_buses)
    edges = []
    for k in range(1, n_buses):
        edges.append((int(order[rng.integers(k)]), int(order[k])))
    present = {frozenset(e) for e in edges}
    max_simple = n_buses * (n_buses - 1) // 2
    while len(edges) < n_branches:
        i, j = (int(v) for v in rng.choice(n_buses, size=2, replace=False))
        if frozenset((i, j)) in present and len(present) < max_simple:
            continue
        present.add(frozenset((i, j)))
        edges.append((i, j))

    branches = []
    for k, (i, j) in enumerate(edges):
        theta = float(rng.uniform(0.4, 0.8))
        branches.append(Branch(
            id=k, from_bus=i, to_bus=j,
            reactance_pu=float(rng.uniform(0.01, 0.2)),
            thermal_limit_mw=float(rng.uniform(100, 2000)),
            length_km=max(1.0, float(np.hypot(*(xy[i] - xy[j])))),
            angle_min_rad=-theta, angle_max_rad=theta,
        ))

    n_ren = int(round(n_gens * renewable_fraction))
    gens = []
    gen_bus = rng.integers(n_buses, size=n_gens)
    for g in range(n_gens):
        if g < n_gens - n_ren:
            pmax = float(rng.uniform(100, 1500))
            gens.append(Generator(g, int(gen_bus[g]), "nonrenewable", 0.0, pmax,
                                  float(rng.uniform(5, 80)), tech="thermal"))
        else:
            tech = "wind" if (g - (n_gens - n_ren)) % 2 == 0 else "solar"
            gens.append(Generator(g, int(gen_bus[g]), "renewable", 0.0,
                                  float(rng.uniform(50, 600)), 0.0, tech=tech))
    net = Network(buses, branches, gens)

    start = datetime(2030, 1, 1)
    stamps = [start + timedelta(hours=h) for h in range(n_hours)]
    hod = np.array([s.hour for s in stamps])
    doy = np.array([s.timetuple().tm_yday for s in stamps])
    seasonal = 1.0 + 0.25 * np.cos(2 * np.pi * (doy - 200) / 365)
    daily = 1.0 + 0.2 * np.sin(2 * np.pi * (hod - 9) / 24)
    total_cap = sum(g.pmax_mw for g in gens) or 1.0
    base_load = rng.uniform(0.5, 1.5, size=n_buses)
    base_load *= 0.45 * total_cap / base_load.sum() / 1.5
    noise = rng.normal(1.0, 0.05, size=(n_hours, n_buses)).clip(0.5, 1.5)
    load = (seasonal * daily)[:, None] * base_load[None, :] * noise

    ren = [g for g in gens if g.renewable]
    avail = np.zeros((n_hours, len(ren)))
    sun = np.clip(np.sin(np.pi * (hod - 6) / 12), 0, None) * (1.2 - 0.2 * np.cos(2 * np.pi * (doy - 172) / 365))
    wind_state = np.clip(rng.normal(0.4, 0.2, size=len(ren)), 0, 1)
    wind_path = np.empty((n_hours, len(ren)))
    for h in range(n_hours):
        wind_state = np.clip(0.97 * wind_state + 0.03 * 0.4 + rng.normal(0, 0.05, len(ren)), 0, 1)
        wind_path[h] = wind_state
    for col, g in enumerate(ren):
        shape = wind_path[:, col] if g.tech == "wind" else np.clip(sun * rng.uniform(0.8, 1.0), 0, 1)
        avail[:, col] = g.pmax_mw * shape
    ts = HourlyTimeSeries(
        tuple(s.isoformat() for s in stamps), tuple(_season_of(s) for s in stamps),
        load, avail, [g.id for g in ren], [g.tech for g in ren],
    )
    return net, ts


def buses_missing_coordinates(net: Network) -> list[int]:
    return [b.id for b in net.buses if b.x_coord is None or b.y_coord is None]


@dataclass(frozen=True)
class CostConfig:
    """Penalty and investment rates; defaults are the reference planning rates."""

    imbalance_penalty_per_mwh: float = 50_000.0
    capacity_cost_per_mw_km: float = 124.0
    tcsc_cost_per_mva: float = 2_200.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")

    def upgrade_cost(self, br: Branch) -> float:
        """Objective coefficient of one upgrade level on ``br``."""
        return self.capacity_cost_per_mw_km * br.length_km * br.upgrade_increment_mw

    def tcsc_cost(self, br: Branch) -> float:
        return self.tcsc_cost_per_mva * br.thermal_limit_mw


__all__ = [
    "Bus", "Branch", "Generator", "Network", "HourlyTimeSeries", "Scenario", "CostConfig",
    "GridError", "GridParseError", "GridValidationError", "load_network", "save_network",
    "network_from_dict", "load_timeseries", "save_timeseries", "scale_series",
    "select_scenarios", "scenario_for_hour", "synth_network", "load_scenarios",
    "save_scenarios", "TEXAS_DIMS", "SELECTION_CRITERIA",
]
