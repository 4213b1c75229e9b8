"""Command line pipeline: generate -> scenarios -> build -> solve -> verify -> compare -> report.

Exit codes: 0 success, 1 usage error, 2 validation or verification failure,
3 engine limit.  ``TNEP_FACTS_OUT`` overrides ``--out``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, analysis, fixtures, grid, polyhedra
from .formulations import KINDS, BigMMode, BigMPolicy, DisjunctBlockParams, FormulationError, build, build_fbsm
from .milp_core import SolveStatus, model_stats, mps_text, read_solution, write_solution
from .refsolver import BnBConfig, DeskScaleError, solve_milp

log = logging.getLogger("tnep_facts")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class VerificationFailure(Exception):
    pass


class EngineLimit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    inputs: dict[str, str] = field(default_factory=dict)
    input_digests: dict[str, str] = field(default_factory=dict)
    formulation: str | None = None
    bigm: str | None = None
    tighten_bounds: bool | None = None
    emit_eq22: bool | None = None
    seed: int | None = None
    engine: str | None = None
    params: dict = field(default_factory=dict)
    out_dir: str = "."

    @classmethod
    def from_args(cls, args) -> "RunManifest":
        inputs = {k: getattr(args, k) for k in ("network", "timeseries", "scenarios", "solution",
                                                 "solution_dir") if getattr(args, k, None)}
        digests = {k: _digest(p) for k, p in inputs.items() if Path(p).is_file()}
        params = {k: getattr(args, k) for k in ("dims", "fixture", "renewable_fraction", "hours",
                                                 "load_factor", "wind_factor", "solar_factor",
                                                 "penalty", "capacity_rate", "tcsc_rate", "gap",
                                                 "node_limit", "params")
                  if getattr(args, k, None) is not None}
        return cls(
            command=args.command, inputs=inputs, input_digests=digests,
            formulation=getattr(args, "formulation", None), bigm=getattr(args, "bigm", None),
            tighten_bounds=getattr(args, "tighten_bounds", None),
            emit_eq22=getattr(args, "emit_eq22", None), seed=getattr(args, "seed", None),
            engine=getattr(args, "engine", None), params=params,
            out_dir=os.environ.get("TNEP_FACTS_OUT") or args.out,
        )

    def digest(self) -> str:
        """sha256 over everything except the output location."""
        doc = asdict(self)
        doc.pop("out_dir")
        return hashlib.sha256(json.dumps(doc, sort_keys=True, default=list).encode()).hexdigest()

    def write(self, outputs: list[str]) -> Path:
        out = Path(self.out_dir)
        doc = {**asdict(self), "manifest_hash": self.digest(), "version": __version__,
               "outputs": sorted(outputs)}
        path = out / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _out_dir(man: RunManifest) -> Path:
    out = Path(man.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _write_json(path: Path, doc: dict, man: RunManifest) -> None:
    path.write_text(json.dumps({**doc, "manifest_hash": man.digest()}, indent=2, default=str) + "\n")


def _costs(args) -> grid.CostConfig:
    return grid.CostConfig(args.penalty, args.capacity_rate, args.tcsc_rate)


def _load_instance(args):
    if not args.network or not args.scenarios:
        raise UsageError("--network and --scenarios are required")
    return grid.load_network(args.network), grid.load_scenarios(args.scenarios)


def _build(args, net, scenarios, kind=None):
    kind = kind or args.formulation
    costs = _costs(args)
    if kind == "fbsm" and args.bigm == "per-branch":
        return build_fbsm(net, scenarios, costs, BigMPolicy(BigMMode.PER_BRANCH))
    return build(kind, net, scenarios, costs,
                 apply_bound_tightening=args.tighten_bounds, emit_eq22=args.emit_eq22)


def _bigm_policy(args, kind):
    if kind == "fbsm" and args.bigm == "per-branch":
        return BigMPolicy(BigMMode.PER_BRANCH)
    return None


def _validate(args, net, scenarios, kind, sol):
    return analysis.validate_solution(
        net, scenarios, kind, sol, args.tol, apply_bound_tightening=args.tighten_bounds,
        emit_eq22=args.emit_eq22, bigm=_bigm_policy(args, kind))


def _bnb_config(args) -> BnBConfig:
    return BnBConfig(rel_gap=args.gap, node_limit=args.node_limit, time_limit=args.time_limit)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args, man: RunManifest) -> list[str]:
    out = _out_dir(man)
    if args.fixture:
        inst = fixtures.catalogue().get(args.fixture)
        if inst is None:
            raise UsageError(f"unknown fixture {args.fixture!r}; choose from {', '.join(fixtures.catalogue())}")
        grid.save_network(inst.net, out / "network.json")
        grid.save_scenarios(inst.scenarios, out / "scenarios.json")
        print(f"fixture {inst.name}: {inst.net.n_buses} buses, {inst.net.n_branches} branches")
        return ["network.json", "scenarios.json"]
    n, e, g = args.dims
    try:
        net, ts = grid.synth_network(args.seed, n, e, g, args.renewable_fraction, n_hours=args.hours)
    except ValueError as exc:
        raise UsageError(f"bad dimensions {tuple(args.dims)}: {exc}") from None
    grid.save_network(net, out / "network.json")
    grid.save_timeseries(ts, out / "timeseries.csv")
    print(f"network: {net.n_buses} buses, {net.n_branches} branches, {net.n_generators} generators "
          f"({len(net.renewable_ids())} renewable); {ts.n_hours} hours")
    return ["network.json", "timeseries.csv"]


def cmd_scenarios(args, man: RunManifest) -> list[str]:
    if not args.network or not args.timeseries:
        raise UsageError("--network and --timeseries are required")
    out = _out_dir(man)
    net = grid.load_network(args.network)
    ts = grid.load_timeseries(args.timeseries, net)
    ts = grid.scale_series(ts, args.load_factor, args.wind_factor, args.solar_factor)
    scen = grid.select_scenarios(net, ts)
    grid.save_scenarios(scen, out / "scenarios.json")
    for s in scen:
        print(f"{s.id:2d} {s.label:<20} hour {s.hour:5d} {s.timestamp}")
    return ["scenarios.json"]


def cmd_build(args, man: RunManifest) -> list[str]:
    net, scenarios = _load_instance(args)
    out = _out_dir(man)
    model = _build(args, net, scenarios)
    (out / "model.mps").write_text(mps_text(model, f"{args.formulation}_{man.digest()[:12]}"))
    stats = model_stats(model).as_dict()
    _write_json(out / "stats.json", {"formulation": args.formulation, **stats}, man)
    print(json.dumps(stats))
    return ["model.mps", "stats.json"]


def _solve_one(args, net, scenarios, kind):
    model = _build(args, net, scenarios, kind)
    if args.engine == "external":
        if not args.solution:
            raise UsageError("--engine external needs --solution")
        sol = read_solution(args.solution, model)
        return model, sol, None
    sol, stats = solve_milp(model, _bnb_config(args))
    return model, sol, stats


def cmd_solve(args, man: RunManifest) -> list[str]:
    net, scenarios = _load_instance(args)
    out = _out_dir(man)
    try:
        model, sol, stats = _solve_one(args, net, scenarios, args.formulation)
    except DeskScaleError as exc:
        raise EngineLimit(str(exc)) from None
    doc = {"formulation": args.formulation, "engine": args.engine, "status": sol.status.value,
           "objective": sol.objective_value, "bound": sol.bound, "warnings": sol.warnings}
    if stats is not None:
        doc.update(nodes=stats.nodes, gap=stats.gap)
    outputs = ["solve.json"]
    if sol.has_solution:
        rep = _validate(args, net, scenarios, args.formulation, sol)
        doc["validation"] = rep.as_dict()
        doc["summary"] = analysis.summarize_plan(net, scenarios, _costs(args), sol).as_dict()
        if args.engine == "ref":
            write_solution(sol, out / "solution.sol", model.var_names,
                           comments=[f"manifest {man.digest()}"])
            outputs.append("solution.sol")
    _write_json(out / "solve.json", doc, man)
    print(f"{args.formulation}: {sol.status.value} objective {sol.objective_value:.6g}")
    if sol.status is SolveStatus.LIMIT:
        raise EngineLimit(f"search stopped at a limit; bound {sol.bound:.6g}")
    if sol.has_solution and not doc["validation"]["passed"]:
        raise VerificationFailure(f"solution fails families: {', '.join(doc['validation']['failed'])}")
    return outputs


def cmd_verify(args, man: RunManifest) -> list[str]:
    out = _out_dir(man)
    if args.solution:
        net, scenarios = _load_instance(args)
        model = _build(args, net, scenarios)
        sol = read_solution(args.solution, model)
        rep = _validate(args, net, scenarios, args.formulation, sol)
        _write_json(out / "validation.json", rep.as_dict(), man)
        for fam, val in rep.violations.items():
            print(f"{fam:<12} {val:.3e} {'ok' if val <= rep.tol else 'FAIL ' + rep.worst.get(fam, '')}")
        if not rep.passed:
            raise VerificationFailure(f"validation failed: {', '.join(rep.failed_families)}")
        return ["validation.json"]
    tl, tu, bl, bu = args.params
    try:
        p = DisjunctBlockParams(tl, tu, bl, bu)
    except FormulationError as exc:
        raise UsageError(str(exc)) from None
    report = polyhedra.verify_facets(p)
    _write_json(out / "facet_report.json", report.as_dict(), man)
    if p.degenerate:
        log.warning("degenerate parameters (dB_min == dB_max): facet checks not applicable")
    print(json.dumps(report.as_dict(), indent=2))
    if not report.all_facets:
        raise VerificationFailure("some inequalities are not facet-defining")
    return ["facet_report.json"]


def cmd_compare(args, man: RunManifest) -> list[str]:
    net, scenarios = _load_instance(args)
    out = _out_dir(man)
    rows = []
    limited = False
    for kind in KINDS:
        model = _build(args, net, scenarios, kind)
        row = {"formulation": kind, **model_stats(model).as_dict()}
        if args.engine == "external":
            if not args.solution_dir:
                raise UsageError("--engine external needs --solution-dir with <formulation>.sol files")
            path = Path(args.solution_dir) / f"{kind}.sol"
            if not path.is_file():
                row.update(status="missing", objective=math.nan)
            else:
                sol = read_solution(path, model)
                row.update(status=sol.status.value, objective=sol.objective_value, bound=sol.bound)
        else:
            try:
                sol, stats = solve_milp(model, _bnb_config(args))
            except DeskScaleError as exc:
                row.update(status="limit", objective=math.nan, message=str(exc))
                limited = True
            else:
                row.update(status=sol.status.value, objective=sol.objective_value, bound=sol.bound,
                           gap=stats.gap, nodes=stats.nodes)
                limited |= sol.status is SolveStatus.LIMIT
        rows.append(row)

    facts_obj = [r["objective"] for r in rows if r["formulation"] != "tnep" and r["status"] == "optimal"]
    agree = (max(facts_obj) - min(facts_obj) <= args.gap * max(1.0, abs(min(facts_obj)))
             if len(facts_obj) > 1 else None)
    _write_json(out / "compare.json", {"rows": rows, "facts_objectives_agree": agree}, man)
    text = _compare_table(rows)
    (out / "compare.txt").write_text(text)
    print(text, end="")
    for r in rows:
        if r.get("message"):
            print(f"{r['formulation']}: {r['message']}", file=sys.stderr)
    if limited:
        raise EngineLimit("at least one formulation stopped at an engine limit")
    return ["compare.json", "compare.txt"]


def _compare_table(rows) -> str:
    head = f"{'Model':<8} {'Vars':>8} {'Constrs':>9} {'Status':>10} {'Objective':>16} {'Gap':>9} {'Nodes':>7}\n"
    lines = [head]
    for r in rows:
        gap = r.get("gap")
        lines.append(
            f"{r['formulation']:<8} {r['n_vars']:>8,} {r['n_constraints']:>9,} {r['status']:>10} "
            f"{r['objective']:>16.6g} {'' if gap is None else f'{gap:.2e}':>9} {r.get('nodes', ''):>7}\n")
    return "".join(lines)


def cmd_report(args, man: RunManifest) -> list[str]:
    net, scenarios = _load_instance(args)
    if not args.solution:
        raise UsageError("--solution is required")
    out = _out_dir(man)
    model = _build(args, net, scenarios)
    sol = read_solution(args.solution, model)
    summary = analysis.summarize_plan(net, scenarios, _costs(args), sol)
    _write_json(out / "summary.json", summary.as_dict(), man)
    text = "".join(f"{label:<38} {value:>16,.2f}\n" for label, value in summary.table_rows())
    (out / "summary.txt").write_text(text)
    print(text, end="")
    outputs = ["summary.json", "summary.txt"]
    if grid.buses_missing_coordinates(net):
        log.warning("buses lack coordinates; geo CSVs skipped")
        return outputs
    for metric in analysis.GEO_METRICS:
        analysis.emit_geo_csv(net, scenarios, sol, metric, out / f"geo_{metric}.csv")
        outputs.append(f"geo_{metric}.csv")
    return outputs


COMMANDS = {
    "generate": cmd_generate, "scenarios": cmd_scenarios, "build": cmd_build,
    "solve": cmd_solve, "verify": cmd_verify, "compare": cmd_compare, "report": cmd_report,
}


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tnep-facts", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)

    inst = _Parser(add_help=False)
    inst.add_argument("--network")
    inst.add_argument("--scenarios")
    inst.add_argument("--formulation", choices=KINDS, default="facets")
    inst.add_argument("--bigm", choices=("global", "per-branch"), default="global",
                      help="big-M policy for --formulation fbsm")
    inst.add_argument("--tighten-bounds", action=argparse.BooleanOptionalAction, default=True)
    inst.add_argument("--emit-eq22", action=argparse.BooleanOptionalAction, default=True,
                      help="add the redundant |flow change| <= cap * psi rows to the extended model")
    defaults = grid.CostConfig()
    inst.add_argument("--penalty", type=float, default=defaults.imbalance_penalty_per_mwh)
    inst.add_argument("--capacity-rate", type=float, default=defaults.capacity_cost_per_mw_km)
    inst.add_argument("--tcsc-rate", type=float, default=defaults.tcsc_cost_per_mva)
    inst.add_argument("--tol", type=float, default=1e-6)

    engine = _Parser(add_help=False)
    engine.add_argument("--engine", choices=("ref", "external"), default="ref")
    engine.add_argument("--gap", type=float, default=1e-3)
    engine.add_argument("--node-limit", type=int, default=100_000)
    engine.add_argument("--time-limit", type=float, default=math.inf)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic network and time series")
    g.add_argument("--dims", type=int, nargs=3, metavar=("N", "E", "G"), default=list(grid.TEXAS_DIMS[:3]))
    g.add_argument("--renewable-fraction", type=float, default=grid.TEXAS_DIMS[3])
    g.add_argument("--hours", type=int, default=8760)
    g.add_argument("--fixture", help="write a catalogued fixture instead")

    s = sub.add_parser("scenarios", parents=[common], help="select extreme-hour scenarios")
    s.add_argument("--network")
    s.add_argument("--timeseries")
    s.add_argument("--load-factor", type=float, default=1.0)
    s.add_argument("--wind-factor", type=float, default=1.0)
    s.add_argument("--solar-factor", type=float, default=1.0)

    sub.add_parser("build", parents=[common, inst], help="write MPS and model statistics")
    sv = sub.add_parser("solve", parents=[common, inst, engine], help="solve one formulation")
    sv.add_argument("--solution", help="solution file from an external solver")
    v = sub.add_parser("verify", parents=[common, inst], help="facet check or solution validation")
    v.add_argument("--solution")
    v.add_argument("--params", type=float, nargs=4, default=[-0.6, 0.6, -2.0, 3.0],
                   metavar=("THETA_MIN", "THETA_MAX", "DB_MIN", "DB_MAX"))
    c = sub.add_parser("compare", parents=[common, inst, engine], help="compare all four formulations")
    c.add_argument("--solution-dir")
    r = sub.add_parser("report", parents=[common, inst], help="plan summary tables and geo CSVs")
    r.add_argument("--solution")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    man = RunManifest.from_args(args)
    try:
        outputs = COMMANDS[args.command](args, man)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EngineLimit as exc:
        print(f"engine limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (grid.GridError, FormulationError, analysis.ValidationError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    man.write(outputs)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
