"""Solver-agnostic MILP representation, MPS exchange and solution files."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

INF = math.inf


class Integrality(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Sense(str, enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class VariableDef:
    name: str
    lower: float = 0.0
    upper: float = INF
    integrality: Integrality = Integrality.CONTINUOUS

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ModelError(f"variable {self.name}: lower {self.lower} > upper {self.upper}")
        if self.integrality is Integrality.BINARY and not (self.lower >= 0 and self.upper <= 1):
            raise ModelError(f"variable {self.name}: binary bounds must lie within [0, 1]")

    @property
    def is_integer(self) -> bool:
        return self.integrality is not Integrality.CONTINUOUS


@dataclass(frozen=True)
class LinearConstraintDef:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: Sense
    rhs: float

    def __post_init__(self):
        seen = set()
        for var, coef in self.terms:
            if var in seen:
                raise ModelError(f"constraint {self.name}: duplicate variable {var}")
            if not math.isfinite(coef):
                raise ModelError(f"constraint {self.name}: non-finite coefficient on {var}")
            seen.add(var)
        if not math.isfinite(self.rhs):
            raise ModelError(f"constraint {self.name}: non-finite rhs")

    def activity(self, values: Mapping[str, float]) -> float:
        return sum(coef * values[var] for var, coef in self.terms)

    def violation(self, values: Mapping[str, float]) -> float:
        lhs = self.activity(values)
        if self.sense is Sense.LE:
            return max(0.0, lhs - self.rhs)
        if self.sense is Sense.GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class ModelIR:
    """A minimisation MILP with named variables and rows.

    ``metadata`` records the formulation kind, dimensions and build flags.
    """

    variables: list[VariableDef] = field(default_factory=list)
    constraints: list[LinearConstraintDef] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    metadata: dict = field(default_factory=dict)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def add_var(self, name: str, lower: float = 0.0, upper: float = INF,
                integrality: Integrality = Integrality.CONTINUOUS, cost: float = 0.0) -> str:
        if name in self._index:
            raise ModelError(f"duplicate variable {name}")
        self._index[name] = len(self.variables)
        self.variables.append(VariableDef(name, lower, upper, integrality))
        if cost:
            self.objective[name] = self.objective.get(name, 0.0) + cost
        return name

    def add_constr(self, name: str, terms: Iterable[tuple[str, float]], sense: Sense | str,
                   rhs: float) -> LinearConstraintDef:
        merged: dict[str, float] = {}
        for var, coef in terms:
            if var not in self._index:
                raise ModelError(f"constraint {name}: unknown variable {var}")
            merged[var] = merged.get(var, 0.0) + coef
        row = LinearConstraintDef(name, tuple(merged.items()), Sense(sense), float(rhs))
        self.constraints.append(row)
        return row

    def index(self, name: str) -> int:
        return self._index[name]

    def var(self, name: str) -> VariableDef:
        return self.variables[self._index[name]]

    def has_var(self, name: str) -> bool:
        return name in self._index

    @property
    def var_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def check(self) -> None:
        """Verify that every referenced variable is declared."""
        for row in self.constraints:
            for var, _ in row.terms:
                if var not in self._index:
                    raise ModelError(f"constraint {row.name}: unknown variable {var}")
        for var in self.objective:
            if var not in self._index:
                raise ModelError(f"objective: unknown variable {var}")

    def objective_value(self, values: Mapping[str, float]) -> float:
        return self.objective_constant + sum(c * values[v] for v, c in self.objective.items())

    def relaxed(self) -> "ModelIR":
        """Copy with every integrality requirement dropped."""
        out = ModelIR(
            [VariableDef(v.name, v.lower, v.upper) for v in self.variables],
            list(self.constraints), dict(self.objective), self.objective_constant,
            dict(self.metadata, relaxed=True), dict(self._index),
        )
        return out

    def to_arrays(self) -> "ArrayForm":
        n = len(self.variables)
        m = len(self.constraints)
        A = np.zeros((m, n))
        for i, row in enumerate(self.constraints):
            for var, coef in row.terms:
                A[i, self._index[var]] = coef
        c = np.zeros(n)
        for var, coef in self.objective.items():
            c[self._index[var]] = coef
        return ArrayForm(
            c=c, A=A,
            sense=np.array([r.sense.value for r in self.constraints], dtype=object),
            b=np.array([r.rhs for r in self.constraints], dtype=float),
            lb=np.array([v.lower for v in self.variables], dtype=float),
            ub=np.array([v.upper for v in self.variables], dtype=float),
            integer=np.array([v.is_integer for v in self.variables], dtype=bool),
            constant=self.objective_constant,
            names=self.var_names,
        )


@dataclass
class ArrayForm:
    """Dense matrix view of a ModelIR: min c.x + constant, A x (sense) b, lb <= x <= ub."""

    c: np.ndarray
    A: np.ndarray
    sense: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    constant: float
    names: list[str]


@dataclass
class SolutionRecord:
    status: SolveStatus
    objective_value: float = math.nan
    bound: float = math.nan
    values: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE)


@dataclass(frozen=True)
class ModelStats:
    n_vars: int
    n_binary: int
    n_integer: int
    n_constraints: int

    def as_dict(self) -> dict:
        return {"n_vars": self.n_vars, "n_binary": self.n_binary,
                "n_integer": self.n_integer, "n_constraints": self.n_constraints}


def model_stats(model: ModelIR) -> ModelStats:
    """Counts of declared variables and rows; variable bounds are not rows."""
    n_bin = sum(v.integrality is Integrality.BINARY for v in model.variables)
    n_int = sum(v.integrality is Integrality.INTEGER for v in model.variables)
    return ModelStats(len(model.variables), n_bin, n_int, len(model.constraints))


# ---------------------------------------------------------------------------
# MPS

OBJ_ROW = "obj"


def _num(x: float) -> str:
    return f"{x:.17g}"


def mps_text(model: ModelIR, name: str | None = None) -> str:
    """Free-format MPS; rows and columns appear in declaration order."""
    model.check()
    name = name or str(model.metadata.get("kind", "model"))
    lines = [f"NAME {name}", "ROWS", f" N {OBJ_ROW}"]
    sense_code = {Sense.LE: "L", Sense.GE: "G", Sense.EQ: "E"}
    for row in model.constraints:
        lines.append(f" {sense_code[row.sense]} {row.name}")

    columns: dict[str, list[tuple[str, float]]] = {v.name: [] for v in model.variables}
    for var, coef in model.objective.items():
        if coef:
            columns[var].append((OBJ_ROW, coef))
    for row in model.constraints:
        for var, coef in row.terms:
            columns[var].append((row.name, coef))

    lines.append("COLUMNS")
    in_int = False
    n_markers = 0
    for v in model.variables:
        if v.is_integer and not in_int:
            lines.append(f" MARKER{n_markers} 'MARKER' 'INTORG'")
            n_markers += 1
            in_int = True
        elif not v.is_integer and in_int:
            lines.append(f" MARKER{n_markers} 'MARKER' 'INTEND'")
            n_markers += 1
            in_int = False
        entries = columns[v.name]
        if not entries:
            # keep the column visible to readers even without coefficients
            entries = [(OBJ_ROW, 0.0)]
        for row_name, coef in entries:
            lines.append(f" {v.name} {row_name} {_num(coef)}")
    if in_int:
        lines.append(f" MARKER{n_markers} 'MARKER' 'INTEND'")

    lines.append("RHS")
    if model.objective_constant:
        lines.append(f" RHS {OBJ_ROW} {_num(-model.objective_constant)}")
    for row in model.constraints:
        if row.rhs:
            lines.append(f" RHS {row.name} {_num(row.rhs)}")

    lines.append("BOUNDS")
    for v in model.variables:
        lo, up = v.lower, v.upper
        if lo == up:
            lines.append(f" FX BND {v.name} {_num(lo)}")
            continue
        if lo == -INF and up == INF:
            lines.append(f" FR BND {v.name}")
            continue
        if lo == -INF:
            lines.append(f" MI BND {v.name}")
        elif lo != 0 or v.is_integer:
            lines.append(f" LO BND {v.name} {_num(lo)}")
        if up != INF:
            lines.append(f" UP BND {v.name} {_num(up)}")
        elif v.is_integer:
            lines.append(f" PL BND {v.name}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def write_mps(model: ModelIR, path: str | Path) -> None:
    Path(path).write_text(mps_text(model))


def read_mps(path: str | Path) -> ModelIR:
    """Parse a free-format MPS file (the subset written by :func:`write_mps`
    plus the usual RANGES-free variants)."""
    model = ModelIR()
    rows: dict[str, Sense | None] = {}
    row_terms: dict[str, list[tuple[str, float]]] = {}
    rhs: dict[str, float] = {}
    obj_name = None
    bounds: dict[str, list[float]] = {}
    kinds: dict[str, bool] = {}
    order: list[str] = []
    obj: dict[str, float] = {}
    section = None
    in_int = False
    const = 0.0
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            tokens = raw.split()
            section = tokens[0].upper()
            if section == "ENDATA":
                break
            continue
        tok = raw.split()
        if section == "ROWS":
            code, rname = tok[0].upper(), tok[1]
            if code == "N":
                if obj_name is None:
                    obj_name = rname
                rows[rname] = None
            else:
                rows[rname] = {"L": Sense.LE, "G": Sense.GE, "E": Sense.EQ}[code]
                row_terms[rname] = []
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'").upper() == "MARKER":
                in_int = tok[2].strip("'").upper() == "INTORG"
                continue
            col = tok[0]
            if col not in kinds:
                kinds[col] = in_int
                order.append(col)
            for rname, val in zip(tok[1::2], tok[2::2]):
                v = float(val)
                if rname == obj_name:
                    obj[col] = obj.get(col, 0.0) + v
                elif rows.get(rname, None) is not None or rname in row_terms:
                    row_terms[rname].append((col, v))
                else:
                    raise ModelError(f"column {col} references unknown row {rname}")
        elif section == "RHS":
            pairs = tok[1:] if len(tok) % 2 == 1 else tok
            for rname, val in zip(pairs[0::2], pairs[1::2]):
                if rname == obj_name:
                    const = -float(val)
                else:
                    rhs[rname] = float(val)
        elif section == "BOUNDS":
            code, col = tok[0].upper(), tok[2]
            lo_up = bounds.setdefault(col, [0.0, INF])
            val = float(tok[3]) if len(tok) > 3 else None
            if code == "UP":
                lo_up[1] = val
            elif code == "LO":
                lo_up[0] = val
            elif code == "FX":
                lo_up[0] = lo_up[1] = val
            elif code == "FR":
                lo_up[0], lo_up[1] = -INF, INF
            elif code == "MI":
                lo_up[0] = -INF
            elif code == "PL":
                lo_up[1] = INF
            elif code == "BV":
                lo_up[0], lo_up[1] = 0.0, 1.0
                kinds[col] = True
            else:
                raise ModelError(f"unsupported bound type {code}")
        elif section in ("RANGES", "SOS", "QUADOBJ"):
            raise ModelError(f"unsupported MPS section {section}")
    for col in order:
        lo, up = bounds.get(col, [0.0, INF])
        kind = Integrality.CONTINUOUS
        if kinds[col]:
            kind = Integrality.BINARY if lo >= 0 and up <= 1 else Integrality.INTEGER
        model.add_var(col, lo, up, kind, cost=obj.get(col, 0.0))
    for rname, sense in rows.items():
        if sense is None:
            continue
        model.add_constr(rname, row_terms[rname], sense, rhs.get(rname, 0.0))
    model.objective_constant = const
    return model


# ---------------------------------------------------------------------------
# solution files

_STATUS_WORDS = {
    "optimal": SolveStatus.OPTIMAL,
    "feasible": SolveStatus.FEASIBLE,
    "suboptimal": SolveStatus.FEASIBLE,
    "infeasible": SolveStatus.INFEASIBLE,
    "unbounded": SolveStatus.UNBOUNDED,
    "limit": SolveStatus.LIMIT,
    "time_limit": SolveStatus.LIMIT,
    "node_limit": SolveStatus.LIMIT,
    "iteration_limit": SolveStatus.LIMIT,
    "gap_limit": SolveStatus.OPTIMAL,
}


def parse_status(word: str) -> SolveStatus:
    try:
        return _STATUS_WORDS[word.strip().lower()]
    except KeyError:
        raise ModelError(f"unknown solution status {word!r}") from None


def read_solution(path: str | Path, model: ModelIR) -> SolutionRecord:
    """Read a solution file.

    Native layout::

        # status optimal
        # objective 1600
        # bound 1600            (optional)
        gamma_0 1
        ...

    Gurobi ``.sol`` files are accepted too: their ``# Objective value = v``
    header maps to the objective, and since Gurobi only writes files for
    solutions it found, the status defaults to ``feasible``.  Variables the
    file omits default to 0 and are listed in ``warnings``; unknown names are
    an error.
    """
    status = None
    objective = math.nan
    bound = math.nan
    values: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            low = body.lower()
            if low.startswith("status"):
                status = parse_status(body.split()[1])
            elif low.startswith("objective value"):
                objective = float(body.split("=")[1])
            elif low.startswith("objective"):
                objective = float(body.split()[1])
            elif low.startswith("bound"):
                bound = float(body.split()[1])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ModelError(f"{path}:{lineno}: expected '<name> <value>'")
        name, val = parts
        if not model.has_var(name):
            raise ModelError(f"{path}:{lineno}: variable {name} is not in the model")
        values[name] = float(val)
    if status is None:
        status = SolveStatus.FEASIBLE if values else SolveStatus.INFEASIBLE
    warnings = []
    if status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE):
        for v in model.variables:
            if v.name not in values:
                values[v.name] = 0.0
                warnings.append(f"{v.name} missing, set to 0")
        if warnings:
            log.warning("%d variables missing from %s", len(warnings), path)
    return SolutionRecord(status, objective, bound, values, warnings)


def write_solution(sol: SolutionRecord, path: str | Path, names: Sequence[str] | None = None,
                   comments: Sequence[str] = ()) -> None:
    """Native layout; ``comments`` become extra ``#`` lines that readers skip."""
    lines = [f"# {c}" for c in comments]
    lines += [f"# status {sol.status.value}", f"# objective {_num(sol.objective_value)}"]
    if not math.isnan(sol.bound):
        lines.append(f"# bound {_num(sol.bound)}")
    for name in names or list(sol.values):
        lines.append(f"{name} {_num(sol.values[name])}")
    Path(path).write_text("\n".join(lines) + "\n")
