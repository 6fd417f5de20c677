"""Reading and writing MATPOWER (version 2) case files.

Only the power-flow part of the format is consumed: ``baseMVA`` and the
``bus``, ``gen`` and ``branch`` matrices. Every other assignment (``gencost``,
``bus_name`` cell arrays, ...) is skipped.
"""
from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

__all__ = [
    "BusKind",
    "BusRecord",
    "GenRecord",
    "BranchRecord",
    "NetworkCase",
    "CaseParseError",
    "MissingSection",
    "MalformedRow",
    "NoSlackBus",
    "DuplicateBusId",
    "DanglingReference",
    "parse_matpower_case",
    "load_case",
    "case_to_text",
    "builtin_case14",
    "fixture_text",
    "validate_case",
]


class BusKind(enum.IntEnum):
    """Bus type codes as used in column 2 of the bus matrix."""

    PQ = 1
    PV = 2
    SLACK = 3
    ISOLATED = 4


@dataclass(frozen=True)
class BusRecord:
    id: int
    bus_kind: BusKind
    pd: float
    qd: float
    gs: float
    bs: float
    vm0: float
    va0: float  # degrees
    base_kv: float
    vmax: float
    vmin: float


@dataclass(frozen=True)
class GenRecord:
    bus: int
    pg: float
    qg: float
    qmax: float
    qmin: float
    vset: float
    status: bool
    pmax: float
    pmin: float


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    tap: float = 1.0
    shift: float = 0.0  # degrees
    status: bool = True


@dataclass(frozen=True)
class NetworkCase:
    """Static grid description. Bus ids are labels; arrays use row order."""

    base_mva: float
    buses: tuple[BusRecord, ...]
    gens: tuple[GenRecord, ...]
    branches: tuple[BranchRecord, ...]
    name: str = field(default="", compare=False)

    @functools.cached_property
    def bus_index(self) -> dict[int, int]:
        """Map from bus id to dense internal index."""
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def bus_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buses], dtype=int)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def pd(self) -> np.ndarray:
        return np.array([b.pd for b in self.buses], dtype=float)

    @property
    def qd(self) -> np.ndarray:
        return np.array([b.qd for b in self.buses], dtype=float)

    @property
    def slack_ids(self) -> list[int]:
        return [b.id for b in self.buses if b.bus_kind == BusKind.SLACK]

    def with_demands(self, pd, qd) -> "NetworkCase":
        """Return a copy whose per-bus demands (MW, MVAr) are replaced."""
        buses = tuple(
            _replace(b, pd=float(p), qd=float(q)) for b, p, q in zip(self.buses, pd, qd)
        )
        return NetworkCase(self.base_mva, buses, self.gens, self.branches, self.name)

    def with_gens(self, gens) -> "NetworkCase":
        return NetworkCase(self.base_mva, self.buses, tuple(gens), self.branches, self.name)


def _replace(record, **changes):
    # dataclasses.replace re-runs __init__ through keyword matching; this is
    # the hot path inside the time loop so build the record directly.
    values = dict(record.__dict__)
    values.update(changes)
    return type(record)(**values)


class CaseParseError(ValueError):
    """Raised when a case file cannot be turned into a NetworkCase.

    ``line`` is the 1-based line number the problem was detected on.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingSection(CaseParseError):
    pass


class MalformedRow(CaseParseError):
    pass


class NoSlackBus(CaseParseError):
    pass


class DuplicateBusId(CaseParseError):
    pass


class DanglingReference(CaseParseError):
    pass


BUS_COLS = 13
GEN_COLS = 10
BRANCH_COLS = 13

_ASSIGN_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_FUNC_RE = re.compile(r"^\s*function\s+\w+\s*=\s*(\w+)")
_CLOSERS = {"[": "]", "{": "}"}


def _strip_comment(line: str) -> str:
    # '%' inside a quoted string is not a comment; case files only quote
    # short literals like the version, so a simple scan is enough.
    quoted = False
    for i, ch in enumerate(line):
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            return line[:i]
    return line


def _collect_sections(text: str):
    """Split case text into scalar assignments and bracketed matrices.

    Returns ``(scalars, matrices, n_lines, func_name)`` where ``matrices`` maps a
    section name to ``(start_line, rows)`` and each row is ``(line, tokens)``.
    """
    scalars: dict[str, tuple[int, str]] = {}
    matrices: dict[str, tuple[int, list[tuple[int, list[str]]]]] = {}
    func_name = ""
    lines = text.splitlines()
    current = None  # (name, closer, start_line, rows)

    for lineno, raw in enumerate(lines, start=1):
        line = _strip_comment(raw)
        if current is None:
            m = _FUNC_RE.match(line)
            if m:
                func_name = m.group(1)
                continue
            m = _ASSIGN_RE.match(line)
            if not m:
                continue
            name, rhs = m.group(1), m.group(2).strip()
            if rhs[:1] in _CLOSERS:
                current = (name, _CLOSERS[rhs[0]], lineno, [])
                line = rhs[1:]
            else:
                scalars[name] = (lineno, rhs.rstrip(";").strip())
                continue

        name, closer, start, rows = current
        done = closer in line
        if done:
            line = line[: line.index(closer)]
        if closer == "]":
            for chunk in line.split(";"):
                tokens = chunk.replace(",", " ").split()
                if tokens:
                    rows.append((lineno, tokens))
        if done:
            matrices[name] = (start, rows)
            current = None

    if current is not None:
        raise MalformedRow(f"unterminated matrix 'mpc.{current[0]}'", current[2])
    return scalars, matrices, len(lines), func_name


def _numbers(tokens: list[str], ncols: int, section: str, lineno: int) -> list[float]:
    if len(tokens) < ncols:
        raise MalformedRow(
            f"{section} row has {len(tokens)} columns, expected at least {ncols}", lineno
        )
    try:
        return [float(tok) for tok in tokens[:ncols]]
    except ValueError:
        bad = next(t for t in tokens[:ncols] if not _is_float(t))
        raise MalformedRow(f"non-numeric token {bad!r} in {section} row", lineno) from None


def _is_float(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _as_int(value: float, what: str, lineno: int) -> int:
    if not np.isfinite(value) or value != int(value):
        raise MalformedRow(f"{what} must be an integer, got {value!r}", lineno)
    return int(value)


def parse_matpower_case(text: str) -> NetworkCase:
    """Parse MATPOWER case text into a :class:`NetworkCase`.

    Branch taps of 0 are normalised to 1.0. Demands, shunts and generator
    outputs keep the file's MW/MVAr units; angles stay in degrees.

    Raises
    ------
    CaseParseError
        One of its subclasses, always carrying the offending line number.
    """
    scalars, matrices, n_lines, func_name = _collect_sections(text)

    if "version" in scalars:
        lineno, raw = scalars["version"]
        if raw.strip("'\"") != "2":
            raise CaseParseError(f"unsupported case format version {raw}", lineno)
    if "baseMVA" not in scalars:
        raise MissingSection("missing 'mpc.baseMVA'", n_lines)
    lineno, raw = scalars["baseMVA"]
    try:
        base_mva = float(raw)
    except ValueError:
        raise MalformedRow(f"baseMVA is not numeric: {raw!r}", lineno) from None
    if not base_mva > 0 or not np.isfinite(base_mva):
        raise MalformedRow(f"baseMVA must be positive, got {raw!r}", lineno)
    for section in ("bus", "gen", "branch"):
        if section not in matrices:
            raise MissingSection(f"missing 'mpc.{section}' matrix", n_lines)

    bus_start, bus_rows = matrices["bus"]
    buses = []
    bus_lines: dict[int, int] = {}
    for lineno, tokens in bus_rows:
        v = _numbers(tokens, BUS_COLS, "bus", lineno)
        bus_id = _as_int(v[0], "bus id", lineno)
        kind_code = _as_int(v[1], "bus type", lineno)
        if kind_code not in (1, 2, 3, 4):
            raise MalformedRow(f"unknown bus type {kind_code}", lineno)
        if bus_id in bus_lines:
            raise DuplicateBusId(
                f"bus {bus_id} already defined on line {bus_lines[bus_id]}", lineno
            )
        bus_lines[bus_id] = lineno
        buses.append(
            BusRecord(
                id=bus_id,
                bus_kind=BusKind(kind_code),
                pd=v[2],
                qd=v[3],
                gs=v[4],
                bs=v[5],
                vm0=v[7],
                va0=v[8],
                base_kv=v[9],
                vmax=v[11],
                vmin=v[12],
            )
        )
    if not any(b.bus_kind == BusKind.SLACK for b in buses):
        raise NoSlackBus("no bus has type 3 (slack)", bus_start)

    gens = []
    for lineno, tokens in matrices["gen"][1]:
        v = _numbers(tokens, GEN_COLS, "gen", lineno)
        bus = _as_int(v[0], "gen bus", lineno)
        if bus not in bus_lines:
            raise DanglingReference(f"gen refers to unknown bus {bus}", lineno)
        gens.append(
            GenRecord(
                bus=bus,
                pg=v[1],
                qg=v[2],
                qmax=v[3],
                qmin=v[4],
                vset=v[5],
                status=v[7] > 0,
                pmax=v[8],
                pmin=v[9],
            )
        )

    branches = []
    for lineno, tokens in matrices["branch"][1]:
        v = _numbers(tokens, BRANCH_COLS, "branch", lineno)
        f = _as_int(v[0], "branch from-bus", lineno)
        t = _as_int(v[1], "branch to-bus", lineno)
        for end in (f, t):
            if end not in bus_lines:
                raise DanglingReference(f"branch refers to unknown bus {end}", lineno)
        branches.append(
            BranchRecord(
                from_bus=f,
                to_bus=t,
                r=v[2],
                x=v[3],
                b=v[4],
                tap=v[8] if v[8] != 0 else 1.0,
                shift=v[9],
                status=v[10] > 0,
            )
        )

    return NetworkCase(base_mva, tuple(buses), tuple(gens), tuple(branches), func_name)


def load_case(path) -> NetworkCase:
    """Parse a case file from disk, or ``builtin:<name>`` for a bundled one."""
    path = str(path)
    if path.startswith("builtin:"):
        return parse_matpower_case(fixture_text(path.split(":", 1)[1]))
    with open(path, encoding="utf-8") as fh:
        return parse_matpower_case(fh.read())


def fixture_text(name: str) -> str:
    """Return the text of a bundled case file (``case14``, ``case2``, ``case3``)."""
    ref = resources.files("gridattacksim") / "data" / f"{name}.m"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return ref.read_text(encoding="utf-8")


@functools.lru_cache(maxsize=None)
def builtin_case14() -> NetworkCase:
    """The IEEE 14-bus case as distributed with MATPOWER.

    Demand sits on buses 2-6 and 9-14; buses 7 and 8 carry none.
    """
    return parse_matpower_case(fixture_text("case14"))


def _fmt(x: float) -> str:
    x = float(x)
    if np.isfinite(x) and x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def case_to_text(case: NetworkCase) -> str:
    """Serialise a case back to MATPOWER text that re-parses field-exact."""
    name = case.name or "case"
    out = [
        f"function mpc = {name}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {_fmt(case.base_mva)};",
        "",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
    ]
    for b in case.buses:
        row = [b.id, int(b.bus_kind), b.pd, b.qd, b.gs, b.bs, 1, b.vm0, b.va0,
               b.base_kv, 1, b.vmax, b.vmin]
        out.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    out += ["];", "", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
            "mpc.gen = ["]
    for g in case.gens:
        row = [g.bus, g.pg, g.qg, g.qmax, g.qmin, g.vset, case.base_mva,
               int(g.status), g.pmax, g.pmin]
        out.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    out += ["];", "",
            "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
            "mpc.branch = ["]
    for br in case.branches:
        row = [br.from_bus, br.to_bus, br.r, br.x, br.b, 0, 0, 0, br.tap, br.shift,
               int(br.status), -360, 360]
        out.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    out += ["];", ""]
    return "\n".join(out)


def validate_case(case: NetworkCase) -> list[str]:
    """Check a case's invariants. Returns one message per violation (empty if valid)."""
    problems = []
    if not case.base_mva > 0:
        problems.append(f"base_mva must be positive, got {case.base_mva}")

    seen: dict[int, int] = {}
    for b in case.buses:
        seen[b.id] = seen.get(b.id, 0) + 1
    for bus_id, count in seen.items():
        if count > 1:
            problems.append(f"bus {bus_id} defined {count} times")

    slacks = case.slack_ids
    if not slacks:
        problems.append("no slack bus")
    elif len(slacks) > 1:
        problems.append("multiple slack buses: " + ", ".join(str(s) for s in slacks))

    for b in case.buses:
        if not b.vmin <= b.vmax:
            problems.append(f"bus {b.id}: vmin {b.vmin} > vmax {b.vmax}")
        if not b.vm0 > 0:
            problems.append(f"bus {b.id}: initial voltage {b.vm0} is not positive")

    kinds = {b.id: b.bus_kind for b in case.buses}
    for i, g in enumerate(case.gens):
        label = f"gen {i} (bus {g.bus})"
        if g.bus not in kinds:
            problems.append(f"{label}: unknown bus")
        elif g.status and kinds[g.bus] not in (BusKind.SLACK, BusKind.PV):
            problems.append(f"{label}: in service on a {kinds[g.bus].name} bus")
        if not g.qmin <= g.qmax:
            problems.append(f"{label}: qmin {g.qmin} > qmax {g.qmax}")
        if not g.pmin <= g.pmax:
            problems.append(f"{label}: pmin {g.pmin} > pmax {g.pmax}")

    for i, br in enumerate(case.branches):
        label = f"branch {i} ({br.from_bus}-{br.to_bus})"
        for end in (br.from_bus, br.to_bus):
            if end not in kinds:
                problems.append(f"{label}: unknown bus {end}")
        if br.from_bus == br.to_bus:
            problems.append(f"{label}: connects a bus to itself")
        if br.status and br.x == 0:
            problems.append(f"{label}: zero series reactance")
    return problems
