"""Reader/writer for the MATPOWER case text format (the DC subset used here).

Only the columns needed for DC dispatch modeling are retained: bus id/type/Pd,
generator limits and status, branch reactance/rating/status, and polynomial
cost rows. Everything else in a row is read and discarded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import MalformedRow, MissingTable, UnsupportedCostModel

REQUIRED_TABLES = ("bus", "gen", "branch", "gencost")

# Minimum field counts per table row (full MATPOWER rows are wider).
_MIN_FIELDS = {"bus": 3, "gen": 10, "branch": 13, "gencost": 4}


@dataclass(frozen=True)
class BusRow:
    bus_id: int
    bus_type: int  # 1=PQ, 2=PV, 3=ref
    pd: float  # MW


@dataclass(frozen=True)
class GenRow:
    bus_id: int
    pmax: float  # MW
    pmin: float  # MW
    status: int


@dataclass(frozen=True)
class BranchRow:
    from_bus: int
    to_bus: int
    x: float  # p.u. reactance
    rate_a: float  # MW, 0 means unlimited
    status: int


@dataclass(frozen=True)
class GenCostRow:
    model: int
    n_coeff: int
    coeffs: tuple[float, ...]  # highest degree first


@dataclass(frozen=True)
class RawCase:
    """Validated raw case: in-service rows only, gencost matched to gen order."""

    base_mva: float
    bus_rows: tuple[BusRow, ...]
    gen_rows: tuple[GenRow, ...]
    branch_rows: tuple[BranchRow, ...]
    gencost_rows: tuple[GenCostRow, ...]
    name: str = "case"


# --------------------------------------------------------------------- parsing


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _tokenize_row(line: str) -> list[str]:
    # rows may end with ';' and use spaces, tabs or commas as separators
    return line.replace(";", " ").replace(",", " ").split()


def _parse_number(tok: str, table: str, line_no: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MalformedRow(table, line_no, f"non-numeric field {tok!r}") from None


def _scan_tables(text: str) -> tuple[float | None, dict[str, list[tuple[int, list[float]]]], str]:
    """Split the case text into numeric rows per table, keeping line numbers."""
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    base_mva: float | None = None
    name = "case"
    current: str | None = None

    open_re = re.compile(r"mpc\.(\w+)\s*=\s*\[")
    base_re = re.compile(r"mpc\.baseMVA\s*=\s*([^;]+);")
    func_re = re.compile(r"function\s+mpc\s*=\s*(\w+)")

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue

        if current is None:
            m = func_re.search(line)
            if m:
                name = m.group(1)
                continue
            m = base_re.search(line)
            if m:
                base_mva = _parse_number(m.group(1).strip(), "baseMVA", line_no)
                continue
            m = open_re.search(line)
            if m:
                current = m.group(1)
                tables.setdefault(current, [])
                line = line[m.end():].strip()
                if not line:
                    continue
                # fall through: data may start on the opening line
            else:
                continue  # version strings, unrelated assignments

        closes = "]" in line
        line = line.replace("]", " ").replace(";", " ; ")
        # a physical line may hold one row (common) — split on ';' found mid-line
        for chunk in line.split(";"):
            toks = _tokenize_row(chunk)
            if toks:
                tables[current].append(
                    (line_no, [_parse_number(t, current, line_no) for t in toks])
                )
        if closes:
            current = None

    return base_mva, tables, name


def _check_width(table: str, line_no: int, row: list[float]) -> None:
    need = _MIN_FIELDS[table]
    if len(row) < need:
        raise MalformedRow(table, line_no, f"expected >= {need} fields, got {len(row)}")


def parse_case(text: str) -> RawCase:
    """Parse MATPOWER case text into a RawCase.

    Out-of-service branches (status 0) and generators (status <= 0) are dropped
    here; gencost rows are matched to generators by order before the drop, so
    either a full-length or an in-service-length gencost table is accepted.
    """
    base_mva, tables, name = _scan_tables(text)

    if base_mva is None:
        raise MissingTable("baseMVA")
    for t in REQUIRED_TABLES:
        if t not in tables or not tables[t]:
            raise MissingTable(t)
    if base_mva <= 0:
        raise MalformedRow("baseMVA", 0, f"base MVA must be positive, got {base_mva}")

    buses = []
    bus_ids = set()
    for line_no, row in tables["bus"]:
        _check_width("bus", line_no, row)
        b = BusRow(bus_id=int(row[0]), bus_type=int(row[1]), pd=row[2])
        if b.bus_id in bus_ids:
            raise MalformedRow("bus", line_no, f"duplicate bus id {b.bus_id}")
        bus_ids.add(b.bus_id)
        buses.append(b)

    gens_all = []
    for line_no, row in tables["gen"]:
        _check_width("gen", line_no, row)
        g = GenRow(bus_id=int(row[0]), pmax=row[8], pmin=row[9], status=int(row[7]))
        if g.bus_id not in bus_ids:
            raise MalformedRow("gen", line_no, f"references unknown bus {g.bus_id}")
        gens_all.append(g)

    branches = []
    for line_no, row in tables["branch"]:
        _check_width("branch", line_no, row)
        br = BranchRow(
            from_bus=int(row[0]), to_bus=int(row[1]), x=row[3],
            rate_a=row[5], status=int(row[10]),
        )
        if br.from_bus not in bus_ids or br.to_bus not in bus_ids:
            raise MalformedRow("branch", line_no, "references unknown bus")
        if br.status != 0 and br.x == 0.0:
            raise MalformedRow("branch", line_no, "zero reactance on in-service branch")
        branches.append(br)

    costs_all = []
    gencost_first_line = tables["gencost"][0][0]
    for line_no, row in tables["gencost"]:
        _check_width("gencost", line_no, row)
        model, n_coeff = int(row[0]), int(row[3])
        if model != 2:
            raise UnsupportedCostModel(
                f"gencost row at line {line_no}: model {model} not supported (polynomial only)"
            )
        if n_coeff not in (2, 3):
            raise UnsupportedCostModel(
                f"gencost row at line {line_no}: {n_coeff} coefficients "
                "(only linear or quadratic polynomials supported)"
            )
        if len(row) < 4 + n_coeff:
            raise MalformedRow("gencost", line_no, f"needs {n_coeff} coefficients")
        costs_all.append(GenCostRow(model=model, n_coeff=n_coeff,
                                    coeffs=tuple(row[4:4 + n_coeff])))

    in_service = [g.status > 0 for g in gens_all]
    gens = [g for g, keep in zip(gens_all, in_service) if keep]
    if len(costs_all) == len(gens_all):
        costs = [c for c, keep in zip(costs_all, in_service) if keep]
    elif len(costs_all) == len(gens):
        costs = costs_all
    else:
        raise MalformedRow(
            "gencost", gencost_first_line,
            f"{len(costs_all)} cost rows for {len(gens_all)} generators "
            f"({len(gens)} in service)",
        )

    return RawCase(
        base_mva=base_mva,
        bus_rows=tuple(buses),
        gen_rows=tuple(gens),
        branch_rows=tuple(b for b in branches if b.status != 0),
        gencost_rows=tuple(costs),
        name=name,
    )


def load_case(path) -> RawCase:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_case(fh.read())


# ------------------------------------------------------------------- writing


def _fmt(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def serialize_case(case: RawCase) -> str:
    """Emit case text that parses back field-identical (round-trip safe)."""
    out = [f"function mpc = {case.name}", "mpc.version = '2';",
           f"mpc.baseMVA = {_fmt(case.base_mva)};", ""]

    out.append("mpc.bus = [")
    for b in case.bus_rows:
        # pad to the standard 13-column width with neutral values
        out.append(f"\t{b.bus_id}\t{b.bus_type}\t{_fmt(b.pd)}\t0\t0\t0\t1\t1\t0\t1\t1\t1.1\t0.9;")
    out.append("];\n")

    out.append("mpc.gen = [")
    for g in case.gen_rows:
        out.append(
            f"\t{g.bus_id}\t0\t0\t0\t0\t1\t{_fmt(0.0)}\t{g.status}\t{_fmt(g.pmax)}\t{_fmt(g.pmin)};"
        )
    out.append("];\n")

    out.append("mpc.branch = [")
    for br in case.branch_rows:
        out.append(
            f"\t{br.from_bus}\t{br.to_bus}\t0\t{_fmt(br.x)}\t0\t{_fmt(br.rate_a)}"
            f"\t0\t0\t0\t0\t{br.status}\t-360\t360;"
        )
    out.append("];\n")

    out.append("mpc.gencost = [")
    for c in case.gencost_rows:
        coeffs = "\t".join(_fmt(v) for v in c.coeffs)
        out.append(f"\t{c.model}\t0\t0\t{c.n_coeff}\t{coeffs};")
    out.append("];")
    return "\n".join(out) + "\n"


def case_summary(case: RawCase) -> dict:
    """Small structured overview used by the CLI."""
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "n_bus": len(case.bus_rows),
        "n_gen": len(case.gen_rows),
        "n_branch": len(case.branch_rows),
        "total_demand_mw": sum(b.pd for b in case.bus_rows),
        "total_gen_cap_mw": sum(g.pmax for g in case.gen_rows),
    }
