"""JSON case-file schema and conversion to and from NetworkCase.

The schema only checks shapes and types; physical invariants are enforced by the
domain dataclasses in `swinglib.netmodel.case`.
"""

import logging
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from swinglib.errors import CaseParseError, CaseValidationError
from swinglib.netmodel.case import (
    DEFAULT_D_LOAD,
    Bus,
    BusKind,
    Line,
    LoadParams,
    MachineParams,
    NetworkCase,
    aggregate_lines,
)

logger = logging.getLogger(__name__)


class BusRecord(BaseModel):
    model_config = ConfigDict(extra="forbid", coerce_numbers_to_str=True, allow_inf_nan=False)

    name: str
    kind: BusKind
    V: float
    Pm: float | None = None
    M: float | None = None
    D: float | None = None
    d_load: float | None = None
    Pd: float | None = None
    shunt_b: float | None = None


class LineRecord(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, coerce_numbers_to_str=True, allow_inf_nan=False)

    from_: str = Field(alias="from")
    to: str
    g: float
    b: float
    b_shunt: float | None = None


class CaseFile(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    omega_s: float
    base_mva: float = 100.0
    name: str = ""
    notes: list[str] = Field(default_factory=list)
    buses: list[BusRecord]
    lines: list[LineRecord]


def _bus_from_record(index: int, record: BusRecord) -> Bus:
    if record.kind is BusKind.GENERATOR:
        if record.d_load is not None or record.Pd is not None:
            raise CaseValidationError(f"load_case: generator bus {record.name!r} carries load fields")
        if record.M is None or record.D is None:
            raise CaseValidationError(f"load_case: generator bus {record.name!r} needs both M and D")
        return Bus(
            id=index,
            name=record.name,
            kind=BusKind.GENERATOR,
            V=record.V,
            P_m=record.Pm or 0.0,
            machine=MachineParams(inertia_M=record.M, damping_D=record.D),
            shunt_b=record.shunt_b or 0.0,
        )
    if record.Pm is not None or record.M is not None or record.D is not None:
        raise CaseValidationError(f"load_case: load bus {record.name!r} carries machine fields")
    d_load = DEFAULT_D_LOAD if record.d_load is None else record.d_load
    return Bus(
        id=index,
        name=record.name,
        kind=BusKind.LOAD,
        V=record.V,
        load=LoadParams(freq_coeff=d_load, demand=record.Pd or 0.0),
        shunt_b=record.shunt_b or 0.0,
    )


def case_from_file(data: CaseFile) -> NetworkCase:
    names = [record.name for record in data.buses]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise CaseValidationError(f"load_case: duplicate bus names {duplicates}")

    generators = [record for record in data.buses if record.kind is BusKind.GENERATOR]
    ordered = generators + [record for record in data.buses if record.kind is BusKind.LOAD]
    buses = tuple(_bus_from_record(index, record) for index, record in enumerate(ordered))
    index_of = {bus.name: bus.id for bus in buses}

    lines = []
    for record in data.lines:
        for endpoint in (record.from_, record.to):
            if endpoint not in index_of:
                raise CaseValidationError(f"load_case: line {record.from_}-{record.to} has unknown bus {endpoint!r}")
        lines.append(Line(index_of[record.from_], index_of[record.to], record.g, record.b, record.b_shunt or 0.0))
    merged = aggregate_lines(lines)
    if len(merged) < len(lines):
        logger.debug(f"load_case: aggregated {len(lines) - len(merged)} parallel line(s)")

    return NetworkCase(
        buses=buses,
        lines=merged,
        omega_s=data.omega_s,
        base_mva=data.base_mva,
        name=data.name,
        notes=tuple(data.notes),
    )


def load_case(source: str | bytes) -> NetworkCase:
    """Parses case-file JSON text into a validated NetworkCase with generators ordered first."""
    try:
        data = CaseFile.model_validate_json(source)
    except ValidationError as e:
        raise CaseParseError(f"load_case: {e.error_count()} schema error(s)\n{e}") from e
    return case_from_file(data)


def read_case(path: Path | str) -> NetworkCase:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise CaseParseError(f"read_case: cannot read {path}: {e}") from e
    case = load_case(text)
    logger.debug(f"read_case: {path.name} -> {case.n} buses, {case.n0} generators, {len(case.lines)} lines")
    return case


def case_to_file(case: NetworkCase) -> CaseFile:
    records = []
    for bus in case.buses:
        shunt_b = bus.shunt_b or None
        if bus.is_generator:
            record = BusRecord(
                name=bus.name,
                kind=bus.kind,
                V=bus.V,
                Pm=bus.P_m,
                M=bus.machine.inertia_M,
                D=bus.machine.damping_D,
                shunt_b=shunt_b,
            )
        else:
            record = BusRecord(
                name=bus.name, kind=bus.kind, V=bus.V, d_load=bus.load.freq_coeff, Pd=bus.load.demand, shunt_b=shunt_b
            )
        records.append(record)
    lines = [
        LineRecord(
            from_=case.names[line.from_bus],
            to=case.names[line.to_bus],
            g=line.g,
            b=line.b,
            b_shunt=line.b_shunt or None,
        )
        for line in case.lines
    ]
    return CaseFile(
        omega_s=case.omega_s, base_mva=case.base_mva, name=case.name, notes=list(case.notes), buses=records, lines=lines
    )


def dump_case(case: NetworkCase) -> str:
    """Serializes a case back to case-file JSON; `load_case(dump_case(case)) == case`."""
    return case_to_file(case).model_dump_json(by_alias=True, exclude_none=True, indent=2)


def write_case(case: NetworkCase, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(dump_case(case), encoding="utf-8")
    return path
