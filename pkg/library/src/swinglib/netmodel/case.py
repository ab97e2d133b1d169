from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from swinglib.errors import CaseValidationError

DEFAULT_D_LOAD = 0.1
"""Load frequency coefficient (pu power per rad/s) used when a case file omits `d_load`."""


def require_finite(owner: str, **values: float):
    for name, value in values.items():
        if not math.isfinite(value):
            raise CaseValidationError(f"{owner}: {name} must be finite, got {value}")


class BusKind(StrEnum):
    GENERATOR = "generator"
    LOAD = "load"


@dataclass(frozen=True)
class MachineParams:
    """Swing-equation constants of a generator.
    inertia_M is in seconds, damping_D is dimensionless; m = M/omega_s and d = D/omega_s.
    """

    inertia_M: float
    damping_D: float

    def __post_init__(self):
        require_finite("MachineParams", M=self.inertia_M, D=self.damping_D)
        if not self.inertia_M > 0:
            raise CaseValidationError(f"MachineParams: inertia M must be positive, got {self.inertia_M}")
        if not self.damping_D > 0:
            raise CaseValidationError(f"MachineParams: damping D must be positive, got {self.damping_D}")

    def m(self, omega_s: float) -> float:
        return self.inertia_M / omega_s

    def d(self, omega_s: float) -> float:
        return self.damping_D / omega_s


@dataclass(frozen=True)
class LoadParams:
    freq_coeff: float = DEFAULT_D_LOAD
    demand: float = 0.0

    def __post_init__(self):
        require_finite("LoadParams", d_load=self.freq_coeff, Pd=self.demand)
        if not self.freq_coeff > 0:
            raise CaseValidationError(f"LoadParams: frequency coefficient must be positive, got {self.freq_coeff}")


@dataclass(frozen=True)
class Bus:
    id: int
    name: str
    kind: BusKind
    V: float
    P_m: float = 0.0
    machine: MachineParams | None = None
    load: LoadParams | None = None
    shunt_b: float = 0.0

    def __post_init__(self):
        require_finite(f"Bus {self.name!r}", V=self.V, Pm=self.P_m, shunt_b=self.shunt_b)
        if not self.V > 0:
            raise CaseValidationError(f"Bus {self.name!r}: voltage magnitude must be positive, got {self.V}")
        if self.kind is BusKind.GENERATOR and (self.machine is None or self.load is not None):
            raise CaseValidationError(f"Bus {self.name!r}: generator bus needs machine parameters and no load")
        if self.kind is BusKind.LOAD and (self.load is None or self.machine is not None):
            raise CaseValidationError(f"Bus {self.name!r}: load bus needs load parameters and no machine")

    @property
    def is_generator(self) -> bool:
        return self.kind is BusKind.GENERATOR


@dataclass(frozen=True)
class Line:
    """Series branch y = g + jb between two buses; b_shunt is the total line charging, split between the ends."""

    from_bus: int
    to_bus: int
    g: float
    b: float
    b_shunt: float = 0.0

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise CaseValidationError(f"Line {self.from_bus}-{self.to_bus}: endpoints must differ")
        require_finite(f"Line {self.from_bus}-{self.to_bus}", g=self.g, b=self.b, b_shunt=self.b_shunt)
        if self.g < 0 or self.b > 0:
            raise CaseValidationError(f"Line {self.from_bus}-{self.to_bus}: need g >= 0 and b <= 0, got {self.y}")
        if self.g == 0 and self.b == 0:
            raise CaseValidationError(f"Line {self.from_bus}-{self.to_bus}: series admittance is zero")

    @property
    def y(self) -> complex:
        return complex(self.g, self.b)

    @property
    def key(self) -> tuple[int, int]:
        return min(self.from_bus, self.to_bus), max(self.from_bus, self.to_bus)

    @classmethod
    def from_impedance(cls, from_bus: int, to_bus: int, r: float, x: float, b_shunt: float = 0.0) -> Line:
        y = 1 / complex(r, x)
        return cls(from_bus, to_bus, y.real, y.imag, b_shunt)


def aggregate_lines(lines: list[Line]) -> tuple[Line, ...]:
    """Merges parallel lines by admittance addition, keeping first-seen order and orientation."""
    merged: dict[tuple[int, int], Line] = {}
    for line in lines:
        known = merged.get(line.key)
        if known is None:
            merged[line.key] = line
        else:
            merged[line.key] = Line(
                known.from_bus, known.to_bus, known.g + line.g, known.b + line.b, known.b_shunt + line.b_shunt
            )
    return tuple(merged.values())


@dataclass(frozen=True)
class NetworkCase:
    """Structure-preserving network: generator buses occupy indices 0..n0-1, load buses n0..n-1."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    omega_s: float
    base_mva: float = 100.0
    name: str = ""
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        require_finite("NetworkCase", omega_s=self.omega_s, base_mva=self.base_mva)
        if not self.omega_s > 0:
            raise CaseValidationError(f"NetworkCase: omega_s must be positive, got {self.omega_s}")
        if len(self.buses) < 2:
            raise CaseValidationError("NetworkCase: at least two buses are required")
        for index, bus in enumerate(self.buses):
            if bus.id != index:
                raise CaseValidationError(f"NetworkCase: bus {bus.name!r} has id {bus.id}, expected {index}")
        kinds = [bus.is_generator for bus in self.buses]
        if sorted(kinds, reverse=True) != kinds:
            raise CaseValidationError("NetworkCase: generator buses must precede load buses")
        if not any(kinds):
            raise CaseValidationError("NetworkCase: at least one generator bus is required")
        names = [bus.name for bus in self.buses]
        if len(set(names)) != len(names):
            raise CaseValidationError("NetworkCase: bus names must be unique")
        seen = set()
        for line in self.lines:
            if not (0 <= line.from_bus < self.n and 0 <= line.to_bus < self.n):
                raise CaseValidationError(f"NetworkCase: line {line.from_bus}-{line.to_bus} references a missing bus")
            if line.key in seen:
                raise CaseValidationError(f"NetworkCase: parallel lines {line.key} must be aggregated")
            seen.add(line.key)
        if not self.is_connected():
            raise CaseValidationError("NetworkCase: network graph is not connected")

    def is_connected(self) -> bool:
        if not self.lines:
            return False
        rows = [line.from_bus for line in self.lines]
        cols = [line.to_bus for line in self.lines]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        count, _ = connected_components(graph, directed=False)
        return count == 1

    @property
    def n(self) -> int:
        return len(self.buses)

    @cached_property
    def n0(self) -> int:
        return sum(bus.is_generator for bus in self.buses)

    @property
    def generators(self) -> tuple[Bus, ...]:
        return self.buses[: self.n0]

    @property
    def loads(self) -> tuple[Bus, ...]:
        return self.buses[self.n0 :]

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(bus.name for bus in self.buses)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"NetworkCase.index_of: unknown bus {name!r}") from None

    @cached_property
    def voltages(self) -> np.ndarray:
        return np.array([bus.V for bus in self.buses])

    @cached_property
    def m(self) -> np.ndarray:
        return np.array([bus.machine.m(self.omega_s) for bus in self.generators])

    @cached_property
    def d(self) -> np.ndarray:
        return np.array([bus.machine.d(self.omega_s) for bus in self.generators])

    @cached_property
    def d_load(self) -> np.ndarray:
        return np.array([bus.load.freq_coeff for bus in self.loads])

    @cached_property
    def p_mech(self) -> np.ndarray:
        return np.array([bus.P_m for bus in self.generators])

    @cached_property
    def p_demand(self) -> np.ndarray:
        return np.array([bus.load.demand for bus in self.loads])

    @cached_property
    def injections(self) -> np.ndarray:
        """Specified active injection per bus: P_m at generators, -P_d at loads."""
        return np.concatenate([self.p_mech, -self.p_demand])

    def degree(self, index: int) -> int:
        return sum(index in (line.from_bus, line.to_bus) for line in self.lines)

    def lines_at(self, index: int) -> list[Line]:
        return [line for line in self.lines if index in (line.from_bus, line.to_bus)]

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "n0": self.n0,
            "lines": len(self.lines),
            "omega_s": self.omega_s,
            "total_Pm": math.fsum(self.p_mech),
            "total_Pd": math.fsum(self.p_demand),
        }
