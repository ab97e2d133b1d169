import logging
import math
from collections.abc import Sequence
from dataclasses import replace

import numpy as np

from swinglib.errors import InvalidParameterError
from swinglib.netmodel.case import DEFAULT_D_LOAD, Bus, BusKind, Line, LoadParams, NetworkCase, aggregate_lines

logger = logging.getLogger(__name__)

INTERNAL_SUFFIX = "_internal"


def internal_emf(V: float, x: float, P: float, Q: float) -> float:
    """Magnitude of the voltage behind reactance x for a terminal injecting P + jQ at voltage V."""
    return math.hypot(V + x * Q / V, x * P / V)


def augment_internal_buses(
    case: NetworkCase,
    transient_reactances: Sequence[float],
    terminal_injections: tuple[np.ndarray, np.ndarray] | None = None,
    terminal_d_load: float = DEFAULT_D_LOAD,
) -> NetworkCase:
    """Moves every machine to a fictitious internal bus behind its transient reactance x'_d.

    The former generator terminals become zero-demand load buses with frequency coefficient
    `terminal_d_load`. `terminal_injections` are the (P, Q) injections of each generator at its
    terminal, typically taken from a solved equilibrium of the original case; without them P_m and
    Q = 0 are used to size the internal voltage.
    Resulting order: internal generator buses, former terminals, original loads.
    """
    if len(transient_reactances) != case.n0:
        raise InvalidParameterError(
            f"augment_internal_buses: need {case.n0} transient reactances, got {len(transient_reactances)}"
        )
    for bus, x in zip(case.generators, transient_reactances):
        if not x > 0:
            raise InvalidParameterError(f"augment_internal_buses: x'_d of {bus.name!r} must be positive, got {x}")
    if terminal_injections is None:
        P, Q = case.p_mech, np.zeros(case.n0)
    else:
        P, Q = (np.asarray(values, dtype=float) for values in terminal_injections)

    n0 = case.n0
    internal = []
    terminals = []
    for k, (bus, x) in enumerate(zip(case.generators, transient_reactances)):
        internal.append(
            Bus(
                id=k,
                name=f"{bus.name}{INTERNAL_SUFFIX}",
                kind=BusKind.GENERATOR,
                V=internal_emf(bus.V, x, P[k], Q[k]),
                P_m=bus.P_m,
                machine=bus.machine,
            )
        )
        terminals.append(
            Bus(
                id=n0 + k,
                name=bus.name,
                kind=BusKind.LOAD,
                V=bus.V,
                load=LoadParams(freq_coeff=terminal_d_load, demand=0.0),
                shunt_b=bus.shunt_b,
            )
        )
    loads = [replace(bus, id=bus.id + n0) for bus in case.loads]

    lines = [replace(line, from_bus=line.from_bus + n0, to_bus=line.to_bus + n0) for line in case.lines]
    lines += [Line(k, n0 + k, 0.0, -1.0 / x) for k, x in enumerate(transient_reactances)]

    augmented = NetworkCase(
        buses=tuple(internal + terminals + loads),
        lines=tuple(lines),
        omega_s=case.omega_s,
        base_mva=case.base_mva,
        name=f"{case.name}{INTERNAL_SUFFIX}" if case.name else "",
        notes=case.notes,
    )
    logger.debug(f"augment_internal_buses: {case.n} -> {augmented.n} buses")
    return augmented


def add_line(case: NetworkCase, line: Line) -> NetworkCase:
    """Returns a copy of the case with the line added, merged with any existing parallel line."""
    return replace(case, lines=aggregate_lines([*case.lines, line]))


def scale_case(
    case: NetworkCase,
    damping: float = 1.0,
    inertia: float = 1.0,
    load: float = 1.0,
    reference: int = 0,
) -> NetworkCase:
    """Uniform multipliers on every D, every M, and on the loading (P_d and the non-reference P_m)."""
    for label, value in (("damping", damping), ("inertia", inertia), ("load", load)):
        if not value > 0:
            raise InvalidParameterError(f"scale_case: {label} multiplier must be positive, got {value}")

    buses = []
    for bus in case.buses:
        if bus.is_generator:
            machine = replace(
                bus.machine, inertia_M=bus.machine.inertia_M * inertia, damping_D=bus.machine.damping_D * damping
            )
            P_m = bus.P_m if bus.id == reference else bus.P_m * load
            buses.append(replace(bus, machine=machine, P_m=P_m))
        else:
            buses.append(replace(bus, load=replace(bus.load, demand=bus.load.demand * load)))
    return replace(case, buses=tuple(buses))
