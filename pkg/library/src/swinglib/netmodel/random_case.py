import math

import numpy as np

from swinglib.errors import InvalidParameterError
from swinglib.netmodel.case import Bus, BusKind, Line, LoadParams, MachineParams, NetworkCase

OMEGA_60HZ = 2 * math.pi * 60
MIN_BUSES, MAX_BUSES = 2, 6
MAX_INJECTION = 0.3


def random_case(
    rng: np.random.Generator,
    n_buses: int | None = None,
    lossy: bool | None = None,
    extra_line_probability: float = 0.3,
    omega_s: float = OMEGA_60HZ,
    loading: float = 1.0,
) -> NetworkCase:
    """Draws a small connected case with positive parameters and balanced injections.

    Topology is a random spanning tree plus extra lines. Series impedances have x in [0.2, 1.0]
    and, when lossy, r/x in [0, 0.3]. Machine constants are drawn as m in [0.02, 0.3] and
    d in [1, 6] (then scaled by omega_s), load coefficients d_load in [0.5, 2].
    Demands and secondary dispatch are drawn in [0, 0.3 * loading]; the default keeps lines lightly loaded.
    Bus 0 is a generator whose P_m balances the remaining injections.
    """
    n = int(rng.integers(MIN_BUSES, MAX_BUSES + 1)) if n_buses is None else n_buses
    if n < 2:
        raise InvalidParameterError(f"random_case: need at least two buses, got {n}")
    if not (math.isfinite(loading) and loading > 0):
        raise InvalidParameterError(f"random_case: loading must be positive, got {loading}")
    lossy = bool(rng.integers(2)) if lossy is None else lossy
    n0 = int(rng.integers(1, n))

    edges = {(int(rng.integers(k)), k) for k in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_line_probability:
                edges.add((i, j))
    lines = []
    for i, j in sorted(edges):
        x = rng.uniform(0.2, 1.0)
        r = x * rng.uniform(0.0, 0.3) if lossy else 0.0
        lines.append(Line.from_impedance(i, j, r, x))

    demand = rng.uniform(0.0, MAX_INJECTION * loading, size=n - n0)
    dispatch = rng.uniform(0.0, MAX_INJECTION * loading, size=n0)
    dispatch[0] = demand.sum() - dispatch[1:].sum()
    voltages = rng.uniform(0.95, 1.05, size=n)

    buses = []
    for k in range(n0):
        m, d = rng.uniform(0.02, 0.3), rng.uniform(1.0, 6.0)
        buses.append(
            Bus(
                id=k,
                name=f"g{k}",
                kind=BusKind.GENERATOR,
                V=float(voltages[k]),
                P_m=float(dispatch[k]),
                machine=MachineParams(inertia_M=m * omega_s, damping_D=d * omega_s),
            )
        )
    for k in range(n0, n):
        buses.append(
            Bus(
                id=k,
                name=f"l{k}",
                kind=BusKind.LOAD,
                V=float(voltages[k]),
                load=LoadParams(freq_coeff=rng.uniform(0.5, 2.0), demand=float(demand[k - n0])),
            )
        )
    return NetworkCase(buses=tuple(buses), lines=tuple(lines), omega_s=omega_s, name=f"random_{n}bus")
