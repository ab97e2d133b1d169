import json

from swinglib.netmodel import Bus, BusKind, Line, LoadParams, MachineParams, NetworkCase


def two_bus_case(
    d: float = 2.0,
    m: float = 1.0,
    d_load: float = 1.0,
    P: float = 0.0,
    x: float = 0.5,
    shunt_b: float = 0.0,
    copies: int = 1,
) -> NetworkCase:
    """Generator and load joined by a lossless line of reactance x; omega_s = 1 so m = M and d = D."""
    gen = Bus(
        id=0,
        name="gen",
        kind=BusKind.GENERATOR,
        V=1.0,
        P_m=P,
        machine=MachineParams(inertia_M=m, damping_D=d),
        shunt_b=shunt_b,
    )
    load = Bus(id=1, name="load", kind=BusKind.LOAD, V=1.0, load=LoadParams(freq_coeff=d_load, demand=P))
    line = Line(0, 1, 0.0, -copies / x)
    return NetworkCase(buses=(gen, load), lines=(line,), omega_s=1.0, name="two_bus")


def two_bus_text(**overrides) -> str:
    data = {
        "omega_s": 1.0,
        "buses": [
            {"name": "gen", "kind": "generator", "V": 1.0, "Pm": 0.0, "M": 1.0, "D": 2.0},
            {"name": "load", "kind": "load", "V": 1.0, "Pd": 0.0, "d_load": 1.0},
        ],
        "lines": [{"from": "gen", "to": "load", "g": 0.0, "b": -2.0}],
    }
    data.update(overrides)
    return json.dumps(data)
