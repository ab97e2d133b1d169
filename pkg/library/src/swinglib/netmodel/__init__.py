from swinglib.netmodel.admittance import AdmittanceMatrix, build_admittance
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
from swinglib.netmodel.case_file import dump_case, load_case, read_case, write_case
from swinglib.netmodel.random_case import random_case
from swinglib.netmodel.transform import add_line, augment_internal_buses, internal_emf, scale_case

__all__ = [
    "DEFAULT_D_LOAD",
    "AdmittanceMatrix",
    "Bus",
    "BusKind",
    "Line",
    "LoadParams",
    "MachineParams",
    "NetworkCase",
    "add_line",
    "aggregate_lines",
    "augment_internal_buses",
    "build_admittance",
    "dump_case",
    "internal_emf",
    "load_case",
    "random_case",
    "read_case",
    "scale_case",
    "write_case",
]
