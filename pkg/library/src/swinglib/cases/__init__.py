from pathlib import Path

from swinglib.netmodel import NetworkCase, read_case

CASES_DIR = Path(__file__).parent
BUNDLED_CASES = ("two_bus", "wscc9")


def bundled_case_path(name: str) -> Path:
    if name not in BUNDLED_CASES:
        raise KeyError(f"bundled_case_path: unknown bundled case {name!r}, choose from {BUNDLED_CASES}")
    return CASES_DIR / f"{name}.json"


def resolve_case_path(case: str | Path) -> Path:
    """Returns the bundled file for a bundled case name, else the argument as a path."""
    if str(case) in BUNDLED_CASES:
        return bundled_case_path(str(case))
    return Path(case)


def load_bundled(name: str) -> NetworkCase:
    return read_case(bundled_case_path(name))
