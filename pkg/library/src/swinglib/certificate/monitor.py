"""Distributed monitoring: one agent per generator, each using only its own constants and measurements.

Agents run concurrently and publish their verdicts over a queue; a separate collector forms
the system-wide conjunction per timestamp.
"""

import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from queue import Queue

import pandas as pd

from swinglib.certificate.assessment import CertificateReport, Verdict, stability_index
from swinglib.errors import InvalidParameterError

logger = logging.getLogger(__name__)

TERMINATOR = object()  # Queue terminator


@dataclass(frozen=True)
class LocalConstants:
    """What a generator stores about itself: its own B_ii, d_i and m_i."""

    bus: int
    name: str
    B_ii: float
    d: float
    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidParameterError(f"LocalConstants: inertia of {self.name!r} must be positive, got {self.m}")


@dataclass(frozen=True)
class MonitorInput:
    """One local measurement sample; V or Q is None when the sample is missing."""

    t: float
    V: float | None
    Q: float | None

    @property
    def is_complete(self) -> bool:
        return self.V is not None and self.Q is not None and math.isfinite(self.V) and math.isfinite(self.Q)


@dataclass(frozen=True)
class AgentVerdict:
    t: float
    bus: int
    name: str
    C: float | None
    verdict: Verdict


class GeneratorAgent:
    def __init__(self, constants: LocalConstants):
        self.constants = constants

    def step(self, sample: MonitorInput) -> AgentVerdict:
        c = self.constants
        if not sample.is_complete:
            return AgentVerdict(sample.t, c.bus, c.name, None, Verdict.STALE)
        C = stability_index(sample.Q, sample.V, c.B_ii, c.d, c.m)
        return AgentVerdict(sample.t, c.bus, c.name, C, Verdict.PASS if C <= 0 else Verdict.FAIL)

    def run(self, samples: Sequence[MonitorInput], queue: Queue) -> int:
        try:
            for sample in samples:
                queue.put(self.step(sample))
        finally:
            queue.put(TERMINATOR)
        return len(samples)


@dataclass(frozen=True)
class MonitorResult:
    verdicts: tuple[AgentVerdict, ...]
    """Ordered by (t, bus)."""
    aggregate: tuple[tuple[float, Verdict], ...]

    def for_bus(self, bus: int) -> list[AgentVerdict]:
        return [v for v in self.verdicts if v.bus == bus]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": [v.t for v in self.verdicts],
                "bus": [v.name for v in self.verdicts],
                "C": [v.C for v in self.verdicts],
                "verdict": [v.verdict.value for v in self.verdicts],
            }
        )


def _conjunction(verdicts: list[Verdict]) -> Verdict:
    if any(v is Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if any(v is Verdict.STALE for v in verdicts):
        return Verdict.STALE
    return Verdict.PASS


def collect(queue: Queue, n_agents: int) -> MonitorResult:
    """Drains agent output until every agent has sent its terminator."""
    received = []
    finished = 0
    while finished < n_agents:
        item = queue.get()
        if item is TERMINATOR:
            finished += 1
            continue
        received.append(item)
    received.sort(key=lambda v: (v.t, v.bus))
    by_time: dict[float, list[Verdict]] = defaultdict(list)
    for item in received:
        by_time[item.t].append(item.verdict)
    aggregate = tuple((t, _conjunction(by_time[t])) for t in sorted(by_time))
    return MonitorResult(tuple(received), aggregate)


def distributed_assess(
    agents: Sequence[tuple[LocalConstants, Sequence[MonitorInput]]],
    workers: int | None = None,
) -> MonitorResult:
    """Runs one GeneratorAgent per stream concurrently; the collector sees only their published verdicts."""
    queue: Queue = Queue()
    with ThreadPoolExecutor(max_workers=workers or max(1, len(agents))) as executor:
        futures = [executor.submit(GeneratorAgent(constants).run, samples, queue) for constants, samples in agents]
        result = collect(queue, len(agents))
        processed = sum(future.result() for future in futures)
    logger.debug(f"distributed_assess: {len(agents)} agent(s) processed {processed} sample(s)")
    return result


def constants_from_report(report: CertificateReport) -> list[LocalConstants]:
    return [LocalConstants(g.bus, g.name, g.B_ii, g.d, g.m) for g in report.generators]


def _measured(value) -> float | None:
    return None if value is None or pd.isna(value) else float(value)


def streams_from_frame(
    frame: pd.DataFrame,
    constants: Sequence[LocalConstants],
) -> list[tuple[LocalConstants, list[MonitorInput]]]:
    """Splits a (t, bus, V, Q) measurement table into per-agent streams on the shared timestamp grid.
    A generator with no row at some timestamp gets a missing sample there."""
    missing = set(frame["bus"].astype(str)) - {c.name for c in constants}
    if missing:
        raise InvalidParameterError(f"streams_from_frame: measurements for unknown generator(s) {sorted(missing)}")
    keys = pd.DataFrame({"t": frame["t"].astype(float), "bus": frame["bus"].astype(str)})
    duplicated = keys[keys.duplicated()]
    if not duplicated.empty:
        pairs = sorted(set(zip(duplicated["t"], duplicated["bus"])))
        raise InvalidParameterError(f"streams_from_frame: repeated (t, bus) samples {pairs}")
    times = sorted(frame["t"].astype(float).unique())
    streams = []
    for c in constants:
        rows = frame[frame["bus"].astype(str) == c.name]
        samples_at = {float(t): (V, Q) for t, V, Q in zip(rows["t"], rows["V"], rows["Q"])}
        samples = []
        for t in times:
            V, Q = samples_at.get(t, (None, None))
            samples.append(MonitorInput(float(t), _measured(V), _measured(Q)))
        streams.append((c, samples))
    return streams
