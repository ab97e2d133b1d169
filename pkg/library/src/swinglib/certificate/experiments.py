"""Randomized experiments around the certificate: soundness against the spectrum and line-addition flips."""

import logging
from collections.abc import Iterable, Iterator
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from pydantic import BaseModel

from swinglib.certificate.assessment import BraessImpact, Verdict, assess_theorem1, line_addition_impact
from swinglib.dynamics import Model
from swinglib.equilibrium import solve_equilibrium
from swinglib.errors import PowerFlowError
from swinglib.linearization import eigenvalues, flow_jacobian, system_jacobian
from swinglib.netmodel import NetworkCase, add_line, build_admittance, random_case

logger = logging.getLogger(__name__)

STABLE_REAL_BOUND = -1e-9
LOADING_RANGE = (1.0, 4.0)
RANDOM_START_SHARE = 0.25


class SoundnessOutcome(BaseModel):
    trial: int
    n: int
    n0: int
    loading: float = 1.0
    random_start: bool = False
    solved: bool
    assumption1: bool = False
    certified: bool = False
    zero_count: int | None = None
    max_nonzero_real: float | None = None

    @property
    def stable(self) -> bool:
        return self.zero_count == 1 and self.max_nonzero_real is not None and self.max_nonzero_real < STABLE_REAL_BOUND

    @property
    def counterexample(self) -> bool:
        return self.certified and not self.stable


class SoundnessSummary(BaseModel):
    seed: int
    eps: float
    trials: int
    solved: int
    assumption1: int
    certified: int
    certified_stable: int
    uncertified_stable: int
    counterexamples: list[int]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def check_case(
    case: NetworkCase,
    eps: float,
    trial: int = 0,
    init: np.ndarray | None = None,
    loading: float = 1.0,
) -> SoundnessOutcome:
    """Solves, certifies and eigensolves one case at the given eps.
    Newton starts flat unless `init` is given; other starts can reach equilibria off the flat-start branch."""
    Y = build_admittance(case)
    drawn = {"trial": trial, "n": case.n, "n0": case.n0, "loading": loading, "random_start": init is not None}
    try:
        eq = solve_equilibrium(case, Y, init=init)
    except PowerFlowError as e:
        logger.debug(f"check_case: trial {trial} skipped, {e}")
        return SoundnessOutcome(**drawn, solved=False)
    report = assess_theorem1(case, Y, eq)
    J = system_jacobian(flow_jacobian(case, Y, eq), case, Model.perturbed(eps))
    spectrum = eigenvalues(J.matrix)
    return SoundnessOutcome(
        **drawn,
        solved=True,
        assumption1=bool(report.assumption1_pass),
        certified=report.theorem1_all_pass,
        zero_count=spectrum.zero_count,
        max_nonzero_real=spectrum.max_nonzero_real,
    )


def iter_soundness(
    trials: int, seed: int = 42, eps: float = 1e-3, workers: int | None = None
) -> Iterator[SoundnessOutcome]:
    """Yields one outcome per random 2-6 bus case, in trial order; trial k draws from rng([seed, k]).

    Each trial scales its injections by a loading factor drawn from LOADING_RANGE, and a
    RANDOM_START_SHARE of trials start Newton from uniform random angles, so the set covers
    power-flow failures and equilibria where the line-angle condition does not hold.
    """

    def run(trial: int) -> SoundnessOutcome:
        rng = trial_rng(seed, trial)
        loading = float(rng.uniform(*LOADING_RANGE))
        case = random_case(rng, loading=loading)
        init = rng.uniform(-np.pi, np.pi, size=case.n) if rng.random() < RANDOM_START_SHARE else None
        return check_case(case, eps, trial, init=init, loading=loading)

    if workers == 1:
        yield from map(run, range(trials))
        return
    with ThreadPoolExecutor(max_workers=workers) as executor:
        yield from executor.map(run, range(trials))


def summarize_soundness(outcomes: Iterable[SoundnessOutcome], seed: int, eps: float) -> SoundnessSummary:
    outcomes = list(outcomes)
    counterexamples = [o.trial for o in outcomes if o.counterexample]
    for trial in counterexamples:
        logger.warning(f"summarize_soundness: trial {trial} is certified but its spectrum is not stable")
    return SoundnessSummary(
        seed=seed,
        eps=eps,
        trials=len(outcomes),
        solved=sum(o.solved for o in outcomes),
        assumption1=sum(o.assumption1 for o in outcomes),
        certified=sum(o.certified for o in outcomes),
        certified_stable=sum(o.certified and o.stable for o in outcomes),
        uncertified_stable=sum(o.solved and not o.certified and o.stable for o in outcomes),
        counterexamples=counterexamples,
    )


def soundness_experiment(
    trials: int = 1000, seed: int = 42, eps: float = 1e-3, workers: int | None = None
) -> SoundnessSummary:
    return summarize_soundness(iter_soundness(trials, seed, eps, workers), seed, eps)


def find_braess_flip(
    seed: int = 42,
    max_cases: int = 200,
    max_copies: int = 10,
) -> tuple[NetworkCase, BraessImpact] | None:
    """Searches random certified cases for a generator line whose parallel duplication flips the verdict
    from pass to fail. Copies are stacked one at a time up to `max_copies`."""
    for trial in range(max_cases):
        case = random_case(trial_rng(seed, trial))
        Y = build_admittance(case)
        try:
            eq = solve_equilibrium(case, Y)
        except PowerFlowError:
            continue
        if assess_theorem1(case, Y, eq).theorem1_verdict is not Verdict.PASS:
            continue
        for line in case.lines:
            if line.from_bus >= case.n0 and line.to_bus >= case.n0:
                continue
            current, current_Y, current_eq = case, Y, eq
            for copies in range(1, max_copies + 1):
                try:
                    impact = line_addition_impact(current, current_Y, current_eq, line)
                except PowerFlowError:
                    break
                if impact.verdict_after is Verdict.FAIL:
                    logger.info(
                        f"find_braess_flip: trial {trial} flips after {copies} copies of "
                        f"{impact.line_from}-{impact.line_to}"
                    )
                    return current, impact
                if impact.verdict_after is not Verdict.PASS:
                    break
                current = add_line(current, line)
                current_Y = build_admittance(current)
                current_eq = solve_equilibrium(current, current_Y, init=current_eq.delta)
    return None
