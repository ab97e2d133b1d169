import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property

import numpy as np
import pandas as pd
import scipy.linalg

from swinglib.dynamics import Model
from swinglib.equilibrium import EquilibriumPoint, flow_sensitivity
from swinglib.errors import EigenSolverError, InvalidParameterError
from swinglib.netmodel import AdmittanceMatrix, NetworkCase

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FlowJacobian:
    """L = dP_e/d(delta) evaluated at `delta`."""

    matrix: np.ndarray
    delta: np.ndarray


def flow_jacobian(case: NetworkCase, Y: AdmittanceMatrix, eq: EquilibriumPoint) -> FlowJacobian:
    return FlowJacobian(flow_sensitivity(case, Y, eq.delta), eq.delta.copy())


@dataclass(frozen=True, eq=False)
class SystemJacobian:
    matrix: np.ndarray
    model: Model
    mass: np.ndarray
    """Diagonal of M: m over generators, then eps over loads (perturbed only)."""
    damping: np.ndarray
    """Diagonal of D: d over generators, then d_load over loads."""

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def system_jacobian(L: FlowJacobian | np.ndarray, case: NetworkCase, model: Model) -> SystemJacobian:
    """Linearization of either swing model at an equilibrium with flow Jacobian L.

    Perturbed (2n): [[0, I], [-M^-1 L, -M^-1 D]] with M = diag(m, eps), D = diag(d, d_load).
    Unperturbed (n + n0): generator angle rows pick omega, load angle rows are -D_load^-1 L,
    generator frequency rows are -M^-1 L and -M^-1 D.
    """
    L = L.matrix if isinstance(L, FlowJacobian) else np.asarray(L, dtype=float)
    n, n0 = case.n, case.n0
    if L.shape != (n, n):
        raise InvalidParameterError(f"system_jacobian: L has shape {L.shape}, expected ({n}, {n})")
    damping = np.concatenate([case.d, case.d_load])

    if model.is_perturbed:
        mass = np.concatenate([case.m, np.full(n - n0, model.eps)])
        J = np.zeros((2 * n, 2 * n))
        J[:n, n:] = np.eye(n)
        J[n:, :n] = -L / mass[:, None]
        J[n:, n:] = -np.diag(damping / mass)
        return SystemJacobian(J, model, mass, damping)

    mass = case.m.copy()
    K = np.zeros((n + n0, n + n0))
    K[:n0, n:] = np.eye(n0)
    K[n0:n, :n] = -L[n0:, :] / case.d_load[:, None]
    K[n:, :n] = -L[:n0, :] / mass[:, None]
    K[n:, n:] = -np.diag(case.d / mass)
    return SystemJacobian(K, model, mass, damping)


@dataclass(frozen=True)
class EigenOptions:
    max_dim: int = 512
    zero_rtol: float = 1e-8
    backward_rtol: float = 1e-8
    real_rtol: float = 1e-12
    """Imaginary parts below real_rtol * ||A|| are treated as zero."""


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Eigenvalues sorted by (real, imag) with zero-mode classification."""

    eigenvalues: np.ndarray
    norm: float
    backward_error: float
    """max_k ||A v_k - lambda_k v_k|| / (||v_k|| ||A||)."""
    zero_rtol: float = 1e-8

    @cached_property
    def zero_mask(self) -> np.ndarray:
        return np.abs(self.eigenvalues) <= self.zero_rtol * self.norm

    @property
    def zero_count(self) -> int:
        return int(self.zero_mask.sum())

    @property
    def nonzero(self) -> np.ndarray:
        return self.eigenvalues[~self.zero_mask]

    @property
    def max_nonzero_real(self) -> float:
        values = self.nonzero
        return float(values.real.max()) if len(values) else math.nan

    @property
    def mean_nonzero_real(self) -> float:
        values = self.nonzero
        return float(values.real.mean()) if len(values) else math.nan

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)


def _pair_conjugates(values: np.ndarray, tol: float) -> np.ndarray:
    real = values[np.abs(values.imag) <= tol].real.astype(complex)
    upper = values[values.imag > tol]
    lower = values[values.imag < -tol]
    if len(upper) != len(lower):
        logger.warning(f"eigenvalues: {len(upper)} upper vs {len(lower)} lower half-plane values, pairing skipped")
        return values
    upper = upper[np.lexsort((upper.imag, upper.real))]
    mirrored = np.conj(lower)
    mirrored = mirrored[np.lexsort((mirrored.imag, mirrored.real))]
    paired = 0.5 * (upper + mirrored)
    return np.concatenate([real, paired, np.conj(paired)])


def eigenvalues(matrix: np.ndarray, options: EigenOptions | None = None) -> SpectrumReport:
    """Dense eigensolve (LAPACK geev: balancing, Hessenberg reduction, shifted QR) with a
    mandatory backward-error check and exact conjugate pairing."""
    options = options or EigenOptions()
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError(f"eigenvalues: need a square matrix, got shape {A.shape}")
    if A.shape[0] > options.max_dim:
        raise InvalidParameterError(f"eigenvalues: dimension {A.shape[0]} exceeds the cap of {options.max_dim}")
    if not np.all(np.isfinite(A)):
        raise InvalidParameterError("eigenvalues: matrix has non-finite entries")

    try:
        values, vectors = scipy.linalg.eig(A)
    except np.linalg.LinAlgError as e:
        raise EigenSolverError(f"eigenvalues: QR iteration did not converge ({e})") from e

    norm = float(np.linalg.norm(A, 2))
    residuals = np.linalg.norm(A @ vectors - vectors * values, axis=0) / np.linalg.norm(vectors, axis=0)
    backward_error = float(residuals.max() / norm) if norm > 0 else 0.0
    if backward_error > options.backward_rtol:
        logger.warning(f"eigenvalues: backward error {backward_error:.2e} exceeds {options.backward_rtol:.0e}")
        raise EigenSolverError(f"eigenvalues: backward error {backward_error:.2e} above {options.backward_rtol:.0e}")

    values = _pair_conjugates(values, options.real_rtol * max(norm, 1.0))
    values = values[np.lexsort((values.imag, values.real))]
    return SpectrumReport(values, norm, backward_error, options.zero_rtol)


def pencil_residual(L: np.ndarray, D: np.ndarray, M: np.ndarray, lam: complex) -> float:
    """sigma_min(L + lam D + lam^2 M) / (||L|| + |lam| ||D|| + |lam|^2 ||M||); D and M may be diagonals."""
    L = np.asarray(L, dtype=float)
    D = np.diag(D) if np.ndim(D) == 1 else np.asarray(D, dtype=float)
    M = np.diag(M) if np.ndim(M) == 1 else np.asarray(M, dtype=float)
    if not L.shape == D.shape == M.shape:
        raise InvalidParameterError(f"pencil_residual: shapes {L.shape}, {D.shape}, {M.shape} differ")
    pencil = L + lam * D + lam**2 * M
    size = abs(lam)
    scale = np.linalg.norm(L, 2) + size * np.linalg.norm(D, 2) + size**2 * np.linalg.norm(M, 2)
    if scale == 0:
        return 0.0
    return float(scipy.linalg.svdvals(pencil)[-1] / scale)


@dataclass(frozen=True)
class MatchedPair:
    k_index: int
    j_index: int
    distance: float


@dataclass(frozen=True)
class FastMode:
    value: complex
    predicted: float
    rel_err: float


@dataclass(frozen=True, eq=False)
class ModalComparison:
    eps: float
    matched: tuple[MatchedPair, ...]
    fast: tuple[FastMode, ...]
    ambiguous: tuple[int, ...] = field(default=())
    """K indices whose nearest J eigenvalue had already been taken."""

    @property
    def max_distance(self) -> float:
        return max((pair.distance for pair in self.matched), default=0.0)

    @property
    def max_fast_rel_err(self) -> float:
        return max((mode.rel_err for mode in self.fast), default=0.0)


def modal_compare(
    K_spectrum: SpectrumReport,
    J_spectrum: SpectrumReport,
    eps: float,
    d_load: np.ndarray,
) -> ModalComparison:
    """Greedy nearest-neighbour matching of K's eigenvalues into J's.

    K eigenvalues are taken in descending |lambda|, ties with positive imaginary part first.
    The J eigenvalues left over are the fast modes, compared in sorted order with -d_load / eps.
    """
    K_values, J_values = K_spectrum.eigenvalues, J_spectrum.eigenvalues
    n_fast = len(J_values) - len(K_values)
    d_load = np.asarray(d_load, dtype=float)
    if n_fast != len(d_load):
        raise InvalidParameterError(
            f"modal_compare: {len(J_values)} J vs {len(K_values)} K eigenvalues leaves {n_fast} fast modes "
            f"for {len(d_load)} load buses"
        )

    order = sorted(range(len(K_values)), key=lambda k: (-abs(K_values[k]), -np.sign(K_values[k].imag)))
    taken = np.zeros(len(J_values), dtype=bool)
    matched = []
    ambiguous = []
    for k in order:
        distances = np.abs(J_values - K_values[k])
        nearest = int(np.argmin(distances))
        if taken[nearest]:
            ambiguous.append(k)
            logger.warning(f"modal_compare: J eigenvalue {J_values[nearest]:.6g} claimed twice, K[{k}] takes next")
        distances[taken] = np.inf
        j = int(np.argmin(distances))
        taken[j] = True
        matched.append(MatchedPair(k, j, float(distances[j])))

    leftover = J_values[~taken]
    leftover = leftover[np.argsort(leftover.real)]
    predicted = np.sort(-d_load / eps)
    fast = tuple(
        FastMode(complex(value), float(guess), float(abs(value - guess) / abs(guess)))
        for value, guess in zip(leftover, predicted)
    )
    matched.sort(key=lambda pair: pair.k_index)
    return ModalComparison(eps, tuple(matched), fast, tuple(sorted(ambiguous)))


class StabilityVerdict(StrEnum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    INCONCLUSIVE = "inconclusive"


def stability_verdict(spectrum: SpectrumReport, factor: float = 10.0) -> StabilityVerdict:
    """Sign of the largest nonzero real part; inconclusive within factor x the backward-error bound.

    Only one zero eigenvalue, the rotational mode, is expected; a second one means the linearization
    cannot decide stability.
    """
    if spectrum.zero_count > 1:
        logger.warning(f"stability_verdict: {spectrum.zero_count} zero eigenvalues, expected one")
        return StabilityVerdict.INCONCLUSIVE
    margin = spectrum.max_nonzero_real
    if math.isnan(margin):
        return StabilityVerdict.INCONCLUSIVE
    bound = factor * max(spectrum.backward_error, np.finfo(float).eps) * spectrum.norm
    if abs(margin) <= bound:
        return StabilityVerdict.INCONCLUSIVE
    return StabilityVerdict.STABLE if margin < 0 else StabilityVerdict.UNSTABLE


def mode_table(spectrum: SpectrumReport) -> pd.DataFrame:
    """Per-eigenvalue damping ratio -Re/|lambda| and frequency Im/2pi (Hz)."""
    values = spectrum.eigenvalues
    magnitude = np.abs(values)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(spectrum.zero_mask, np.nan, -values.real / magnitude)
    return pd.DataFrame(
        {
            "re": values.real,
            "im": values.imag,
            "abs": magnitude,
            "damping_ratio": ratio,
            "frequency_hz": values.imag / (2 * math.pi),
            "zero_mode": spectrum.zero_mask,
        }
    )
