from dataclasses import dataclass
from functools import cached_property

import numpy as np

from swinglib.netmodel.case import NetworkCase


@dataclass(frozen=True, eq=False)
class AdmittanceMatrix:
    """Dense nodal admittance matrix Y with polar accessors Y_ij∠θ_ij."""

    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.matrix)

    @cached_property
    def angle(self) -> np.ndarray:
        return np.angle(self.matrix)

    @cached_property
    def G(self) -> np.ndarray:
        return self.matrix.real

    @cached_property
    def B(self) -> np.ndarray:
        return self.matrix.imag

    @property
    def B_diag(self) -> np.ndarray:
        return np.diag(self.B).copy()

    @property
    def G_diag(self) -> np.ndarray:
        return np.diag(self.G).copy()

    def is_symmetric(self, atol: float = 0.0) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.T, rtol=0.0, atol=atol))

    def submatrix(self, indices) -> np.ndarray:
        idx = np.asarray(indices)
        return self.matrix[np.ix_(idx, idx)]


def build_admittance(case: NetworkCase) -> AdmittanceMatrix:
    """Assembles Y with Y_ij = -y_ij per line and Y_ii = sum of incident y_ij plus bus and line-charging shunts."""
    Y = np.zeros((case.n, case.n), dtype=complex)
    for line in case.lines:
        i, j = line.from_bus, line.to_bus
        Y[i, j] -= line.y
        Y[j, i] -= line.y
        Y[i, i] += line.y + 0.5j * line.b_shunt
        Y[j, j] += line.y + 0.5j * line.b_shunt
    for bus in case.buses:
        Y[bus.id, bus.id] += 1j * bus.shunt_b
    return AdmittanceMatrix(Y)
