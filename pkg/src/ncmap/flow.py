"""One-parameter unitary groups exp(i s G) and the momentum displacement T(u).

Two exponentials ship: scipy's scaling-and-squaring Pade routine and a
Hermitian eigendecomposition. Each is the cross-check of the other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import fock
from .errors import GeneratorError
from .fock import FockMatrix, as_array, block_residual

HERMITIAN_TOL = 1e-10

__all__ = [
    "UnitaryFlow", "exponentiate", "displacement", "conjugated_number_analytic",
    "unitarity_defect", "stone_residuals",
]


@dataclass(frozen=True)
class UnitaryFlow:
    generator: FockMatrix
    parameter: float
    matrix: FockMatrix
    unitarity_defect: float

    @property
    def dim(self):
        return self.matrix.dim

    @property
    def inverse(self) -> FockMatrix:
        return self.matrix.dag


def _hermitian_defect(g):
    return float(np.max(np.abs(g - g.conj().T)))


def unitarity_defect(U) -> float:
    """max|U^dag U - I| over the full matrix."""
    u = as_array(U)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def exponentiate(G, s: float, method: str = "pade") -> FockMatrix:
    """exp(i s G) for Hermitian G.

    ``method`` is "pade" (scaling and squaring) or "eigh"
    (G = V diag(w) V^dag, so exp(i s G) = V diag(exp(i s w)) V^dag).
    """
    g = as_array(G).astype(complex)
    defect = _hermitian_defect(g)
    if defect > HERMITIAN_TOL:
        raise GeneratorError(f"generator is not Hermitian: max|G - G^dag| = {defect:.3e}")
    if s == 0:
        return FockMatrix(np.eye(g.shape[0]), "I")
    if method == "pade":
        out = scipy.linalg.expm(1j * s * g)
    elif method == "eigh":
        w, v = np.linalg.eigh(g)
        out = (v * np.exp(1j * s * w)) @ v.conj().T
    else:
        raise ValueError(f"unknown exponential method {method!r}")
    return FockMatrix(out)


def displacement(u: float, D: int, method: str = "pade") -> UnitaryFlow:
    """T(u) = exp(i u P); conjugation by T shifts position by u."""
    P = fock.momentum(D)
    T = exponentiate(P, u, method).relabel("T")
    return UnitaryFlow(P, float(u), T, unitarity_defect(T))


def conjugated_number_analytic(u: float, D: int) -> FockMatrix:
    """N + u Q + (u^2/2) I, assembled without exponentials."""
    N, Q = fock.number(D).entries, fock.position(D).entries
    return FockMatrix(N + u * Q + 0.5 * u * u * np.eye(D), "TNT†")


def stone_residuals(D: int, u: float, K: int | None = None,
                    u1: float = 0.3, u2: float = 0.4) -> dict[str, float]:
    """Max-abs residuals of the displacement identities at parameter u.

    Conjugation identities are measured on the leading K block (default D/2);
    the group law, inverse law, commutation with P and the dual-method
    comparison are exact for a fixed generator and use the full matrix.
    """
    K = D // 2 if K is None else K
    P, Q, N = fock.momentum(D), fock.position(D), fock.number(D)
    I = np.eye(D)
    flow = displacement(u, D)
    T = flow.matrix.entries
    Td = T.conj().T
    t1 = displacement(u1, D).matrix.entries
    t2 = displacement(u2, D).matrix.entries
    t12 = displacement(u1 + u2, D).matrix.entries
    return {
        "group_law": block_residual(t1 @ t2, t12),
        "inverse_is_adjoint": block_residual(Td, displacement(-u, D).matrix),
        "unitarity": flow.unitarity_defect,
        "position_shift_inverse": block_residual(Td @ Q.entries @ T, Q.entries - u * I, K),
        "position_shift": block_residual(T @ Q.entries @ Td, Q.entries + u * I, K),
        "generator_commutes": block_residual(T @ P.entries, P.entries @ T),
        "number_conjugation": block_residual(T @ N.entries @ Td,
                                             conjugated_number_analytic(u, D), K),
        "exponential_methods": block_residual(flow.matrix, exponentiate(P, u, "eigh")),
    }
