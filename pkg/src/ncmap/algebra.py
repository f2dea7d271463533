"""The non-conjugate pair A = S a T^dag, B = T a^dag S^-1 and bracket maps.

The commutator of the pair is assembled in extended precision: B carries
the full size of S^-1 (entries ~1e44 at D = 48) and [A, B] is an O(1)
difference of such products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from flint import acb_mat, arb

from . import fock, hp
from .errors import DimensionError, ParameterError
from .flow import UnitaryFlow
from .fock import FockMatrix
from .params import DeformParams
from .similarity import SimilaritySolution

__all__ = [
    "DeformedPair", "build_pair", "chain_residuals", "deformed_commutator_q",
    "q_bracket", "poly_bracket", "nonlinear_map", "BRACKETS",
]


@dataclass(frozen=True)
class DeformedPair:
    A: FockMatrix
    B: FockMatrix
    params: DeformParams
    adjoint_defect: float
    solution: SimilaritySolution = field(repr=False)
    flow: UnitaryFlow = field(repr=False)
    A_hp: acb_mat = field(repr=False, compare=False)
    B_hp: acb_mat = field(repr=False, compare=False)
    T_hp: acb_mat = field(repr=False, compare=False)

    @property
    def dim(self):
        return self.A.dim


def flow_hp(flow: UnitaryFlow):
    """The flow's unitary rebuilt at the current working precision."""
    D = flow.dim
    if np.array_equal(flow.generator.entries, fock.momentum(D).entries):
        G = hp.momentum(D)
    else:
        G = hp.from_numpy(flow.generator.entries)
    return hp.expi(G, flow.parameter)


def build_pair(sol: SimilaritySolution, flow: UnitaryFlow, params: DeformParams | None = None) -> DeformedPair:
    D = sol.dim
    if flow.dim != D:
        raise DimensionError(f"similarity has D={D} but flow has D={flow.dim}")
    if flow.parameter != sol.u:
        raise ParameterError(f"flow parameter {flow.parameter} differs from u={sol.u}")
    params = params or DeformParams(sol.q, sol.u, D)
    K = params.interior
    with hp.workprec(sol.bits):
        a, ad = hp.ladder(D)
        T = flow_hp(flow)
        A = acb_mat(sol.S_hp * a) * hp.dag(T)
        B = T * acb_mat(ad * sol.S_inv_hp)
        defect = hp.block_maxabs(B - hp.dag(A), K)
        A_np, B_np = hp.to_numpy(A), hp.to_numpy(B)
    return DeformedPair(FockMatrix(A_np, "A"), FockMatrix(B_np, "B"), params, defect,
                        sol, flow, A, B, T)


def chain_residuals(pair: DeformedPair, K: int | None = None) -> dict[str, float]:
    """Max-abs residuals on the leading K block of the commutator chain.

    deformed_commutator      [A,B] - (I + (q-1) N)
    commutator_split         [A,B] - (I + S N S^-1 - T N T^dag)
    similarity_conjugation   S N S^-1 - T N T^dag - (q-1) N
    recover_annihilation     S^-1 A T - a
    recover_creation         T^dag B S - a^dag
    """
    sol = pair.solution
    D, q = pair.dim, sol.q
    K = pair.params.interior if K is None else K
    with hp.workprec(sol.bits):
        S, Si, T = sol.S_hp, sol.S_inv_hp, pair.T_hp
        Td = hp.dag(T)
        A, B = pair.A_hp, pair.B_hp
        a, ad = hp.ladder(D)
        N, I = hp.number(D), hp.identity(D)
        C = A * B - B * A
        SNS = S * N * Si
        TNT = T * acb_mat(N) * Td
        return {
            "deformed_commutator": hp.block_maxabs(C - acb_mat(I + N * arb(q - 1)), K),
            "commutator_split": hp.block_maxabs(C - (TNT * -1 + acb_mat(I + SNS)), K),
            "similarity_conjugation": hp.block_maxabs(acb_mat(SNS - N * arb(q - 1)) - TNT, K),
            "recover_annihilation": hp.block_maxabs(acb_mat(Si) * A * T - acb_mat(a), K),
            "recover_creation": hp.block_maxabs(Td * B * acb_mat(S) - acb_mat(ad), K),
        }


def deformed_commutator_q(a, a_dag, q: float) -> FockMatrix:
    """a a^dag - q a^dag a."""
    x, y = fock.as_array(a), fock.as_array(a_dag)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return FockMatrix(x @ y - q * (y @ x))


def q_bracket(n: int, q: float) -> float:
    """(q^n - 1)/(q - 1), with the binomial series n + C(n,2)(q-1) + C(n,3)(q-1)^2 near q = 1."""
    if q <= 0:
        raise ParameterError(f"q must be positive, got {q!r}")
    d = q - 1.0
    if d == 0:
        return float(n)
    if abs(d) < 1e-8:
        return n + math.comb(n, 2) * d + math.comb(n, 3) * d * d
    return (q ** n - 1.0) / d


def poly_bracket(n: int, q):
    """n + (q - 1) n (n - 1) / 2; consecutive differences are 1 + (q - 1) n.

    Exact for a ``fractions.Fraction`` q (n(n-1)/2 is formed in integers).
    """
    return n + (q - 1) * (n * (n - 1) // 2)


BRACKETS = {"q": q_bracket, "poly": poly_bracket}


def nonlinear_map(bracket, D: int, q: float) -> tuple[FockMatrix, FockMatrix]:
    """b|n> = sqrt([n]) |n-1>, i.e. a -> sqrt([n]/n) a, and its conjugate transpose."""
    f = BRACKETS[bracket] if isinstance(bracket, str) else bracket
    D = fock.annihilation(D).dim
    values = np.array([f(n, q) for n in range(D + 1)])
    bad = np.flatnonzero(values < 0)
    if bad.size:
        n = int(bad[0])
        raise ParameterError(f"bracket [{n}] = {values[n]:.6g} is negative at q={q}; map undefined")
    b = np.diag(np.sqrt(values[1:D]), 1)
    B = FockMatrix(b, "b")
    return B, B.dag
