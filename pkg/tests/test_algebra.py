import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncmap import algebra, flow, fock, similarity as sm
from ncmap.errors import DimensionError, ParameterError
from ncmap.params import DeformParams

from oracles import maxabs, mp_expi_momentum, mp_ladder, mp_null_columns, mp_number


def pair_for(q, u, D, K=None):
    params = DeformParams(q, u, D, K)
    return algebra.build_pair(sm.solve_S(params), flow.displacement(u, D), params)


def test_trivial_pair():
    p = pair_for(1.0, 0.0, 16)
    assert np.array_equal(p.A.entries, fock.annihilation(16).entries)
    assert np.array_equal(p.B.entries, fock.creation(16).entries)
    assert p.adjoint_defect == 0
    r = algebra.chain_residuals(p, 15)
    assert r["deformed_commutator"] < 1e-12


def test_pair_preconditions():
    sol = sm.solve_S(DeformParams(1.2, 0.7, 8))
    with pytest.raises(DimensionError):
        algebra.build_pair(sol, flow.displacement(0.7, 9))
    with pytest.raises(ParameterError):
        algebra.build_pair(sol, flow.displacement(0.5, 8))


def test_adjoint_defect_nontrivial():
    assert pair_for(2.0, 1.0, 32).adjoint_defect > 0.01


def test_deformed_commutator_q():
    a, ad = fock.annihilation(4), fock.creation(4)
    assert np.allclose(np.diag(algebra.deformed_commutator_q(a, ad, 1.0).entries), [1, 1, 1, -3])
    q = 1.7
    assert np.allclose(np.diag(algebra.deformed_commutator_q(a, ad, q).entries),
                       [1, 2 - q, 3 - 2 * q, -3 * q])
    with pytest.raises(DimensionError):
        algebra.deformed_commutator_q(a, fock.creation(5), q)


@given(st.floats(0.1, 5.0), st.integers(2, 30))
def test_rearranged_q_commutator(q, D):
    a, ad = fock.annihilation(D), fock.creation(D)
    lhs = algebra.deformed_commutator_q(a, ad, q).entries
    rhs = fock.commutator(a, ad).entries - (q - 1) * (ad @ a).entries
    assert np.max(np.abs(lhs - rhs)) < 1e-14 * D * (1 + q)


def test_brackets():
    assert algebra.q_bracket(5, 1.0) == 5
    assert algebra.q_bracket(3, 2.0) == 7
    assert algebra.q_bracket(0, 1.3) == 0
    assert algebra.q_bracket(7, 1 + 1e-10) == pytest.approx(7 + 21e-10, rel=1e-15)
    assert algebra.poly_bracket(6, 1.0) == 6
    assert algebra.poly_bracket(2, 3.0) == 4
    with pytest.raises(ParameterError):
        algebra.q_bracket(2, 0.0)


@pytest.mark.parametrize("q", [0.5, 1.2, 2.0])
def test_poly_difference_law(q):
    qf = Fraction(q)
    err = max(abs(algebra.poly_bracket(n + 1, qf) - algebra.poly_bracket(n, qf) - (1 + (qf - 1) * n))
              for n in range(1001))
    assert err == 0
    # in binary64 the law holds to the rounding of values near 1e5
    n = np.arange(1001)
    vals = np.array([algebra.poly_bracket(int(k), q) for k in n])
    rel = np.abs(np.diff(vals) - (1 + (q - 1) * n[:-1])) / np.maximum(1, np.abs(vals[:-1]))
    assert np.max(rel) < 1e-15


@given(st.integers(0, 1000), st.floats(0.1, 3.0))
def test_poly_difference_law_property(n, q):
    d = algebra.poly_bracket(n + 1, q) - algebra.poly_bracket(n, q)
    assert abs(d - (1 + (q - 1) * n)) <= 1e-12 * max(1.0, abs(algebra.poly_bracket(n, q)))


def test_nonlinear_map_examples():
    for br in ("q", "poly"):
        b, bd = algebra.nonlinear_map(br, 10, 1.0)
        assert np.array_equal(b.entries, fock.annihilation(10).entries)
    b, _ = algebra.nonlinear_map("q", 4, 2.0)
    assert b.entries[1, 2] == pytest.approx(1.7320508)
    with pytest.raises(ParameterError):
        algebra.nonlinear_map("poly", 8, 0.5)


@pytest.mark.parametrize("q", [1.2, 2.0, 3.0])
def test_nonlinear_map_commutator(q):
    D = 64
    b, bd = algebra.nonlinear_map("poly", D, q)
    c = fock.commutator(b, bd).entries
    target = np.eye(D) + (q - 1) * fock.number(D).entries
    assert fock.block_residual(c, target, D - 1) < 1e-12


@pytest.mark.parametrize("q,u,D,K", [(1.2, 0.7, 24, 6), (2.0, 1.0, 16, 4)])
def test_chain_identities(q, u, D, K):
    p = pair_for(q, u, D, K)
    r = algebra.chain_residuals(p, K)
    assert r["similarity_conjugation"] < 1e-6
    assert r["recover_annihilation"] < 1e-8
    assert r["recover_creation"] < 1e-8
    # triangle inequality over the chain
    assert r["deformed_commutator"] <= r["commutator_split"] + r["similarity_conjugation"] + 1e-9


def test_commutator_matches_high_precision_reference():
    """The large deformed-commutator residual is a property of the truncated
    operators, not of round-off: an independent 80-digit construction agrees."""
    q, u, D, K = 1.2, 0.7, 16, 4
    mp.mp.dps = 80
    S = mp_null_columns(q, u, D)
    Si = S ** -1
    T = mp_expi_momentum(D, u)
    a, ad = mp_ladder(D)
    A = S * a * T.H
    B = T * ad * Si
    ref = maxabs(A * B - B * A - (mp.eye(D) + (q - 1) * mp_number(D)), K)
    got = algebra.chain_residuals(pair_for(q, u, D, K), K)["deformed_commutator"]
    assert got == pytest.approx(float(ref), rel=1e-8)
    assert got > 1.0
