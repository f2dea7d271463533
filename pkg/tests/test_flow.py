import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncmap import flow, fock
from ncmap.errors import GeneratorError

from oracles import mp_expi_momentum

params = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


def test_zero_parameter_is_identity():
    assert np.array_equal(flow.exponentiate(fock.momentum(8), 0.0).entries, np.eye(8))
    assert np.array_equal(flow.displacement(0.0, 8).matrix.entries, np.eye(8))
    assert flow.displacement(0.0, 8).unitarity_defect < 1e-13


def test_two_level_methods_agree():
    P = fock.momentum(2)
    s = math.pi * math.sqrt(2)
    a = flow.exponentiate(P, s, "pade").entries
    b = flow.exponentiate(P, s, "eigh").entries
    assert np.max(np.abs(a - b)) < 1e-12
    # P has eigenvalues +-1/sqrt(2), so the exponent phases are +-pi: exp(i s P) = -I
    assert np.max(np.abs(a + np.eye(2))) < 1e-12


def test_non_hermitian_generator_rejected():
    with pytest.raises(GeneratorError):
        flow.exponentiate(fock.annihilation(4), 0.5)
    with pytest.raises(ValueError):
        flow.exponentiate(fock.momentum(4), 0.5, method="taylor")


def test_against_mpmath_exponential():
    D, u = 10, 0.8
    mp.mp.dps = 40
    ref = mp_expi_momentum(D, u)
    T = flow.displacement(u, D).matrix.entries
    err = max(abs(complex(ref[i, j]) - T[i, j]) for i in range(D) for j in range(D))
    assert err < 1e-14


def test_conjugated_number_analytic():
    assert np.array_equal(flow.conjugated_number_analytic(0.0, 6).entries, fock.number(6).entries)
    u = 1.3
    M = flow.conjugated_number_analytic(u, 6).entries
    assert M[0, 0] == pytest.approx(u * u / 2)


def test_acceptance_scale_identities():
    r = flow.stone_residuals(64, 1.0, 32)
    assert r["group_law"] < 1e-12
    assert r["position_shift"] < 1e-8
    assert r["number_conjugation"] < 1e-8
    assert r["generator_commutes"] < 1e-12
    assert r["exponential_methods"] < 1e-11


@given(params, params)
def test_group_law(u1, u2):
    D = 24
    t1 = flow.displacement(u1, D).matrix.entries
    t2 = flow.displacement(u2, D).matrix.entries
    t12 = flow.displacement(u1 + u2, D).matrix.entries
    assert np.max(np.abs(t1 @ t2 - t12)) < 1e-12


@given(params)
def test_inverse_is_adjoint(u):
    D = 24
    T = flow.displacement(u, D).matrix
    assert np.max(np.abs(T.dag.entries - flow.displacement(-u, D).matrix.entries)) < 1e-12


@given(params)
def test_conjugation_surrogates(u):
    r = flow.stone_residuals(64, u, 32)
    assert r["position_shift_inverse"] < 1e-8
    assert r["position_shift"] < 1e-8
    assert r["number_conjugation"] < 1e-8


@given(st.floats(min_value=-4.0, max_value=4.0, allow_nan=False), st.sampled_from([32, 48]))
def test_unitarity(u, D):
    assert flow.displacement(u, D).unitarity_defect < 1e-10


@given(st.floats(min_value=-1.0, max_value=1.0, allow_nan=False))
def test_dual_methods(frac):
    # |s| * ||G|| <= 10
    D = 32
    P = fock.momentum(D)
    s = 10 * frac / np.linalg.norm(P.entries, 2)
    a = flow.exponentiate(P, s, "pade").entries
    b = flow.exponentiate(P, s, "eigh").entries
    assert np.max(np.abs(a - b)) < 1e-11


def test_generic_generator():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    G = X + X.conj().T
    U = flow.exponentiate(G, 0.4)
    assert flow.unitarity_defect(U) < 1e-12
