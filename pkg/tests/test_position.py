import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from ncmap import position as pr
from ncmap.errors import BranchDegenerateError, ParameterError, PoleError

from oracles import indicial_roots_numeric


def test_coefficients_examples():
    p = pr.OdeProblem(3.0, 0.0)
    assert p.beta == -2
    phi1, phi2 = pr.ode_coefficients(1.0, p)
    assert phi1 == pytest.approx(3.0)
    assert phi2 == pytest.approx(0.0)
    with pytest.raises(PoleError):
        pr.ode_coefficients(0.0, p)
    with pytest.raises(ParameterError):
        pr.OdeProblem(1.0, 0.3)


@given(q=st.floats(0.2, 8.0).filter(lambda q: abs(q - 1) > 1e-3),
       u=st.floats(-2, 2), x=st.floats(0.05, 5))
def test_coefficient_structure(q, u, x):
    p = pr.OdeProblem(q, u)
    phi1, phi2 = pr.ode_coefficients(x, p)
    assert x * phi1 == pytest.approx(2 * q / (q - 1), rel=1e-14)
    # phi2 + x^2 is affine with slope 2u/(1-q)
    _, phi2b = pr.ode_coefficients(x + 1.0, p)
    slope = (phi2b + (x + 1) ** 2) - (phi2 + x * x)
    assert slope == pytest.approx(2 * u / (1 - q), rel=1e-9, abs=1e-9)


def test_general_coefficients_match_identity_f():
    p = pr.OdeProblem(2.5, 0.4)
    g = pr.ode_coefficients_general(1.7, 2.5, 0.4, lambda x: x, lambda x: 1.0, lambda x: 0.0)
    assert g == pytest.approx(pr.ode_coefficients(1.7, p))


def test_pole_structure_at_origin():
    p = pr.OdeProblem(2.0, 0.5)
    xs = [10.0 ** -k for k in range(2, 9)]
    assert np.allclose([x * pr.ode_coefficients(x, p)[0] for x in xs], p.pole_residue)
    assert max(abs(pr.ode_coefficients(x, p)[1]) for x in xs) < 10


@pytest.mark.parametrize("q", [1.5, 2.0, 3.0, 10.0])
def test_indicial_against_oracle(q):
    p = pr.OdeProblem(q, 0.3)
    roots = pr.indicial_exponents(q)
    ref = indicial_roots_numeric(lambda x: pr.ode_coefficients(x, p))
    assert np.max(np.abs(np.array(roots) - np.array(ref))) < 1e-12


def test_indicial_examples():
    assert pr.indicial_exponents(3.0) == (0.0, -2.0)
    assert pr.indicial_exponents(1e3)[1] == pytest.approx(-1, abs=3e-3)


def test_degenerate_branch_detected():
    with pytest.raises(BranchDegenerateError) as exc:
        pr.frobenius_series(pr.OdeProblem(3.0, 0.0), "r1", 12, 0.1)
    assert exc.value.exponent_gap == 2
    with pytest.raises(ParameterError):
        pr.frobenius_series(pr.OdeProblem(3.0, 0.0), "r2", 12, 0.1)


def test_series_guards():
    p = pr.OdeProblem(3.0, 0.0)
    with pytest.raises(ParameterError):
        pr.frobenius_series(p, "r0", 6, 0.1)
    with pytest.raises(ParameterError):
        pr.frobenius_series(p, "r0", 12, 0.3)
    assert pr.frobenius_series(p, "r0", 12, 1e-6)[0] == pytest.approx(1.0)


def test_series_against_integration():
    p = pr.OdeProblem(3.0, 0.0)
    series = pr.frobenius_series(p, "r0", 12, 0.1)[0]
    integ = pr.integrate_psi(p, "r0", 0.1, x_seed=0.01, order=20, samples=3).values[-1]
    assert abs(series - integ) < 1e-8


@pytest.mark.parametrize("branch,q", [("r0", 3.0), ("r0", 2.5), ("r1", 2.5)])
def test_series_residual_order(branch, q):
    p = pr.OdeProblem(q, 0.4)
    order = 8
    r = 0.0 if branch == "r0" else pr.indicial_exponents(q)[1]
    c = pr.frobenius_coefficients(p, branch, order)
    k = np.arange(order + 1)
    p0 = p.pole_residue
    g0, g1, g2 = p.potential_coeffs()

    def residual(x):
        psi = np.sum(c * x ** (k + r))
        d1 = np.sum(c * (k + r) * x ** (k + r - 1))
        d2 = np.sum(c * (k + r) * (k + r - 1) * x ** (k + r - 2))
        return abs(d2 + p0 / x * d1 + (g0 + g1 * x + g2 * x * x) * psi) / x ** r

    xs = np.array([0.2, 0.1, 0.05])
    slope = np.polyfit(np.log(xs), np.log([residual(x) for x in xs]), 1)[0]
    assert slope >= order - 2


def test_dual_integrator_and_growth():
    p = pr.OdeProblem(3.0, 0.0)
    a = pr.integrate_psi(p, "r0", 3.0)
    b = pr.integrate_psi(p, "r0", 3.0, method="Radau")
    assert abs(a.values[-1] - b.values[-1]) / abs(a.values[-1]) < 1e-6
    full = pr.integrate_psi(p, "r0", 4.0)
    assert full.growth_class in ("growing", "decaying")
    assert np.all(np.isfinite(full.values)) and np.all(np.diff(full.grid) > 0)


def test_reflection_symmetry():
    """psi_u on x < 0, integrated directly, equals psi_{-u}(-x)."""
    p = pr.OdeProblem(2.0, 0.6)
    p0 = p.pole_residue
    g0, g1, g2 = p.potential_coeffs()
    x0 = -0.05
    y0 = pr.frobenius_series(p, "r0", 20, x0)

    def rhs(x, y):
        return [y[1], -p0 / x * y[1] - (g0 + g1 * x + g2 * x * x) * y[0]]

    direct = solve_ivp(rhs, (x0, -2.5), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    mirrored = pr.integrate_psi(p.reflected(), "r0", 2.5)
    assert abs(direct.y[0, -1] - mirrored.values[-1]) < 1e-8 * max(1, abs(direct.y[0, -1]))
    neg = pr.integrate_psi(p, "r0", -2.5)
    assert neg.grid[-1] == pytest.approx(-2.5)
    assert neg.values[-1] == pytest.approx(mirrored.values[-1])


def test_infinity_not_fuchsian():
    p = pr.OdeProblem(3.0, 0.0)
    order = pr.pole_order(lambda t: pr.infinity_coefficients(t, p)[1])
    assert order >= 6
    assert pr.pole_order(lambda t: pr.infinity_coefficients(t, p)[0]) <= 1
    with pytest.raises(PoleError):
        pr.infinity_coefficients(0.0, p)


def test_l2_growth_diagnostics():
    sol = pr.integrate_psi(pr.OdeProblem(3.0, 0.0), "r0", 4.0)
    inc = np.diff([v for _, v in sol.l2_partial])
    assert inc[-1] > 10 * inc[0]
    assert pr.classify_l2(sol.l2_partial) == "diverging"
    # a synthetic Gaussian tail converges
    Ls = np.linspace(0.5, 6, 30)
    vals = [math.erf(L) for L in Ls]
    assert pr.classify_l2(list(zip(Ls, vals))) == "converging"


def test_scan_is_deterministic():
    p = pr.OdeProblem(2.5, 0.2)
    a = pr.square_integrability_scan(p, x_end=3.0)
    b = pr.square_integrability_scan(p, x_end=3.0)
    assert a == b
    assert a["seedable_branches"] == ["r0", "r1"]
    p3 = pr.OdeProblem(3.0, 0.0)
    c = pr.square_integrability_scan(p3, x_end=3.0)
    assert "r1" in c["degenerate_branches"]


def test_solution_table():
    sol = pr.integrate_psi(pr.OdeProblem(3.0, 0.0), "r0", 1.0, samples=5)
    text = sol.to_table()
    assert text.startswith("# q = 3.0")
    assert len([l for l in text.splitlines() if not l.startswith("#")]) == 5
