"""Coordinate-representation study of S as multiplication by f(x) = x.

With Q = x and P = -i d/dx the operator equation for S becomes

    psi'' + (2q/(q-1)) (1/x) psi' + (-x^2 + (2ux + beta)/(1-q)) psi = 0,
    beta = u^2 - (q - 1),

which has a regular singular point at x = 0 (exponents 0 and
-(q+1)/(q-1)) and an irregular one at infinity. Solutions are seeded from a
truncated Frobenius series near the origin and integrated outward; x < 0
is reached through the reflection psi_u(-x) = psi_{-u}(x).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BranchDegenerateError, IntegrationError, ParameterError, PoleError

BRANCHES = ("r0", "r1")
SERIES_RADIUS = 0.2

__all__ = [
    "OdeProblem", "OdeSolution", "ode_coefficients", "ode_coefficients_general",
    "indicial_exponents", "frobenius_coefficients", "frobenius_series",
    "integrate_psi", "square_integrability_scan", "envelope_slope",
    "classify_l2", "infinity_coefficients", "pole_order",
]


@dataclass(frozen=True)
class OdeProblem:
    q: float
    u: float
    f_choice: str = "identity"

    def __post_init__(self):
        if self.q == 1:
            raise ParameterError("q = 1 is excluded: the construction divides by q - 1")
        if not (math.isfinite(self.q) and math.isfinite(self.u)) or self.q <= 0:
            raise ParameterError(f"need finite q > 0 and finite u, got q={self.q!r}, u={self.u!r}")
        if self.f_choice != "identity":
            raise ParameterError(f"only f = identity is implemented, got {self.f_choice!r}")

    @property
    def beta(self) -> float:
        return self.u ** 2 - (self.q - 1)

    @property
    def pole_residue(self) -> float:
        """p0 = 2q/(q-1), the constant x * phi1(x)."""
        return 2 * self.q / (self.q - 1)

    def potential_coeffs(self):
        """(g0, g1, g2) with phi2(x) = g0 + g1 x + g2 x^2."""
        return self.beta / (1 - self.q), 2 * self.u / (1 - self.q), -1.0

    def reflected(self) -> OdeProblem:
        return OdeProblem(self.q, -self.u, self.f_choice)


@dataclass(frozen=True)
class OdeSolution:
    grid: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    branch: str
    growth_class: str
    envelope_slope: float
    l2_partial: list
    method: str
    problem: OdeProblem = field(repr=False)

    def at(self, x: float) -> float:
        return float(np.interp(x, self.grid, self.values))

    def to_table(self) -> str:
        p = self.problem
        head = [
            f"# q = {p.q!r}", f"# u = {p.u!r}", f"# beta = {p.beta!r}",
            f"# branch = {self.branch}", f"# method = {self.method}",
            f"# growth_class = {self.growth_class}",
            f"# envelope_slope = {self.envelope_slope!r}",
            "# x psi dpsi",
        ]
        rows = [f"{x!r} {v!r} {d!r}" for x, v, d in zip(self.grid, self.values, self.derivatives)]
        return "\n".join(head + rows) + "\n"


def ode_coefficients_general(x, q, u, f, df, d2f):
    """phi1 = (2q/(q-1)) f'/f and phi2 = -x^2 + (-q f'' + 2ux f + beta f)/((1-q) f) for invertible f."""
    if q == 1:
        raise ParameterError("q = 1 is excluded")
    fx = f(x)
    if fx == 0:
        raise PoleError(f"f vanishes at x={x}")
    beta = u * u - (q - 1)
    phi1 = 2 * q / (q - 1) * df(x) / fx
    phi2 = -x * x + (-q * d2f(x) + 2 * u * x * fx + beta * fx) / ((1 - q) * fx)
    return phi1, phi2


def ode_coefficients(x: float, problem: OdeProblem):
    """(phi1, phi2) for f = identity: 2q/((q-1)x) and -x^2 + (2ux + beta)/(1-q)."""
    if x == 0:
        raise PoleError("phi1 has a pole at x = 0; use frobenius_series there")
    q, u = problem.q, problem.u
    return (problem.pole_residue / x,
            -x * x + (2 * u * x + problem.beta) / (1 - q))


def indicial_exponents(q: float):
    """Roots of r(r-1) + (2q/(q-1)) r = 0: 0 and -(q+1)/(q-1)."""
    if q == 1:
        raise ParameterError("q = 1 is excluded")
    return 0.0, -(q + 1) / (q - 1)


def _branch_exponent(problem, branch):
    r_zero, r_other = indicial_exponents(problem.q)
    if branch == "r0":
        r, s = r_zero, r_other
    elif branch == "r1":
        r, s = r_other, r_zero
    else:
        raise ParameterError(f"unknown branch {branch!r}; expected one of {BRANCHES}")
    gap = s - r
    if gap > -0.5 and abs(gap - round(gap)) < 1e-9:
        raise BranchDegenerateError(branch, gap)
    return r


def frobenius_coefficients(problem: OdeProblem, branch: str, order: int) -> np.ndarray:
    """c_0..c_order of x^r sum c_k x^k, c_0 = 1.

    Multiplying the equation by x^2 gives
    c_k [(k+r)(k+r-1) + p0 (k+r)] = -(g0 c_{k-2} + g1 c_{k-3} + g2 c_{k-4}).
    """
    r = _branch_exponent(problem, branch)
    p0 = problem.pole_residue
    g = problem.potential_coeffs()
    c = np.zeros(order + 1)
    c[0] = 1.0
    for k in range(1, order + 1):
        s = sum(gj * c[k - 2 - j] for j, gj in enumerate(g) if k - 2 - j >= 0)
        c[k] = -s / ((k + r) * (k + r - 1) + p0 * (k + r))
    return c


def frobenius_series(problem: OdeProblem, branch: str, order: int, x: float):
    """(psi, psi') of the truncated Frobenius series at 0 < |x| <= 0.2."""
    if order < 8:
        raise ParameterError(f"series order must be >= 8, got {order}")
    if not 0 < abs(x) <= SERIES_RADIUS:
        raise ParameterError(f"series evaluation needs 0 < |x| <= {SERIES_RADIUS}, got {x}")
    r = _branch_exponent(problem, branch)
    if x < 0 and r != 0:
        raise ParameterError("non-integer Frobenius exponent: evaluate at x > 0 and reflect")
    c = frobenius_coefficients(problem, branch, order)
    k = np.arange(order + 1)
    powers = x ** (k + r)
    psi = float(np.dot(c, powers))
    dpsi = float(np.dot(c * (k + r), powers / x))
    return psi, dpsi


def _rhs(problem):
    p0 = problem.pole_residue
    g0, g1, g2 = problem.potential_coeffs()

    def f(x, y):
        phi2 = g0 + g1 * x + g2 * x * x
        return [y[1], -p0 / x * y[1] - phi2 * y[0], y[0] * y[0]]
    return f


def envelope_slope(x, psi, window=None) -> float:
    """Least-squares slope of log|psi| against x^2/2 on ``window`` (default: last unit interval)."""
    x, psi = np.asarray(x), np.asarray(psi)
    lo, hi = window if window is not None else (x[-1] - 1.0, x[-1])
    sel = (x >= lo) & (x <= hi) & (psi != 0)
    if sel.sum() < 3:
        raise IntegrationError(f"too few samples in envelope window [{lo}, {hi}]")
    return float(np.polyfit(x[sel] ** 2 / 2, np.log(np.abs(psi[sel])), 1)[0])


def classify_l2(l2_partial, settle: float = 3.0) -> str:
    """'diverging', 'converging' or 'undetermined' from (L, integral) checkpoints.

    Diverging: last increment exceeds 10x the first. Converging: increments
    shrink monotonically for checkpoints beyond ``settle``.
    """
    Ls = np.array([p[0] for p in l2_partial])
    vals = np.array([p[1] for p in l2_partial])
    inc = np.diff(vals)
    if inc.size < 2:
        return "undetermined"
    if inc[-1] > 10 * inc[0]:
        return "diverging"
    tail = inc[Ls[1:] > settle]
    if tail.size >= 2 and np.all(np.diff(tail) < 0):
        return "converging"
    return "undetermined"


def _checkpoints(x0, x_end, ratio):
    pts, L = [], abs(x0) * ratio
    while L < x_end:
        pts.append(L)
        L *= ratio
    pts.append(x_end)
    return np.array(pts)


def _seed(problem, mix, x0, order):
    y0 = np.zeros(2)
    for branch, w in mix.items():
        if w:
            y0 += w * np.array(frobenius_series(problem, branch, order, x0))
    return y0


def integrate_psi(problem: OdeProblem, branch="r0", x_end: float = 4.0, *,
                  x_seed: float = 0.05, order: int = 20, method: str = "DOP853",
                  rtol: float = 1e-12, atol: float = 1e-14, samples: int = 401,
                  checkpoint_ratio: float = 2 ** 0.25) -> OdeSolution:
    """Seed from the Frobenius series at x_seed and integrate to x_end.

    ``branch`` may be a branch name or a {branch: weight} mixture. Negative
    x_end is handled by reflection: the u-problem on [x_end, -x_seed] is the
    (-u)-problem on [x_seed, -x_end].
    """
    if x_end < 0:
        sol = integrate_psi(problem.reflected(), branch, -x_end, x_seed=x_seed, order=order,
                            method=method, rtol=rtol, atol=atol, samples=samples,
                            checkpoint_ratio=checkpoint_ratio)
        return OdeSolution(-sol.grid, sol.values, -sol.derivatives, sol.branch,
                           sol.growth_class, sol.envelope_slope, sol.l2_partial,
                           sol.method, problem)
    if x_end <= x_seed:
        raise ParameterError(f"x_end={x_end} must exceed the series seed point {x_seed}")
    mix = {branch: 1.0} if isinstance(branch, str) else dict(branch)
    y0 = _seed(problem, mix, x_seed, order)
    grid = np.linspace(x_seed, x_end, samples)
    res = solve_ivp(_rhs(problem), (x_seed, x_end), [y0[0], y0[1], 0.0], method=method,
                    rtol=rtol, atol=atol, dense_output=True)
    if not res.success:
        raise IntegrationError(f"{method} failed: {res.message}")
    ys = res.sol(grid)
    if not np.all(np.isfinite(ys)):
        raise IntegrationError(f"{method} produced non-finite state")
    cps = _checkpoints(x_seed, x_end, checkpoint_ratio)
    l2 = [(float(L), float(v)) for L, v in zip(cps, res.sol(cps)[2])]
    slope = envelope_slope(grid, ys[0])
    name = branch if isinstance(branch, str) else "mix"
    return OdeSolution(grid, ys[0], ys[1], name, "growing" if slope > 0 else "decaying",
                       slope, l2, method, problem)


def square_integrability_scan(problem: OdeProblem, thetas=None, x_end: float = 4.0,
                              **kwargs) -> dict:
    """Integrate cos(t) psi_r0 + sin(t) psi_r1 over a grid of mixing angles.

    Only seedable branches take part; a degenerate branch is listed in the
    report instead. A sign change of psi(x_end) between neighbouring angles
    brackets a mixture whose growing component cancels.
    """
    if thetas is None:
        thetas = np.linspace(0, np.pi, 13)[:-1]
    seedable, skipped = [], {}
    for b in BRANCHES:
        try:
            _branch_exponent(problem, b)
            seedable.append(b)
        except BranchDegenerateError as exc:
            skipped[b] = str(exc)
    if len(seedable) < 2:
        thetas = [0.0 if seedable == ["r0"] else np.pi / 2]
    rows = []
    for th in thetas:
        mix = {"r0": math.cos(th), "r1": math.sin(th)}
        mix = {b: w for b, w in mix.items() if b in seedable}
        sol = integrate_psi(problem, mix, x_end, **kwargs)
        rows.append({
            "theta": float(th),
            "growth_class": sol.growth_class,
            "envelope_slope": sol.envelope_slope,
            "l2_trend": classify_l2(sol.l2_partial),
            "l2_partial": sol.l2_partial,
            "psi_end": float(sol.values[-1]),
        })
    brackets = [(rows[i]["theta"], rows[i + 1]["theta"]) for i in range(len(rows) - 1)
                if np.sign(rows[i]["psi_end"]) != np.sign(rows[i + 1]["psi_end"])]
    return {
        "q": problem.q, "u": problem.u, "x_end": x_end,
        "seedable_branches": seedable, "degenerate_branches": skipped,
        "rows": rows,
        "any_decaying": any(r["growth_class"] == "decaying" for r in rows),
        "cancellation_brackets": brackets,
    }


def infinity_coefficients(t: float, problem: OdeProblem):
    """Coefficients (p, r) of w'' + p(t) w' + r(t) w = 0 after x = 1/t.

    With psi(x) = w(1/x): p = (2 - p0)/t and r = phi2(1/t)/t^4, which has a
    sixth-order pole because of the -x^2 term.
    """
    if t == 0:
        raise PoleError("t = 0 is the point at infinity itself")
    x = 1.0 / t
    _, phi2 = ode_coefficients(x, problem)
    return (2 - problem.pole_residue) / t, phi2 / t ** 4


def pole_order(fn, ts=(1e-2, 1e-3, 1e-4, 1e-5)) -> int:
    """Integer pole order at 0 read off the log-log slope of |fn| on a shrinking sequence."""
    ts = np.asarray(ts, dtype=float)
    vals = np.abs([fn(t) for t in ts])
    slope = np.polyfit(np.log(ts[-2:]), np.log(vals[-2:]), 1)[0]
    return int(round(-slope))
