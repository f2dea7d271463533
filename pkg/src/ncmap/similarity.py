"""The similarity operator S with S N S^-1 = qN + uQ + (u^2/2) I.

Reading the operator equation between number states gives, for each
column n, the homogeneous three-term recurrence

    (2(n - m q) - u^2) S[m, n] = u sqrt(2) (sqrt(m) S[m-1, n] + sqrt(m+1) S[m+1, n]).

Each column is fixed up to scale by the seed S[0, n] = 1 (S[-1, n] = 0);
the scale is the column gauge, a genuine freedom because N is diagonal.
Columns grow like (sqrt(2) q / u)^m sqrt(m!), so the recurrence and every
product with S^-1 run in extended precision (see ``hp``).
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np
from flint import arb, arb_mat

from . import fock, hp
from .errors import InversionError, NoSolutionError, ParameterError, ResonanceError, SimilarityOverflowError
from .fock import FockMatrix
from .params import DeformParams

INVERSE_FAIL = 1e-6
_INVERSE_TARGET = 1e-30
_MAX_BIT_DOUBLINGS = 3

__all__ = [
    "SimilaritySolution", "target_operator", "recurrence_coefficients",
    "solve_S", "invert_S", "nonunitarity_certificate", "sylvester_residuals",
    "recurrence_residual", "resonances", "regauge", "anchor_rows", "anchored_gauge",
]


@dataclass(frozen=True)
class SimilaritySolution:
    S: FockMatrix
    q: float
    u: float
    column_gauge: np.ndarray
    sylvester_residual: np.ndarray
    condition_estimate: float
    condition_estimate_block: float
    resonance_flags: list
    inverse_residual: float
    bits: int
    S_hp: arb_mat = field(repr=False, compare=False)
    S_inv_hp: arb_mat = field(repr=False, compare=False)

    @property
    def dim(self):
        return self.S.dim

    @property
    def trivial(self):
        return self.q == 1 and self.u == 0

    def report(self) -> dict:
        return {
            "q": self.q, "u": self.u, "dim": self.dim, "bits": self.bits,
            "column_gauge": self.column_gauge.tolist(),
            "sylvester_residual": self.sylvester_residual.tolist(),
            "condition_estimate": self.condition_estimate,
            "condition_estimate_block": self.condition_estimate_block,
            "inverse_residual": self.inverse_residual,
            "resonance_flags": [list(p) for p in self.resonance_flags],
        }


def target_operator(q: float, u: float, D: int) -> FockMatrix:
    """M = qN + uQ + (u^2/2) I, the required image of N under conjugation by S."""
    N, Q = fock.number(D).entries, fock.position(D).entries
    return FockMatrix(q * N + u * Q + 0.5 * u * u * np.eye(D), "M")


def _denominator(m, n, q, u):
    return 2.0 * (n - m * q) - u * u


def recurrence_coefficients(m: int, n: int, q: float, u: float, resonance_tol=None):
    """Coefficients (A_mn, B_mn) of S[m,n] = A_mn S[m-1,n] + B_mn S[m+1,n]."""
    den = _denominator(m, n, q, u)
    if resonance_tol is None:
        resonance_tol = 1e-9 * (1 + u * u + 2 * (max(m, n) + 1) * q)
    if abs(den) < resonance_tol:
        raise ResonanceError(m, n, den)
    return u * math.sqrt(2 * m) / den, u * math.sqrt(2 * (m + 1)) / den


def resonances(q, u, D, tol) -> list[tuple[int, int]]:
    return [(m, n) for m in range(D) for n in range(D)
            if abs(_denominator(m, n, q, u)) < tol]


_DBL_MAX = arb(sys.float_info.max)


def _raw_columns(q, u, D):
    """Seeded forward recurrence in Arb; raises on binary64 overflow."""
    qa, ua = arb(q), arb(u)
    c = ua * arb(2).sqrt()
    roots = [arb(m).sqrt() for m in range(D + 1)]
    S = arb_mat(D, D)
    for n in range(D):
        prev, cur = arb(0), arb(1)
        S[0, n] = cur
        for m in range(D - 1):
            nxt = ((2 * (n - m * qa) - ua * ua) * cur - c * roots[m] * prev) / (c * roots[m + 1])
            S[m + 1, n] = nxt
            prev, cur = cur, nxt
    # report the first overflow in recurrence order (row-major over m, then n)
    for m in range(D):
        for n in range(D):
            if abs(S[m, n]).mid() > _DBL_MAX:
                raise SimilarityOverflowError(m, n)
    return S


def _max_gauge(S_raw):
    D = S_raw.nrows()
    g = np.empty(D)
    for n in range(D):
        mx = max((abs(S_raw[m, n]).mid() for m in range(D)), key=float)
        g[n] = float((1 / mx).mid())
    return g


def anchor_rows(sol) -> list[int]:
    """Row index of the largest-magnitude entry in each column of S."""
    D = sol.dim
    with hp.workprec(sol.bits):
        return [max(range(D), key=lambda m: hp.log2_abs(sol.S_hp[m, n])) for n in range(D)]


def anchored_gauge(sol, rows):
    """Factors 1/|S[rows[n], n]| (in Arb) that make those entries unit modulus."""
    with hp.workprec(sol.bits):
        return [1 / abs(sol.S_hp[r, n]) for n, r in enumerate(rows)]


def _spectral_norm_hp(M) -> float:
    """2-norm of a flint matrix whose entries may exceed binary64 range."""
    e = max((hp.log2_abs(x) for x in M.entries()), default=-math.inf)
    if e == -math.inf:
        return 0.0
    shift = math.ceil(e)
    scaled = M * arb(2) ** (-shift)
    try:
        return math.ldexp(float(np.linalg.norm(hp.to_numpy(scaled), 2)), shift)
    except OverflowError:
        return math.inf


def _condition(S_hp, S_inv_hp, k):
    if k == S_hp.nrows():
        blk, blk_inv = S_hp, S_inv_hp
    else:
        blk = arb_mat([[S_hp[i, j] for j in range(k)] for i in range(k)])
        blk_inv = hp.inverse(blk)
    return _spectral_norm_hp(blk) * _spectral_norm_hp(blk_inv)


def _certify(S_hp, S_inv_hp):
    R = S_hp * S_inv_hp - hp.identity(S_hp.nrows())
    return max((float(abs(x).upper()) for x in R.entries()), default=0.0)


def sylvester_residuals(S, M) -> np.ndarray:
    """Per-column max|(M S - S N)[0:D-1, n]| / max|S[:, n]|; row D-1 is the cutoff."""
    s, m = fock.as_array(S), fock.as_array(M)
    D = s.shape[0]
    R = m @ s - s * np.arange(D)[None, :]
    return np.max(np.abs(R[:-1]), axis=0) / np.max(np.abs(s), axis=0)


def recurrence_residual(S, q: float, u: float) -> float:
    """Largest componentwise relative defect of the three-term recurrence, rows 0..D-2."""
    s = fock.as_array(S)
    D = s.shape[0]
    worst = 0.0
    c = u * math.sqrt(2)
    for m in range(D - 1):
        lhs = np.array([_denominator(m, n, q, u) for n in range(D)]) * s[m]
        lower = c * math.sqrt(m) * s[m - 1] if m > 0 else np.zeros(D)
        upper = c * math.sqrt(m + 1) * s[m + 1]
        scale = np.abs(lhs) + np.abs(lower) + np.abs(upper)
        scale[scale == 0] = 1.0
        worst = max(worst, float(np.max(np.abs(lhs - lower - upper) / scale)))
    return worst


def _trivial_solution(params):
    D = params.D
    with hp.workprec(params.bits or hp.default_bits(D)):
        eye = hp.identity(D)
    return SimilaritySolution(
        S=fock.identity(D).relabel("S"), q=1.0, u=0.0, column_gauge=np.ones(D),
        sylvester_residual=np.zeros(D), condition_estimate=1.0,
        condition_estimate_block=1.0, resonance_flags=[], inverse_residual=0.0,
        bits=params.bits or hp.default_bits(D), S_hp=eye, S_inv_hp=eye)


def solve_S(params: DeformParams, gauge="max", conditioning: bool = True) -> SimilaritySolution:
    """Build S column by column from the seeded forward recurrence.

    ``gauge`` is "max" (unit max-abs columns), "seed" (S[0, n] = 1 kept) or
    a sequence of positive per-column factors applied to the seeded columns.
    ``conditioning=False`` skips the 2-norm condition estimates (left NaN).
    """
    q, u, D = params.q, params.u, params.D
    if D < 4:
        raise ParameterError(f"solve_S needs D >= 4, got {D}")
    if u == 0:
        if q == 1:
            return _trivial_solution(params)
        raise NoSolutionError(q)

    bits = params.bits or hp.default_bits(D)
    for attempt in range(_MAX_BIT_DOUBLINGS + 1):
        with hp.workprec(bits):
            S_raw = _raw_columns(q, u, D)
            if isinstance(gauge, str):
                if gauge == "max":
                    g = _max_gauge(S_raw)
                elif gauge == "seed":
                    g = np.ones(D)
                else:
                    raise ValueError(f"unknown gauge {gauge!r}")
            else:
                g = np.asarray(gauge, dtype=float)
                if g.shape != (D,) or np.any(g <= 0) or not np.all(np.isfinite(g)):
                    raise ValueError("explicit gauge must be D positive finite factors")
            S_hp = hp.scale_rows_cols(S_raw, col=g)
            S_inv_hp = hp.inverse(S_hp)
            residual = _certify(S_hp, S_inv_hp)
        if residual <= _INVERSE_TARGET or attempt == _MAX_BIT_DOUBLINGS:
            break
        bits *= 2

    return _finish(q, u, S_hp, S_inv_hp, g, bits, residual,
                   resonances(q, u, D, params.resonance_threshold), conditioning)


def _finish(q, u, S_hp, S_inv_hp, g, bits, residual, flags, conditioning=True):
    D = S_hp.nrows()
    cond = cond_blk = math.nan
    with hp.workprec(bits):
        S = FockMatrix(hp.to_numpy(S_hp), "S")
        if conditioning:
            cond = _condition(S_hp, S_inv_hp, D)
            cond_blk = _condition(S_hp, S_inv_hp, max(1, D // 2))
    return SimilaritySolution(
        S=S, q=float(q), u=float(u), column_gauge=np.asarray(g, dtype=float),
        sylvester_residual=sylvester_residuals(S, target_operator(q, u, D)),
        condition_estimate=cond, condition_estimate_block=cond_blk,
        resonance_flags=flags, inverse_residual=residual, bits=bits,
        S_hp=S_hp, S_inv_hp=S_inv_hp)


def regauge(sol: SimilaritySolution, factors, conditioning: bool = True) -> SimilaritySolution:
    """Rescale columns S -> S diag(f) (and rows of S^-1 by 1/f); S N S^-1 is unchanged."""
    D = sol.dim
    if len(factors) != D:
        raise ValueError(f"need {D} gauge factors, got {len(factors)}")
    with hp.workprec(sol.bits):
        f = [x if isinstance(x, arb) else arb(float(x)) for x in factors]
        if any(not x > 0 for x in f):
            raise ValueError("gauge factors must be positive")
        S_hp = hp.scale_rows_cols(sol.S_hp, col=f)
        S_inv_hp = hp.scale_rows_cols(sol.S_inv_hp, row=[1 / x for x in f])
        residual = _certify(S_hp, S_inv_hp)
        g = sol.column_gauge * np.array([float(x.mid()) for x in f])
    return _finish(sol.q, sol.u, S_hp, S_inv_hp, g, sol.bits, residual, sol.resonance_flags,
                   conditioning)


def invert_S(sol: SimilaritySolution) -> FockMatrix:
    """S^-1 rounded to binary64; the certified max|S S^-1 - I| is ``sol.inverse_residual``."""
    if not math.isfinite(sol.condition_estimate) or sol.inverse_residual > INVERSE_FAIL:
        raise InversionError(sol.inverse_residual, sol.condition_estimate)
    with hp.workprec(sol.bits):
        inv = hp.to_numpy(sol.S_inv_hp)
    if not np.all(np.isfinite(inv)):
        raise InversionError(sol.inverse_residual, sol.condition_estimate)
    return FockMatrix(inv, "S⁻¹")


def nonunitarity_certificate(sol: SimilaritySolution) -> float:
    """max|S^dag S - I| on the leading D/2 block (depends on the gauge)."""
    s = sol.S.entries
    k = max(1, sol.dim // 2)
    return fock.block_residual(s.conj().T @ s, np.eye(sol.dim), k)
