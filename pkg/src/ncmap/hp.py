"""Extended-precision matrix kernel (python-flint / Arb).

The similarity operator S is exponentially ill-conditioned (cond ~ 1e23 at
D = 48), so every product that involves S^-1 is formed here at a working
precision of several hundred bits and only rounded to binary64 at the end.
Matrices are kept as Arb midpoints: radii are dropped after inversion
because interval Gaussian elimination overstates them by many orders of
magnitude; accuracy is instead certified through residuals such as
max|S S^-1 - I|.

flint keeps its precision in process-global state, so ``workprec`` must
wrap every call. Parallel sweeps use processes, not threads.
"""
from __future__ import annotations

import contextlib
import math

import numpy as np
import flint
from flint import acb, acb_mat, arb, arb_mat

__all__ = [
    "workprec", "default_bits", "ladder", "number", "identity", "position",
    "momentum", "from_numpy", "to_numpy", "inverse", "expi", "dag",
    "block_maxabs", "maxabs", "scale_rows_cols",
]


@contextlib.contextmanager
def workprec(bits: int):
    old = flint.ctx.prec
    flint.ctx.prec = int(bits)
    try:
        yield
    finally:
        flint.ctx.prec = old


def default_bits(D: int) -> int:
    """Working precision that keeps S^-1 products accurate for D <= a few hundred."""
    return max(192, 64 + 8 * int(D))


def ladder(D):
    """Exact (to working precision) annihilation and creation matrices."""
    a = arb_mat(D, D)
    for m in range(D - 1):
        a[m, m + 1] = arb(m + 1).sqrt()
    return a, a.transpose()


def number(D):
    N = arb_mat(D, D)
    for m in range(D):
        N[m, m] = m
    return N


def identity(D):
    eye = arb_mat(D, D)
    for m in range(D):
        eye[m, m] = 1
    return eye


def position(D):
    a, ad = ladder(D)
    return (a + ad) / arb(2).sqrt()


def momentum(D):
    a, ad = ladder(D)
    return acb_mat(ad - a) * acb(0, 1) / arb(2).sqrt()


def from_numpy(x) -> acb_mat | arb_mat:
    """Exact conversion of a binary64 array (real arrays give arb_mat)."""
    x = np.asarray(x)
    if np.iscomplexobj(x) and np.any(x.imag != 0):
        return acb_mat([[acb(float(v.real), float(v.imag)) for v in row] for row in x])
    return arb_mat([[float(v) for v in row] for row in np.real(x)])


def to_numpy(M) -> np.ndarray:
    """Round the midpoints of a flint matrix to a complex binary64 array."""
    rows, cols = M.nrows(), M.ncols()
    out = np.empty((rows, cols), dtype=complex)
    if isinstance(M, arb_mat):
        for i in range(rows):
            for j in range(cols):
                out[i, j] = float(M[i, j].mid())
    else:
        for i in range(rows):
            for j in range(cols):
                z = M[i, j]
                out[i, j] = complex(float(z.real.mid()), float(z.imag.mid()))
    return out


def mid(M):
    return M.mid()


def inverse(M):
    """Floating-point (non-certified) inverse at working precision."""
    eye = identity(M.nrows())
    if isinstance(M, acb_mat):
        eye = acb_mat(eye)
    return M.mid().solve(eye, algorithm="approx").mid()


def solve(M, rhs):
    if isinstance(M, arb_mat) and isinstance(rhs, acb_mat):
        M = acb_mat(M)
    return M.mid().solve(rhs.mid(), algorithm="approx").mid()


def expi(G, s):
    """exp(i s G) for a Hermitian flint matrix G, via Arb's matrix exponential."""
    G = G if isinstance(G, acb_mat) else acb_mat(G)
    return (G * acb(0, s)).exp().mid()


def dag(M):
    if isinstance(M, arb_mat):
        return M.transpose()
    return M.conjugate().transpose()


def _abs_mid(z) -> float:
    return float(abs(z).mid())


def block_maxabs(M, rows: int, cols: int | None = None) -> float:
    cols = rows if cols is None else cols
    return max((_abs_mid(M[i, j]) for i in range(rows) for j in range(cols)), default=0.0)


def maxabs(M) -> float:
    return block_maxabs(M, M.nrows(), M.ncols())


def log2_abs(z) -> float:
    """log2 |z| without overflowing binary64 (Arb exponents are unbounded)."""
    r = abs(z).mid()
    if r == 0:
        return -math.inf
    return float(r.log() / arb(2).log())


def _as_arb(x):
    return x if isinstance(x, arb) else arb(float(x))


def scale_rows_cols(M, row=None, col=None):
    """diag(row) M diag(col); binary64 factors enter exactly."""
    out = M.__class__(M)
    row = None if row is None else [_as_arb(x) for x in row]
    col = None if col is None else [_as_arb(x) for x in col]
    for i in range(M.nrows()):
        for j in range(M.ncols()):
            v = out[i, j]
            if row is not None:
                v = v * row[i]
            if col is not None:
                v = v * col[j]
            out[i, j] = v
    return out
