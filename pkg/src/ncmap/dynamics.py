"""Equations of motion for the deformed pair under a time-dependent displacement.

Time enters only through u(t) (q fixed): S(t) comes from the same seeded
recurrence at every sample and T(t) = exp(i u(t) P). Time derivatives are
finite differences on the sampled frames (central inside, second-order
one-sided at the ends). All products touching S^-1 are formed in
extended precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from flint import acb, acb_mat, arb

from . import fock, hp, similarity
from .errors import NcmapError, ParameterError, TrajectoryError
from .fock import FockMatrix
from .params import DeformParams

__all__ = [
    "ParameterPath", "TrajectoryFrame", "evolve_free", "build_trajectory",
    "modified_eom_residual", "green_reconstruct", "commutator_drift",
    "inverse_derivative_residual", "frame_identities", "convergence_ratios",
    "trajectory_frames", "with_derivatives", "refinement_study", "gauge_drift_deviation",
]


@dataclass(frozen=True)
class ParameterPath:
    """u(t) on [0, t_end] sampled every h; kind is constant, ramp or sine.

    constant: coeffs (u0,); ramp: (u0, rate); sine: (u0, amplitude, omega).
    """

    kind: str
    coeffs: tuple
    q: float
    h: float
    t_end: float

    def __post_init__(self):
        arity = {"constant": 1, "ramp": 2, "sine": 3}
        if self.kind not in arity:
            raise ParameterError(f"unknown path kind {self.kind!r}")
        if len(self.coeffs) != arity[self.kind]:
            raise ParameterError(f"{self.kind} path takes {arity[self.kind]} coefficients")
        if not (self.h > 0 and self.t_end > 0):
            raise ParameterError("h and t_end must be positive")
        if self.h > self.t_end / 50 * (1 + 1e-12):
            raise ParameterError(f"step h={self.h} exceeds t_end/50 = {self.t_end / 50}")
        if self.q != 1 and any(self.u(t) == 0 for t in self.times):
            raise ParameterError("u(t) vanishes on the sample grid while q != 1")

    @classmethod
    def parse(cls, spec: str, q: float, h: float, t_end: float) -> ParameterPath:
        """'constant:0.7', 'ramp:0.5,0.1' or 'sine:0.7,0.2,3'."""
        kind, _, rest = spec.partition(":")
        coeffs = tuple(float(c) for c in rest.split(",")) if rest else ()
        return cls(kind.strip(), coeffs, q, h, t_end)

    def u(self, t: float) -> float:
        c = self.coeffs
        if self.kind == "constant":
            return c[0]
        if self.kind == "ramp":
            return c[0] + c[1] * t
        return c[0] + c[1] * math.sin(c[2] * t)

    @property
    def times(self) -> np.ndarray:
        n = int(round(self.t_end / self.h))
        return np.arange(n + 1) * self.h

    def spec(self) -> str:
        return f"{self.kind}:" + ",".join(repr(c) for c in self.coeffs)


@dataclass(frozen=True)
class TrajectoryFrame:
    t: float
    u: float
    a_t: FockMatrix
    S_t: FockMatrix
    T_t: FockMatrix
    A_t: FockMatrix
    B_t: FockMatrix
    dS_dt: FockMatrix | None = None
    dT_dt: FockMatrix | None = None
    residual_A: float = math.nan
    residual_B: float = math.nan
    condition: float = math.nan
    hp: dict = field(default=None, repr=False, compare=False)


def evolve_free(a0, t: float, kind: str = "annihilation") -> FockMatrix:
    """Free evolution: exp(-it) a0 for annihilation-type input, exp(+it) for creation-type."""
    sign = {"annihilation": -1, "creation": 1}[kind]
    return FockMatrix(np.exp(sign * 1j * t) * fock.as_array(a0), getattr(a0, "label", ""))


def _phase(t, sign):
    return (acb(0, sign) * arb(t)).exp()


def _make_frame(t, u, q, D, bits, rows, extra_gauge, a, ad, P, conditioning=True):
    params = DeformParams(q, u, D, bits=bits)
    if params.trivial:
        sol = similarity.solve_S(params)
    else:
        sol = similarity.solve_S(params, gauge="seed", conditioning=False)
        with hp.workprec(sol.bits):
            factors = similarity.anchored_gauge(sol, rows)
            if extra_gauge is not None:
                factors = [f * float(x) for f, x in zip(factors, extra_gauge)]
        sol = similarity.regauge(sol, factors, conditioning)
    with hp.workprec(sol.bits):
        T = hp.expi(P, u)
        Td = hp.dag(T)
        a_t = acb_mat(a) * _phase(t, -1)
        ad_t = acb_mat(ad) * _phase(t, 1)
        S, Si = acb_mat(sol.S_hp), acb_mat(sol.S_inv_hp)
        A = S * a_t * Td
        B = T * ad_t * Si
        mats = {"a": a_t, "ad": ad_t, "S": S, "Si": Si, "T": T, "Td": Td, "A": A, "B": B}
        np_ = {k: FockMatrix(hp.to_numpy(mats[k]), k) for k in ("a", "S", "T", "A", "B")}
    return TrajectoryFrame(t, u, np_["a"], np_["S"], np_["T"], np_["A"], np_["B"],
                           condition=sol.condition_estimate, hp=dict(mats, bits=sol.bits, q=q))


def _derivative(frames, key, i):
    """d/dt of hp matrix ``key`` at frame i (second order everywhere)."""
    n = len(frames) - 1
    c = arb(1 / (2 * (frames[1].t - frames[0].t)))
    X = lambda j: frames[j].hp[key]
    if 0 < i < n:
        return (X(i + 1) - X(i - 1)) * c
    if i == 0:
        return (X(0) * -3 + X(1) * 4 - X(2)) * c
    return (X(n) * 3 - X(n - 1) * 4 + X(n - 2)) * c


def trajectory_frames(path: ParameterPath, D: int, extra_gauge=None, bits: int | None = None,
                      conditioning: bool = True) -> list[TrajectoryFrame]:
    """Frames at t_i = i h without derivative fields (see ``build_trajectory``).

    Frames of a path with step h are a subsample (every other frame) of the
    same path at step h/2, so refinement studies can build the finest grid once.
    """
    times = path.times
    if len(times) < 3:
        raise ParameterError("a trajectory needs at least three frames")
    bits = bits or hp.default_bits(D)
    with hp.workprec(bits):
        a, ad = hp.ladder(D)
        P = hp.momentum(D)
    rows = None
    frames = []
    for t in times:
        u = path.u(t)
        try:
            if rows is None and not (path.q == 1 and u == 0):
                probe = similarity.solve_S(DeformParams(path.q, u, D, bits=bits), gauge="seed",
                                           conditioning=False)
                rows = similarity.anchor_rows(probe)
            frames.append(_make_frame(float(t), u, path.q, D, bits, rows, extra_gauge,
                                      a, ad, P, conditioning))
        except NcmapError as exc:
            raise TrajectoryError(float(t), exc) from exc
    return frames


def build_trajectory(path: ParameterPath, D: int, K: int | None = None,
                     extra_gauge=None, bits: int | None = None) -> list[TrajectoryFrame]:
    """Frames at t_i = i h with S(t_i) in a time-continuous gauge.

    The gauge anchors each column on the row holding its largest entry at
    t = 0 and keeps that entry at unit modulus for all t, so the gauge
    factors are smooth in t. ``extra_gauge`` multiplies every column by a
    fixed positive factor (used to check gauge invariance).
    """
    K = K if K is not None else max(1, D // 4)
    frames = trajectory_frames(path, D, extra_gauge, bits)
    return with_derivatives(frames, K)


def with_derivatives(frames, K: int) -> list[TrajectoryFrame]:
    """Fill dS_dt, dT_dt and the equation-of-motion residuals."""
    res = modified_eom_residual(frames, K)
    out = []
    with hp.workprec(_bits(frames)):
        for i, f in enumerate(frames):
            dS = hp.to_numpy(_derivative(frames, "S", i))
            dT = hp.to_numpy(_derivative(frames, "T", i))
            out.append(replace(f, dS_dt=FockMatrix(dS, "dS/dt"), dT_dt=FockMatrix(dT, "dT/dt"),
                               residual_A=float(res[i, 0]), residual_B=float(res[i, 1])))
    return out


def _bits(frames):
    return max(f.hp["bits"] for f in frames)


def _eom_terms(frames, i):
    f = frames[i]
    dA = _derivative(frames, "A", i)
    dB = _derivative(frames, "B", i)
    dS = _derivative(frames, "S", i)
    dT = _derivative(frames, "T", i)
    dSi = _derivative(frames, "Si", i)
    A, B = f.hp["A"], f.hp["B"]
    rA = dA + A * acb(0, 1) - dS * f.hp["Si"] * A - A * f.hp["T"] * hp.dag(dT)
    rB = dB - B * acb(0, 1) - B * f.hp["S"] * dSi - dT * f.hp["Td"] * B
    return rA, rB


def eom_residual_table(frames, K: int | None = None) -> np.ndarray:
    """Columns: residual_A, residual_B, max|A|, max|B| (all on the K block)."""
    if len(frames) < 3:
        raise ParameterError("need at least three frames")
    D = frames[0].A_t.dim
    K = K if K is not None else max(1, D // 4)
    out = np.empty((len(frames), 4))
    with hp.workprec(_bits(frames)):
        for i, f in enumerate(frames):
            rA, rB = _eom_terms(frames, i)
            out[i] = (hp.block_maxabs(rA, K), hp.block_maxabs(rB, K),
                      hp.block_maxabs(f.hp["A"], K), hp.block_maxabs(f.hp["B"], K))
    return out


def modified_eom_residual(frames, K: int | None = None, relative: bool = False) -> np.ndarray:
    """Per-frame (residual_A, residual_B): max-abs on the K block of

    (d/dt + i) A - S' S^-1 A - A T T'^dag   and
    (d/dt - i) B - B S (S^-1)' - T' T^dag B.

    With ``relative`` each residual is divided by the max-abs of A (or B)
    on the same block.
    """
    tab = eom_residual_table(frames, K)
    if not relative:
        return tab[:, :2]
    scale = np.where(tab[:, 2:] > 0, tab[:, 2:], 1.0)
    return tab[:, :2] / scale


def inverse_derivative_residual(frames, K: int | None = None, relative: bool = False) -> np.ndarray:
    """max-abs of d(S^-1)/dt + S^-1 S' S^-1 on the K block, per frame."""
    D = frames[0].S_t.dim
    K = K if K is not None else max(1, D // 4)
    out = np.empty(len(frames))
    with hp.workprec(_bits(frames)):
        for i, f in enumerate(frames):
            dSi = _derivative(frames, "Si", i)
            R = dSi + f.hp["Si"] * _derivative(frames, "S", i) * f.hp["Si"]
            out[i] = hp.block_maxabs(R, K)
            if relative:
                out[i] /= hp.block_maxabs(dSi, K) or 1.0
    return out


def frame_identities(frame: TrajectoryFrame, K: int) -> dict[str, float]:
    """Rearrangements of the defining relations, max-abs on the K block."""
    m = frame.hp
    with hp.workprec(m["bits"]):
        return {
            "a_Tdag": hp.block_maxabs(m["a"] * m["Td"] - m["Si"] * m["A"], K),
            "S_a": hp.block_maxabs(m["S"] * m["a"] - m["A"] * m["T"], K),
            "T_adag": hp.block_maxabs(m["T"] * m["ad"] - m["B"] * m["S"], K),
            "adag_Sinv": hp.block_maxabs(m["ad"] * m["Si"] - m["Td"] * m["B"], K),
        }


def _green_coefficients(frames, which):
    """Split X' = (sigma i I + R) X + C for X = A (sigma = -1) or B (sigma = +1).

    Returns sigma and the per-frame R(t), C(t).
    """
    Rs, Cs = [], []
    for i, f in enumerate(frames):
        m = f.hp
        dT = _derivative(frames, "T", i)
        if which == "A":
            W = m["T"] * hp.dag(dT)
            R = _derivative(frames, "S", i) * m["Si"] + W
            C = m["A"] * W - W * m["A"]
        elif which == "B":
            W = m["S"] * _derivative(frames, "Si", i)
            R = W + dT * m["Td"]
            C = m["B"] * W - W * m["B"]
        else:
            raise ParameterError(f"which must be 'A' or 'B', got {which!r}")
        Rs.append(R)
        Cs.append(C)
    return (-1 if which == "A" else 1), Rs, Cs


@dataclass(frozen=True)
class GreenResult:
    which: str
    times: np.ndarray
    deviation: np.ndarray
    reconstructed: list = field(repr=False)

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviation))


def green_reconstruct(frames, which: str = "A", K: int | None = None,
                      initial_offset=None) -> GreenResult:
    """Integrate (d/dt -/+ i - ...) X = C forward from the direct X(0) (retarded choice).

    The source C is the commutator built from the direct trajectory. The
    free phase exp(-/+ i t) is factored out exactly and the remainder is
    stepped with Crank-Nicolson on the frame grid. ``initial_offset``
    (a D x D array) perturbs X(0) to select a different solution.
    """
    D = frames[0].A_t.dim
    K = K if K is not None else max(1, D // 4)
    h = frames[1].t - frames[0].t
    key = {"A": "A", "B": "B"}.get(which)
    if key is None:
        raise ParameterError(f"which must be 'A' or 'B', got {which!r}")
    with hp.workprec(_bits(frames)):
        sigma, Rs, Cs = _green_coefficients(frames, which)
        # X = exp(sigma i t) Y with Y' = R Y + exp(-sigma i t) C
        Cs = [C * _phase(f.t, -sigma) for C, f in zip(Cs, frames)]
        I = acb_mat(hp.identity(D))
        half = arb(h / 2)
        X = frames[0].hp[key]
        if initial_offset is not None:
            X = X + hp.from_numpy(np.asarray(initial_offset, dtype=complex))
        Y = X * _phase(frames[0].t, -sigma)
        recon = [X]
        dev = [hp.block_maxabs(X - frames[0].hp[key], K)]
        for i in range(len(frames) - 1):
            rhs = (I + Rs[i] * half) * Y + (Cs[i] + Cs[i + 1]) * half
            Y = hp.solve(I - Rs[i + 1] * half, rhs)
            X = Y * _phase(frames[i + 1].t, sigma)
            recon.append(X)
            dev.append(hp.block_maxabs(X - frames[i + 1].hp[key], K))
        recon_np = [FockMatrix(hp.to_numpy(X), which) for X in recon]
    return GreenResult(which, np.array([f.t for f in frames]), np.array(dev), recon_np)


def commutator_drift(frames, K: int | None = None) -> np.ndarray:
    """max-abs of [A(t), B(t)] - (I + (q-1) N) on the K block, per frame."""
    D = frames[0].A_t.dim
    K = K if K is not None else max(1, D // 4)
    q = _path_q(frames)
    out = np.empty(len(frames))
    with hp.workprec(_bits(frames)):
        target = acb_mat(hp.identity(D) + hp.number(D) * arb(q - 1))
        for i, f in enumerate(frames):
            A, B = f.hp["A"], f.hp["B"]
            out[i] = hp.block_maxabs(A * B - B * A - target, K)
    return out


def _path_q(frames):
    # q is constant along a path; recover it from the first frame's S N S^-1 = qN + ...
    return frames[0].hp["q"] if "q" in frames[0].hp else _infer_q(frames[0])


def _infer_q(frame):
    m = frame.hp
    D = m["S"].nrows()
    with hp.workprec(m["bits"]):
        SNS = m["S"] * acb_mat(hp.number(D)) * m["Si"]
        # (1,1) entry of q N + u Q + u^2/2 I is q + u^2/2
        return float((SNS[1, 1].real - arb(frame.u) ** 2 / 2).mid())


def convergence_ratios(values) -> list[float]:
    """Successive ratios e(h)/e(h/2) for errors listed at h, h/2, h/4, ..."""
    v = [float(x) for x in values]
    return [v[i] / v[i + 1] for i in range(len(v) - 1)]


def refinement_study(path_spec: str, q: float, h: float, D: int, K: int | None = None,
                     levels: int = 3, window_steps: int = 50) -> dict:
    """Max residuals on [0, window_steps*h] for steps h, h/2, ..., h/2^(levels-1).

    The finest grid is built once; coarser grids are its subsamples.
    """
    K = K if K is not None else max(1, D // 4)
    t_end = window_steps * h
    fine = ParameterPath.parse(path_spec, q, h / 2 ** (levels - 1), t_end)
    all_frames = trajectory_frames(fine, D, conditioning=False)
    out = {"h": [], "eom_A": [], "eom_B": [], "eom_A_rel": [], "eom_B_rel": [],
           "green_A": [], "green_B": [], "inverse_derivative_rel": []}
    for j in range(levels):
        frames = all_frames[::2 ** (levels - 1 - j)]
        tab = eom_residual_table(frames, K)
        res = tab[:, :2]
        rel = res / np.where(tab[:, 2:] > 0, tab[:, 2:], 1.0)
        out["h"].append(h / 2 ** j)
        out["eom_A"].append(float(res[:, 0].max()))
        out["eom_B"].append(float(res[:, 1].max()))
        out["eom_A_rel"].append(float(rel[:, 0].max()))
        out["eom_B_rel"].append(float(rel[:, 1].max()))
        out["green_A"].append(green_reconstruct(frames, "A", K).max_deviation)
        out["green_B"].append(green_reconstruct(frames, "B", K).max_deviation)
        out["inverse_derivative_rel"].append(
            float(inverse_derivative_residual(frames, K, relative=True).max()))
    for key in ("eom_A", "eom_B", "green_A", "green_B"):
        out[key + "_ratios"] = convergence_ratios(out[key])
    return out


def gauge_drift_deviation(path_spec: str, q: float, h: float, D: int, K: int | None = None,
                          steps: int = 50, factors=None) -> float:
    """max_t |drift(t) - drift'(t)| between the anchored gauge and a rescaled one."""
    K = K if K is not None else max(1, D // 4)
    path = ParameterPath.parse(path_spec, q, h, steps * h)
    if factors is None:
        factors = [1.0 + 0.5 * math.sin(n + 1) for n in range(D)]
    f1 = trajectory_frames(path, D, conditioning=False)
    f2 = trajectory_frames(path, D, extra_gauge=factors, conditioning=False)
    return float(np.max(np.abs(commutator_drift(f1, K) - commutator_drift(f2, K))))
