"""Exception hierarchy shared by every module of the package."""


class NcmapError(Exception):
    """Base class; the CLI maps any of these to exit status 2."""


class DimensionError(NcmapError, ValueError):
    pass


class GeneratorError(NcmapError, ValueError):
    """Raised when a would-be unitary generator is not Hermitian."""


class ParameterError(NcmapError, ValueError):
    pass


class ResonanceError(NcmapError, ArithmeticError):
    def __init__(self, m, n, denominator):
        self.m, self.n, self.denominator = m, n, denominator
        super().__init__(
            f"resonance at (m={m}, n={n}): 2(n - m q) - u^2 = {denominator:.3e}")


class NoSolutionError(NcmapError):
    def __init__(self, q):
        self.q = q
        super().__init__(
            f"no invertible similarity exists for u = 0 and q = {q!r} != 1: "
            "the recurrence forces every entry to vanish")


class SimilarityOverflowError(NcmapError, OverflowError):
    def __init__(self, m, n):
        self.m, self.n = m, n
        super().__init__(
            f"recurrence overflowed binary64 at first entry (m={m}, n={n})")


class InversionError(NcmapError, ArithmeticError):
    def __init__(self, residual, condition_estimate):
        self.residual = residual
        self.condition_estimate = condition_estimate
        super().__init__(
            f"similarity inverse not certified: max|S S^-1 - I| = {residual:.3e}, "
            f"condition estimate {condition_estimate:.3e}")


class BranchDegenerateError(NcmapError):
    def __init__(self, branch, exponent_gap):
        self.branch, self.exponent_gap = branch, exponent_gap
        super().__init__(
            f"Frobenius branch {branch!r} is degenerate: exponent gap "
            f"{exponent_gap:g} is a non-negative integer, a logarithmic "
            "term may be required")


class PoleError(NcmapError, ZeroDivisionError):
    pass


class IntegrationError(NcmapError, RuntimeError):
    pass


class TrajectoryError(NcmapError):
    def __init__(self, t, cause):
        self.t, self.cause = t, cause
        super().__init__(f"solver failed at t={t:.6g}: {cause}")
