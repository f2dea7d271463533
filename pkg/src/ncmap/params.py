from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DimensionError, ParameterError

__all__ = ["DeformParams"]


@dataclass(frozen=True)
class DeformParams:
    """Control record for one deformation experiment.

    ``K`` is the interior block used for commutator assertions (default D/4);
    ``bits`` overrides the extended working precision used for products
    involving S^-1 (default grows with D, see ``hp.default_bits``).
    """

    q: float
    u: float
    D: int
    K: int | None = None
    residual_tol: float = 1e-6
    resonance_tol: float | None = None
    bits: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.u)):
            raise ParameterError(f"q and u must be finite, got q={self.q!r}, u={self.u!r}")
        if self.q <= 0:
            raise ParameterError(f"q must be positive, got {self.q!r}")
        if int(self.D) != self.D or self.D < 2:
            raise DimensionError(f"truncation dimension must be an integer >= 2, got {self.D!r}")
        if self.K is not None and not 1 <= self.K <= self.D:
            raise DimensionError(f"interior block K={self.K} must satisfy 1 <= K <= D={self.D}")

    @property
    def interior(self) -> int:
        return self.K if self.K is not None else max(1, self.D // 4)

    @property
    def resonance_threshold(self) -> float:
        if self.resonance_tol is not None:
            return self.resonance_tol
        return 1e-9 * (1 + self.u ** 2 + 2 * self.D * self.q)

    @property
    def trivial(self) -> bool:
        return self.q == 1 and self.u == 0

    def with_(self, **changes) -> DeformParams:
        return replace(self, **changes)
