"""Variance-uncertainty sets and the sublinear generator G in one dimension."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UnsupportedDimensionError

__all__ = ["VolatilityBand", "Generator", "g_eval", "is_nondegenerate", "perturb"]


@dataclass(frozen=True)
class VolatilityBand:
    """Closed interval ``[sigma_min_sq, sigma_max_sq]`` of admissible variances.

    The band ``[0, 0]`` (no volatility at all) is rejected here and must be
    built through :meth:`null`.
    """

    sigma_min_sq: float
    sigma_max_sq: float
    _allow_null: bool = False

    def __post_init__(self):
        lo, hi = float(self.sigma_min_sq), float(self.sigma_max_sq)
        object.__setattr__(self, "sigma_min_sq", lo)
        object.__setattr__(self, "sigma_max_sq", hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise InvalidArgumentError("variances must be finite")
        if lo < 0 or lo > hi:
            raise InvalidArgumentError(
                f"need 0 <= sigma_min_sq <= sigma_max_sq, got [{lo}, {hi}]")
        if hi == 0 and not self._allow_null:
            raise InvalidArgumentError(
                "band [0, 0] is only available via VolatilityBand.null()")

    @classmethod
    def null(cls) -> "VolatilityBand":
        """The totally degenerate band: B is identically zero."""
        return cls(0.0, 0.0, _allow_null=True)

    @property
    def is_null(self) -> bool:
        return self.sigma_max_sq == 0.0

    @property
    def is_singleton(self) -> bool:
        return self.sigma_min_sq == self.sigma_max_sq

    def levels(self, k: int) -> np.ndarray:
        """``k`` equally spaced variances from the lower to the upper endpoint."""
        if k < 2:
            raise InvalidArgumentError("need at least two control levels")
        return np.linspace(self.sigma_min_sq, self.sigma_max_sq, k)


@dataclass(frozen=True)
class Generator:
    band: VolatilityBand
    dimension: int = 1

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InvalidArgumentError("dimension must be a positive integer")

    @classmethod
    def from_variances(cls, lo: float, hi: float) -> "Generator":
        if lo == 0 and hi == 0:
            return cls(VolatilityBand.null())
        return cls(VolatilityBand(lo, hi))

    def __call__(self, a):
        return g_eval(self, a)


def _check_dim(gen: Generator):
    if gen.dimension != 1:
        raise UnsupportedDimensionError(
            f"engines implement dimension 1 only, got {gen.dimension}")


def g_eval(gen: Generator, a):
    """G(a) = 1/2 sup over the band of gamma * a.

    Works elementwise on arrays; the sup is attained at an endpoint, so this
    is ``0.5 * (hi * a^+ - lo * a^-)``.
    """
    _check_dim(gen)
    a = np.asarray(a, dtype=float)
    band = gen.band
    out = 0.5 * (band.sigma_max_sq * np.maximum(a, 0.0)
                 - band.sigma_min_sq * np.maximum(-a, 0.0))
    return float(out) if out.ndim == 0 else out


def is_nondegenerate(gen: Generator) -> tuple[bool, float]:
    """Return ``(flag, lower_variance)``; the flag is set iff the lower variance is positive."""
    lo = gen.band.sigma_min_sq
    if lo > 0:
        return True, lo
    return False, 0.0


def perturb(gen: Generator, eps: float) -> Generator:
    """Generator of ``B + eps * W`` for an independent standard Brownian W.

    Shifts the band by ``eps**2``; G_eps(a) = G(a) + eps**2 * a / 2.
    """
    if not eps >= 0:
        raise InvalidArgumentError(f"eps must be >= 0, got {eps}")
    if eps == 0:
        return gen
    e2 = float(eps) ** 2
    band = VolatilityBand(gen.band.sigma_min_sq + e2, gen.band.sigma_max_sq + e2)
    return Generator(band, gen.dimension)
