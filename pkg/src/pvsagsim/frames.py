"""Power-invariant Clarke transforms between three-phase and stationary frames.

The amplitude-preserving scaling sqrt(2/3) keeps p = u_r*i_r + u_s*i_s + u_t*i_t
equal to u_alpha*i_alpha + u_beta*i_beta for zero-sequence-free triples, so power
computed in either frame agrees. The zero-sequence channel is dropped: the plant
is three-wire and cannot carry it.
"""

import math
from typing import NamedTuple

__all__ = [
    "ThreePhaseSample",
    "AlphaBetaVector",
    "abc_to_alphabeta",
    "alphabeta_to_abc",
    "quadrature",
]

_K = math.sqrt(2.0 / 3.0)
_HALF_SQRT3 = math.sqrt(3.0) / 2.0


class ThreePhaseSample(NamedTuple):
    r: float
    s: float
    t: float


class AlphaBetaVector(NamedTuple):
    alpha: float
    beta: float

    def magnitude(self) -> float:
        return math.hypot(self.alpha, self.beta)


def abc_to_alphabeta(sample: ThreePhaseSample) -> AlphaBetaVector:
    """Project a phase triple onto the stationary alpha/beta axes."""
    r, s, t = sample
    alpha = _K * (r - 0.5 * s - 0.5 * t)
    beta = _K * _HALF_SQRT3 * (s - t)
    return AlphaBetaVector(alpha, beta)


def alphabeta_to_abc(vec: AlphaBetaVector) -> ThreePhaseSample:
    """Rebuild the zero-sequence-free phase triple from alpha/beta."""
    alpha, beta = vec
    r = _K * alpha
    s = _K * (-0.5 * alpha + _HALF_SQRT3 * beta)
    t = _K * (-0.5 * alpha - _HALF_SQRT3 * beta)
    return ThreePhaseSample(r, s, t)


def quadrature(vec: AlphaBetaVector) -> AlphaBetaVector:
    """Rotate an alpha/beta vector by +90 degrees."""
    return AlphaBetaVector(-vec.beta, vec.alpha)
