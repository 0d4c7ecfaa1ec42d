"""Current reference generation for constant active power under unbalance.

Pure algebra over sequence-resolved voltage vectors: the instantaneous power
decomposition, the positive/negative split gain, the reference currents that
deliver a ripple-free active power with sinusoidal (though unbalanced) phase
currents, and the per-axis amplitude envelope used to prove the references
stay inside the inverter's current rating.
"""

import math
from dataclasses import dataclass

from .errors import DegenerateVoltage, EnvelopeSingularity, SequenceSingularity
from .frames import AlphaBetaVector

__all__ = [
    "PowerDecomposition",
    "ReferenceEnvelope",
    "instantaneous_powers",
    "k_split",
    "current_references",
    "reference_envelope",
]

_EPS_V2 = 1.0  # V^2, singularity guard on squared-amplitude denominators


@dataclass(frozen=True)
class PowerDecomposition:
    """Average and oscillating active/reactive power by sequence pairing.

    p_avg_pos + p_avg_neg + p_osc equals the instantaneous active power of
    the summed vectors exactly; same for the reactive side.
    """

    p_avg_pos: float
    p_avg_neg: float
    p_osc: float
    q_avg_pos: float
    q_avg_neg: float
    q_osc: float

    @property
    def p_total(self) -> float:
        return self.p_avg_pos + self.p_avg_neg + self.p_osc

    @property
    def q_total(self) -> float:
        return self.q_avg_pos + self.q_avg_neg + self.q_osc


def instantaneous_powers(u_pos: AlphaBetaVector, u_neg: AlphaBetaVector,
                         i_pos: AlphaBetaVector,
                         i_neg: AlphaBetaVector) -> PowerDecomposition:
    """Sequence-paired power products (reactive sign: lagging current is
    positive)."""
    return PowerDecomposition(
        p_avg_pos=u_pos.alpha * i_pos.alpha + u_pos.beta * i_pos.beta,
        p_avg_neg=u_neg.alpha * i_neg.alpha + u_neg.beta * i_neg.beta,
        p_osc=(u_pos.alpha * i_neg.alpha + u_pos.beta * i_neg.beta
               + u_neg.alpha * i_pos.alpha + u_neg.beta * i_pos.beta),
        q_avg_pos=u_pos.beta * i_pos.alpha - u_pos.alpha * i_pos.beta,
        q_avg_neg=u_neg.beta * i_neg.alpha - u_neg.alpha * i_neg.beta,
        q_osc=(u_pos.beta * i_neg.alpha - u_pos.alpha * i_neg.beta
               + u_neg.beta * i_pos.alpha - u_neg.alpha * i_pos.beta),
    )


def k_split(u_pos: AlphaBetaVector, u_neg: AlphaBetaVector) -> float:
    """Positive-sequence weight |u+|^2 / (|u+|^2 + |u-|^2), in [0, 1].

    Equals 1 on a balanced grid and decreases with unbalance. Raises
    DegenerateVoltage when both sequence amplitudes are negligible (total
    grid loss; the supervisor must disconnect).
    """
    pos_sq = u_pos.alpha ** 2 + u_pos.beta ** 2
    neg_sq = u_neg.alpha ** 2 + u_neg.beta ** 2
    total = pos_sq + neg_sq
    if total <= _EPS_V2:
        raise DegenerateVoltage(
            f"both sequence amplitudes negligible ({total:.3g} V^2)")
    return pos_sq / total


def current_references(p_ref: float, q_ref: float, u_pos: AlphaBetaVector,
                       u_neg: AlphaBetaVector) -> AlphaBetaVector:
    """Reference current delivering p_ref with zero active-power ripple.

    The active part drives (u_pos - u_neg) scaled by p_ref over
    delta = |u_pos|^2 - |u_neg|^2; the reactive part adds a current orthogonal
    to the total voltage vector, contributing zero instantaneous active power.
    Raises SequenceSingularity when delta is not safely positive (negative
    sequence as large as positive; outside the supported sag regime).
    """
    delta = (u_pos.alpha ** 2 + u_pos.beta ** 2
             - u_neg.alpha ** 2 - u_neg.beta ** 2)
    if delta <= _EPS_V2:
        raise SequenceSingularity(
            f"|u+|^2 - |u-|^2 = {delta:.3g} V^2 is not safely positive")
    i_alpha = ((u_pos.alpha - u_neg.alpha) * p_ref
               + (u_pos.beta + u_neg.beta) * q_ref) / delta
    i_beta = ((u_pos.beta - u_neg.beta) * p_ref
              - (u_pos.alpha + u_neg.alpha) * q_ref) / delta
    return AlphaBetaVector(i_alpha, i_beta)


@dataclass(frozen=True)
class ReferenceEnvelope:
    """Per-axis amplitude/phase of the reference-current trajectory.

    With the negative sequence phase-aligned to the positive one, the alpha
    axis carries the difference-amplitude terms (short) and the beta axis the
    sum-amplitude terms (large); the trajectory is the ellipse with semi-axes
    k_alpha, k_beta.
    """

    k_alpha: float
    theta_alpha: float
    k_beta: float
    theta_beta: float
    i_p_large: float
    i_p_short: float
    i_q_large: float
    i_q_short: float


def reference_envelope(p_ref: float, q_ref: float, u_pos_amp: float,
                       u_neg_amp: float, k_p: float) -> ReferenceEnvelope:
    """Ellipse geometry of the reference currents for given amplitudes.

    Uses the equivalent squared amplitudes |u+|^2 - 2*k_p*|u-|^2 (positive
    term) and 2*(1-k_p)*|u+|^2 - |u-|^2 (negative term); with k_p from
    k_split both collapse to the sequence-power difference, which keeps this
    geometry consistent with current_references. The negative-sequence term
    drops out cleanly when there is no negative sequence.
    """
    if u_pos_amp < 0.0 or u_neg_amp < 0.0:
        raise ValueError("sequence amplitudes must be >= 0")
    pos_sq = u_pos_amp * u_pos_amp
    neg_sq = u_neg_amp * u_neg_amp
    den_pos = pos_sq - 2.0 * k_p * neg_sq
    den_neg = 2.0 * (1.0 - k_p) * pos_sq - neg_sq
    if den_pos <= _EPS_V2:
        raise EnvelopeSingularity(
            f"equivalent positive amplitude {den_pos:.3g} V^2 not positive")
    w_pos = k_p / den_pos
    if den_neg <= _EPS_V2:
        if neg_sq <= _EPS_V2:
            w_neg = 0.0  # no negative sequence: the term vanishes outright
        else:
            raise EnvelopeSingularity(
                f"equivalent negative amplitude {den_neg:.3g} V^2 not positive")
    else:
        w_neg = (1.0 - k_p) / den_neg
    i_p_large = p_ref * (w_pos * u_pos_amp + w_neg * u_neg_amp)
    i_p_short = p_ref * (w_pos * u_pos_amp - w_neg * u_neg_amp)
    i_q_large = q_ref * (w_pos * u_pos_amp + w_neg * u_neg_amp)
    i_q_short = q_ref * (w_pos * u_pos_amp - w_neg * u_neg_amp)
    return ReferenceEnvelope(
        k_alpha=math.hypot(i_p_short, i_q_short),
        theta_alpha=math.atan2(i_q_short, i_p_short),
        k_beta=math.hypot(i_p_large, i_q_large),
        theta_beta=math.atan2(i_q_large, i_p_large),
        i_p_large=i_p_large,
        i_p_short=i_p_short,
        i_q_large=i_q_large,
        i_q_short=i_q_short,
    )
