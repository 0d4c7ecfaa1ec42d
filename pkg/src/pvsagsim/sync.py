"""Multi-channel grid synchronization with frequency adaptation.

A bank of adaptive band-pass filters, one per configured harmonic order,
tracks the measured voltage in the stationary frame. Each channel produces
an in-phase and a quadrature output feeding a per-channel symmetrical-
component splitter. A normalized frequency tracking loop keeps every channel
tuned, and the sag detector derives a per-unit retained-voltage figure plus
a debounced undervoltage flag from the fundamental positive sequence.
"""

import math
from dataclasses import dataclass, field

from .frames import AlphaBetaVector, ThreePhaseSample, abc_to_alphabeta

__all__ = [
    "SogiState",
    "FllState",
    "SequencePair",
    "SyncEstimate",
    "FaultDebouncer",
    "MsogiFll",
    "sogi_step",
    "fll_step",
    "pnsc",
    "msogi_step",
    "detect_fault",
]

DEFAULT_GAIN = math.sqrt(2.0)
DEFAULT_CHANNELS = (1, 5, 7, 11, 13)
FAULT_THRESHOLD = 0.85  # per-unit retained voltage below which a sag is flagged
_OMEGA_MIN = 2.0 * math.pi * 40.0
_OMEGA_MAX = 2.0 * math.pi * 70.0
_AMP_FLOOR = 1.0  # V^2, keeps the normalization finite during deep sags


@dataclass
class SogiState:
    """One band-pass/quadrature filter axis resonant at harmonic_index times
    the tracked frequency.

    v_band follows the input component at resonance with unity gain; v_quad
    is the same component shifted 90 degrees behind. u_prev holds the
    previous input sample (trapezoidal integration memory).
    """

    harmonic_index: int = 1
    gain: float = DEFAULT_GAIN
    v_band: float = 0.0
    v_quad: float = 0.0
    u_prev: float = 0.0

    def __post_init__(self):
        if self.harmonic_index < 1:
            raise ValueError("harmonic_index must be >= 1")
        if self.gain <= 0.0:
            raise ValueError("gain must be positive")


def sogi_step(state: SogiState, input_value: float, omega_res: float,
              dt: float) -> SogiState:
    """Advance the two-integrator loop one trapezoidal step.

    Continuous-time form: d(v_band)/dt = omega_res*(gain*(u - v_band) - v_quad),
    d(v_quad)/dt = omega_res*v_band. The implicit trapezoidal update is solved
    in closed form; it preserves unity gain at resonance where a forward-Euler
    step visibly detunes at this sample-rate-to-line-frequency ratio.
    """
    c_a = 0.5 * dt * state.gain * omega_res
    c_b = 0.5 * dt * omega_res
    det = 1.0 + c_a + c_b * c_b
    su = state.u_prev + input_value
    r1 = (1.0 - c_a) * state.v_band - c_b * state.v_quad + c_a * su
    r2 = c_b * state.v_band + state.v_quad
    state.v_band = (r1 - c_b * r2) / det
    state.v_quad = (c_b * r1 + (1.0 + c_a) * r2) / det
    state.u_prev = input_value
    return state


@dataclass
class FllState:
    """Estimated line angular frequency plus the tracking-loop gains."""

    omega_est: float = 2.0 * math.pi * 50.0
    gamma: float = 50.0
    k_gain: float = DEFAULT_GAIN  # fundamental band-pass gain, scales the update

    def __post_init__(self):
        if self.omega_est <= 0.0:
            raise ValueError("omega_est must be positive")


def fll_step(state: FllState, band_error: float, v_quad: float,
             amplitude_sq: float, dt: float) -> FllState:
    """Nudge omega_est along the normalized frequency-error gradient.

    band_error*v_quad has a DC component proportional to the detuning; the
    amplitude_sq normalization makes the linearized loop a first-order lag
    with time constant 1/gamma regardless of signal level. The estimate is
    clamped to [2*pi*40, 2*pi*70] rad/s.
    """
    norm = max(amplitude_sq, _AMP_FLOOR)
    state.omega_est += dt * (-state.gamma * state.omega_est * state.k_gain
                             / norm) * (band_error * v_quad)
    if state.omega_est < _OMEGA_MIN:
        state.omega_est = _OMEGA_MIN
    elif state.omega_est > _OMEGA_MAX:
        state.omega_est = _OMEGA_MAX
    return state


@dataclass(frozen=True)
class SequencePair:
    """Positive- and negative-sequence vectors of one harmonic channel."""

    pos: AlphaBetaVector
    neg: AlphaBetaVector


def pnsc(filtered: AlphaBetaVector, quad: AlphaBetaVector) -> SequencePair:
    """Split a filtered vector and its 90-degree-lagged copy into sequences.

    Wired so an abc-ordered balanced set maps entirely onto pos and its
    mirror entirely onto neg; pos + neg reconstructs the filtered input
    exactly on both axes.
    """
    pos = AlphaBetaVector(0.5 * (filtered.alpha - quad.beta),
                          0.5 * (quad.alpha + filtered.beta))
    neg = AlphaBetaVector(0.5 * (filtered.alpha + quad.beta),
                          0.5 * (filtered.beta - quad.alpha))
    return SequencePair(pos, neg)


@dataclass(frozen=True)
class SyncEstimate:
    """Per-tick synchronization output."""

    omega_est: float
    per_harmonic: dict
    v_fault: float
    fault_flag: bool


def detect_fault(pos_fundamental: AlphaBetaVector, u_gnom: float,
                 threshold: float = FAULT_THRESHOLD):
    """Per-unit retained voltage and the raw (undebounced) sag comparison.

    v_fault = |pos_fundamental| / (sqrt(3)*u_gnom); under the power-invariant
    frame convention the numerator equals sqrt(3)*u_gnom at nominal balanced
    voltage, so v_fault reads 1.0 there.
    """
    if u_gnom <= 0.0:
        raise ValueError("u_gnom must be positive")
    v_fault = pos_fundamental.magnitude() / (math.sqrt(3.0) * u_gnom)
    return v_fault, v_fault < threshold


class FaultDebouncer:
    """Boolean stream filter: a toggle needs n consecutive opposing samples."""

    def __init__(self, n_consecutive: int = 2, initial: bool = False):
        if n_consecutive < 1:
            raise ValueError("n_consecutive must be >= 1")
        self.n_consecutive = n_consecutive
        self.flag = initial
        self._count = 0

    def update(self, raw: bool) -> bool:
        if raw == self.flag:
            self._count = 0
        else:
            self._count += 1
            if self._count >= self.n_consecutive:
                self.flag = raw
                self._count = 0
        return self.flag


class MsogiFll:
    """Harmonic-decoupled filter bank with frequency tracking and sag flag.

    Each configured channel runs two filter axes (alpha, beta) at gain/order
    and resonates at order*omega_est. The decoupling cross-feed subtracts the
    other channels' current band-pass estimates from each channel's input, so
    close harmonics do not leak into each other at steady state.
    """

    def __init__(self, channels=DEFAULT_CHANNELS, gain: float = DEFAULT_GAIN,
                 gamma: float = 50.0, freq_init: float = 50.0,
                 u_gnom: float = 230.0, threshold: float = FAULT_THRESHOLD,
                 debounce_samples: int = 2):
        channels = tuple(int(c) for c in channels)
        if 1 not in channels:
            raise ValueError("the fundamental channel (order 1) is required")
        if len(set(channels)) != len(channels):
            raise ValueError("duplicate harmonic channels")
        self.channels = channels
        self.cells = {i: (SogiState(i, gain / i), SogiState(i, gain / i))
                      for i in channels}
        self.fll = FllState(2.0 * math.pi * freq_init, gamma, gain)
        self.u_gnom = u_gnom
        self.threshold = threshold
        self.debouncer = FaultDebouncer(debounce_samples)

    def preload_fundamental(self, amplitude: float, phase: float, dt: float):
        """Seed the fundamental channel as if already locked to
        amplitude*(cos(phase), sin(phase)) rotating at omega_est."""
        w = self.fll.omega_est
        ca, cb = self.cells[1]
        ca.v_band = amplitude * math.cos(phase)
        ca.v_quad = amplitude * math.sin(phase)
        ca.u_prev = amplitude * math.cos(phase - w * dt)
        cb.v_band = amplitude * math.sin(phase)
        cb.v_quad = -amplitude * math.cos(phase)
        cb.u_prev = amplitude * math.sin(phase - w * dt)

    def step(self, u_abc: ThreePhaseSample, dt: float) -> SyncEstimate:
        u = abc_to_alphabeta(u_abc)
        omega = self.fll.omega_est
        # Cross-feed snapshot: every channel sees the others' pre-update
        # estimates, rotated forward one tick on each channel's own phasor
        # (band, quad lags 90 deg) so the subtraction is time-aligned with
        # the new input sample instead of lagging it.
        pre_a = {}
        pre_b = {}
        for i in self.channels:
            ca, cb = self.cells[i]
            cs = math.cos(i * omega * dt)
            sn = math.sin(i * omega * dt)
            pre_a[i] = ca.v_band * cs - ca.v_quad * sn
            pre_b[i] = cb.v_band * cs - cb.v_quad * sn
        sum_a = sum(pre_a.values())
        sum_b = sum(pre_b.values())
        eff1_a = 0.0
        eff1_b = 0.0
        for i in self.channels:
            ca, cb = self.cells[i]
            eff_a = u.alpha - (sum_a - pre_a[i])
            eff_b = u.beta - (sum_b - pre_b[i])
            sogi_step(ca, eff_a, i * omega, dt)
            sogi_step(cb, eff_b, i * omega, dt)
            if i == 1:
                eff1_a = eff_a
                eff1_b = eff_b
        ca1, cb1 = self.cells[1]
        amp_sq = (ca1.v_band * ca1.v_band + ca1.v_quad * ca1.v_quad
                  + cb1.v_band * cb1.v_band + cb1.v_quad * cb1.v_quad)
        fll_step(self.fll, eff1_a - ca1.v_band, ca1.v_quad, amp_sq, dt)
        fll_step(self.fll, eff1_b - cb1.v_band, cb1.v_quad, amp_sq, dt)
        per_harmonic = {}
        for i in self.channels:
            ca, cb = self.cells[i]
            per_harmonic[i] = pnsc(AlphaBetaVector(ca.v_band, cb.v_band),
                                   AlphaBetaVector(ca.v_quad, cb.v_quad))
        v_fault, raw = detect_fault(per_harmonic[1].pos, self.u_gnom,
                                    self.threshold)
        flag = self.debouncer.update(raw)
        return SyncEstimate(self.fll.omega_est, per_harmonic, v_fault, flag)


def msogi_step(u_abc: ThreePhaseSample, dt: float, state: MsogiFll) -> SyncEstimate:
    """Advance the full synchronization stage one controller tick."""
    return state.step(u_abc, dt)
