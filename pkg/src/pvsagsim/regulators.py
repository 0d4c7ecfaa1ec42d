"""Discrete current and DC-voltage regulators.

Per axis, the current regulator is a proportional gain plus a bank of
second-order resonant cells: one at the synchronizer's fundamental estimate
and one per compensated harmonic, each discretized by the bilinear transform
pre-warped at its own resonance so the peak lands exactly on target at any
tracked frequency. The DC-link regulator is a clamped PI with back-calculation
anti-windup whose output is the delivered-power command.
"""

import math
from dataclasses import dataclass, field

from .frames import AlphaBetaVector

__all__ = [
    "ResonantCellState",
    "PiState",
    "CurrentRegulator",
    "pr_hc_step",
    "pi_vdc_step",
    "modulation_limit",
    "current_loop_crossover",
    "DEFAULT_KP_CURRENT",
    "DEFAULT_KI_CURRENT",
    "DEFAULT_KP_VDC",
    "DEFAULT_KI_VDC",
]

DEFAULT_KP_CURRENT = 0.0011
DEFAULT_KI_CURRENT = 0.1
DEFAULT_BANDWIDTH = 1.0  # rad/s, resonant half-bandwidth
DEFAULT_KP_VDC = 3977.5
DEFAULT_KI_VDC = 152110.0


@dataclass
class ResonantCellState:
    """One resonant cell: band-pass with gain ki exactly at
    harmonic_index times the tracked frequency, zero DC gain.

    Discretization coefficients are cached and refreshed only when the
    tracked frequency moves by more than 0.01 rad/s (or the step changes),
    keeping the per-sample cost to one biquad update.
    """

    harmonic_index: int = 1
    ki: float = DEFAULT_KI_CURRENT
    wc: float = DEFAULT_BANDWIDTH
    x1: float = 0.0
    x2: float = 0.0
    _omega: float = field(default=0.0, repr=False)
    _dt: float = field(default=0.0, repr=False)
    _b0: float = field(default=0.0, repr=False)
    _a1: float = field(default=0.0, repr=False)
    _a2: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.harmonic_index < 1:
            raise ValueError("harmonic_index must be >= 1")
        if self.ki <= 0.0 or self.wc <= 0.0:
            raise ValueError("ki and wc must be positive")
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValueError("states must be finite")

    def _refresh(self, omega: float, dt: float):
        w_res = self.harmonic_index * omega
        c = w_res / math.tan(w_res * dt / 2.0)
        a0 = c * c + 2.0 * self.wc * c + w_res * w_res
        self._b0 = 2.0 * self.ki * self.wc * c / a0
        self._a1 = 2.0 * (w_res * w_res - c * c) / a0
        self._a2 = (c * c - 2.0 * self.wc * c + w_res * w_res) / a0
        self._omega = omega
        self._dt = dt

    def coefficients(self, omega: float, dt: float):
        """Transfer-function coefficients ((b0, b1, b2), (1, a1, a2)) for the
        discretization in force at the given tracking point."""
        if dt != self._dt or abs(omega - self._omega) > 0.01:
            self._refresh(omega, dt)
        return (self._b0, 0.0, -self._b0), (1.0, self._a1, self._a2)

    def step(self, u: float, omega: float, dt: float) -> float:
        if dt != self._dt or abs(omega - self._omega) > 0.01:
            self._refresh(omega, dt)
        y = self._b0 * u + self.x1
        self.x1 = -self._a1 * y + self.x2
        self.x2 = -self._b0 * u - self._a2 * y
        return y


def pr_hc_step(states, kp: float, error: float, omega_est: float,
               dt: float):
    """One tick of the proportional + resonant-bank current regulator for a
    single axis. Returns (modulation component, states)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    out = kp * error
    for cell in states:
        out += cell.step(error, omega_est, dt)
    return out, states


class CurrentRegulator:
    """Per-axis regulator bundle: proportional path plus resonant cells,
    with a one-step undo used as the anti-windup hold when the modulation
    vector saturates."""

    def __init__(self, kp: float = DEFAULT_KP_CURRENT,
                 ki: float = DEFAULT_KI_CURRENT,
                 harmonic_channels=(5, 7, 11, 13),
                 ki_harmonic: float = DEFAULT_KI_CURRENT,
                 wc: float = DEFAULT_BANDWIDTH):
        self.kp = kp
        self.cells = [ResonantCellState(1, ki, wc)]
        self.cells += [ResonantCellState(i, ki_harmonic, wc)
                       for i in harmonic_channels]
        self._saved = None

    def step(self, error: float, omega_est: float, dt: float) -> float:
        self._saved = [(c.x1, c.x2) for c in self.cells]
        out, _ = pr_hc_step(self.cells, self.kp, error, omega_est, dt)
        return out

    def revert_last(self):
        """Undo the state update of the most recent step (saturation hold)."""
        if self._saved is None:
            return
        for cell, (x1, x2) in zip(self.cells, self._saved):
            cell.x1 = x1
            cell.x2 = x2


@dataclass
class PiState:
    """Clamped PI for the DC-link voltage. Direct acting: voltage above its
    reference means surplus energy, so the delivered-power command rises.
    out_max doubles as the supervisor's delivery ceiling."""

    integral: float = 0.0
    kp: float = DEFAULT_KP_VDC
    ki: float = DEFAULT_KI_VDC
    out_min: float = 0.0
    out_max: float = 500e3

    def __post_init__(self):
        if self.out_min > self.out_max:
            raise ValueError("out_min must not exceed out_max")


def pi_vdc_step(state: PiState, vdc_ref: float, vdc: float, dt: float):
    """One PI tick; returns (power command, state). Back-calculation keeps
    the integral consistent with the clamped output."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    error = vdc - vdc_ref
    state.integral += state.ki * error * dt
    raw = state.kp * error + state.integral
    out = min(max(raw, state.out_min), state.out_max)
    state.integral += out - raw
    return out, state


def modulation_limit(m: AlphaBetaVector, m_max: float) -> AlphaBetaVector:
    """Keep the modulation vector inside the inverter's linear range by
    radial scaling; direction is preserved."""
    if m_max <= 0.0:
        raise ValueError("m_max must be positive")
    mag = m.magnitude()
    if mag <= m_max:
        return m
    scale = m_max / mag
    return AlphaBetaVector(m.alpha * scale, m.beta * scale)


def current_loop_crossover(kp: float = DEFAULT_KP_CURRENT,
                           k_pwm: float = (2.0 / 3.0) * 807.4,
                           l_filter: float = 0.15e-3) -> float:
    """Open-loop unity-gain frequency (Hz) of the proportional current path
    through the inverter gain and the filter inductance."""
    if kp <= 0.0 or k_pwm <= 0.0 or l_filter <= 0.0:
        raise ValueError("inputs must be positive")
    return kp * k_pwm / (2.0 * math.pi * l_filter)
