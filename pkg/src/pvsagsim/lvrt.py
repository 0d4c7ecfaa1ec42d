"""Undervoltage ride-through supervision and DC-side operating-point logic.

Maps the synchronizer's per-unit retained voltage onto delivery set points:
the fault-mode apparent-power budget, the national-code reactive-power
requirement, the active-power remainder, the stay-connected/disconnect
profile, and the two DC-voltage reference policies (maximum-power tracking
in normal conditions, deliberate right-branch operation when the fault
budget is below the available power).
"""

import math
from dataclasses import dataclass, field
from enum import Enum

from .frames import AlphaBetaVector

__all__ = [
    "OperatingMode",
    "SetPoints",
    "RideThroughProfile",
    "MpptState",
    "LvrtSupervisor",
    "s_fault",
    "q_requirement",
    "p_fault",
    "mppt_step",
    "non_mppt_step",
    "supervisor_step",
]

_SQRT3 = math.sqrt(3.0)


class OperatingMode(Enum):
    NORMAL_MPPT = "NormalMppt"
    FAULT_MPPT = "FaultMppt"
    FAULT_NON_MPPT = "FaultNonMppt"
    DISCONNECTED = "Disconnected"

    @property
    def code(self) -> int:
        """Stable integer id for numeric time-series output."""
        return _MODE_CODES[self]


_MODE_CODES = {
    OperatingMode.NORMAL_MPPT: 0,
    OperatingMode.FAULT_MPPT: 1,
    OperatingMode.FAULT_NON_MPPT: 2,
    OperatingMode.DISCONNECTED: 3,
}


@dataclass(frozen=True)
class SetPoints:
    """Controller set points for one tick.

    p_ref is a delivery ceiling (the DC-voltage loop may command less);
    q_ref is commanded directly. Both are non-negative by the delivery
    convention; a disconnected converter commands nothing.
    """

    p_ref: float
    q_ref: float
    vdc_ref: float
    mode: OperatingMode
    fault_signal: bool

    def __post_init__(self):
        if self.p_ref < 0.0 or self.q_ref < 0.0:
            raise ValueError("set points must be non-negative")
        if self.mode is OperatingMode.DISCONNECTED and (
                self.p_ref != 0.0 or self.q_ref != 0.0):
            raise ValueError("a disconnected converter commands zero power")


@dataclass(frozen=True)
class RideThroughProfile:
    """Minimum per-unit retained voltage the plant must hold to stay
    connected, as a piecewise-linear function of time since fault onset.

    Flat extension on both ends. The shipped default keeps the plant
    connected through any sag shorter than half a second, then requires
    85% retained voltage from one second onward.
    """

    breakpoints: tuple = ((0.0, 0.0), (0.5, 0.0), (1.0, 0.85))

    def __post_init__(self):
        if not self.breakpoints:
            raise ValueError("profile needs at least one breakpoint")
        prev_t, prev_v = None, None
        for t, v in self.breakpoints:
            if not 0.0 <= v <= 1.0:
                raise ValueError("profile voltages must lie in [0, 1]")
            if prev_t is not None:
                if t <= prev_t:
                    raise ValueError("profile times must be strictly increasing")
                if v < prev_v:
                    raise ValueError("profile voltages must be non-decreasing")
            prev_t, prev_v = t, v

    def minimum_voltage(self, t_since_fault: float) -> float:
        pts = self.breakpoints
        if t_since_fault <= pts[0][0]:
            return pts[0][1]
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if t_since_fault <= t1:
                return v0 + (v1 - v0) * (t_since_fault - t0) / (t1 - t0)
        return pts[-1][1]


def s_fault(u_pos: AlphaBetaVector, u_neg: AlphaBetaVector, s_nom: float,
            u_gnom: float) -> float:
    """Apparent-power budget under the present sequence amplitudes.

    Scales the nameplate rating by (|u+| - |u-|)/nominal so every phase
    current stays within its nominal peak; never negative.
    """
    if s_nom <= 0.0 or u_gnom <= 0.0:
        raise ValueError("s_nom and u_gnom must be positive")
    depth = (u_pos.magnitude() - u_neg.magnitude()) / (_SQRT3 * u_gnom)
    return max(0.0, depth) * s_nom


def q_requirement(v_fault: float, s_nom: float) -> float:
    """Reactive power the grid code demands at a given retained voltage.

    Zero above 0.85 pu, ramping linearly to 0.75*s_nom at 0.5 pu, constant
    below; continuous at both knees.
    """
    if v_fault < 0.0:
        raise ValueError("v_fault must be >= 0")
    if v_fault >= 0.85:
        return 0.0
    if v_fault >= 0.5:
        return (15.0 / 7.0) * s_nom * (0.85 - v_fault)
    return 0.75 * s_nom


def p_fault(s_fault_va: float, q_req: float):
    """Split the fault budget: reactive demand first, remainder to active.

    Returns (active, reactive). When the demand alone exceeds the budget the
    whole budget goes reactive.
    """
    if s_fault_va < 0.0 or q_req < 0.0:
        raise ValueError("inputs must be >= 0")
    if q_req >= s_fault_va:
        return 0.0, s_fault_va
    return math.sqrt(s_fault_va * s_fault_va - q_req * q_req), q_req


@dataclass
class MpptState:
    """DC-voltage reference state shared by both tracking policies.

    vdc_ref is the command handed to the DC-voltage loop. step/direction
    belong to the perturb-and-observe climber; ramp_gain/max_move to the
    fault-mode right-branch ramp (max_move is per cadence call). v_floor is
    re-latched at the maximum-power estimate whenever right-branch operation
    begins, so the reference never falls onto the unstable left branch.
    """

    vdc_ref: float = 807.4
    prev_power: float = 0.0
    step: float = 2.0
    direction: float = 1.0
    v_min: float = 501.6
    v_max: float = 1003.2
    ramp_gain: float = 2e-4  # V per W of power error
    max_move: float = 50.0   # V per cadence call
    v_floor: float = field(default=807.4, repr=False)

    def __post_init__(self):
        if not self.v_min <= self.vdc_ref <= self.v_max:
            raise ValueError("vdc_ref must start inside [v_min, v_max]")
        if self.step <= 0.0 or self.ramp_gain <= 0.0 or self.max_move <= 0.0:
            raise ValueError("tuning values must be positive")


def mppt_step(state: MpptState, v_dc: float, p_now: float) -> MpptState:
    """One perturb-and-observe move: keep climbing while power grows,
    reverse otherwise; fixed step, clamped range.

    Two guards make the textbook climber safe against the voltage loop's
    asymmetric slew authority (pull-down collapses to ~1 kW when the
    delivery ceiling binds near the power peak):

    - transit guard: while the measurement still trails the reference by
      more than half a step, the last move has not been served yet, so
      the decision is deferred; comparing powers mid-transit (or anchoring
      the reference to the drifting measurement) turns the dither into a
      one-way voltage ratchet.
    - re-seat guard: a gap of more than three steps means regulation lost
      the reference entirely (ceiling-pinned loop during a fault episode);
      the reference is re-seated on the measurement so the climber never
      strands far from the operating point.
    """
    gap = abs(v_dc - state.vdc_ref)
    if gap > 3.0 * state.step:
        state.vdc_ref = v_dc
    elif gap > 0.5 * state.step:
        return state
    if p_now <= state.prev_power:
        state.direction = -state.direction
    state.vdc_ref = min(max(state.vdc_ref + state.direction * state.step,
                            state.v_min), state.v_max)
    state.prev_power = p_now
    return state


def non_mppt_step(state: MpptState, p_target: float, p_now: float,
                  v_dc: float) -> MpptState:
    """One right-branch ramp move toward the voltage where the source curve
    delivers p_target.

    Surplus power pushes the reference up (shedding power along the right
    branch, all the way to the open-circuit voltage when p_target is zero);
    deficit pulls it down, never below the latched maximum-power estimate.
    """
    move = state.ramp_gain * (p_now - p_target)
    if move > state.max_move:
        move = state.max_move
    elif move < -state.max_move:
        move = -state.max_move
    state.vdc_ref = min(max(state.vdc_ref + move, state.v_floor), state.v_max)
    return state


class LvrtSupervisor:
    """Mode machine tying retained voltage to delivery set points.

    Advanced once per controller tick via step(); the engine feeds the last
    DC-side measurement through observe() first. The two DC-reference
    policies run on their own slower cadence. Disconnection is absorbing.
    """

    def __init__(self, s_nom: float = 500e3, u_gnom: float = 230.0,
                 profile: RideThroughProfile | None = None,
                 mppt: MpptState | None = None,
                 mppt_period: float = 1e-3,
                 reg_period: float = 8 * 5.1196e-6):
        if mppt_period < reg_period:
            raise ValueError("tracking cadence cannot be faster than the tick")
        self.s_nom = s_nom
        self.u_gnom = u_gnom
        self.profile = profile if profile is not None else RideThroughProfile()
        self.mppt = mppt if mppt is not None else MpptState()
        self.mppt_period = mppt_period
        self.reg_period = reg_period
        self.mode = OperatingMode.NORMAL_MPPT
        self._cadence = 0.0
        self._v_dc_meas = self.mppt.vdc_ref
        self._p_dc_meas = 0.0
        self._v_acc = 0.0
        self._p_acc = 0.0
        self._n_acc = 0

    def observe(self, v_dc: float, p_dc: float):
        """Record the latest DC-side measurement for the cadence updates."""
        self._v_dc_meas = v_dc
        self._p_dc_meas = p_dc
        self._v_acc += v_dc
        self._p_acc += p_dc
        self._n_acc += 1

    def _cadence_due(self) -> bool:
        self._cadence += self.reg_period
        if self._cadence >= self.mppt_period:
            self._cadence -= self.mppt_period
            return True
        return False

    def _windowed_meas(self):
        """Mean (v_dc, p_dc) since the previous tracker update. Averaging
        over the whole period keeps double-frequency ripple on the DC link
        from flipping perturb-and-observe decisions; a period of one ripple
        cycle cancels it exactly."""
        if self._n_acc == 0:
            return self._v_dc_meas, self._p_dc_meas
        v = self._v_acc / self._n_acc
        p = self._p_acc / self._n_acc
        self._v_acc = 0.0
        self._p_acc = 0.0
        self._n_acc = 0
        return v, p

    def step(self, sync, p_available_mpp: float, t_since_fault: float,
             profile: RideThroughProfile | None = None) -> SetPoints:
        if self.mode is OperatingMode.DISCONNECTED:
            return SetPoints(0.0, 0.0, self.mppt.v_max,
                             OperatingMode.DISCONNECTED, True)
        prof = profile if profile is not None else self.profile
        fund = sync.per_harmonic[1]
        budget = s_fault(fund.pos, fund.neg, self.s_nom, self.u_gnom)
        due = self._cadence_due()
        if not sync.fault_flag:
            self.mode = OperatingMode.NORMAL_MPPT
            if due:
                mppt_step(self.mppt, *self._windowed_meas())
            # the delivery ceiling is the sequence-scaled budget itself: it
            # collapses with the voltage estimate inside the detection
            # debounce window (current protection), and in a healthy grid it
            # sits slightly above nameplate, which keeps pull-down authority
            # when DC-voltage ripple makes the loop brush the ceiling
            return SetPoints(budget, 0.0, self.mppt.vdc_ref,
                             OperatingMode.NORMAL_MPPT, False)
        if sync.v_fault < prof.minimum_voltage(t_since_fault):
            self.mode = OperatingMode.DISCONNECTED
            return SetPoints(0.0, 0.0, self.mppt.v_max,
                             OperatingMode.DISCONNECTED, True)
        q_req = q_requirement(sync.v_fault, self.s_nom)
        p_ref, q_ref = p_fault(budget, q_req)
        if p_ref > p_available_mpp:
            self.mode = OperatingMode.FAULT_MPPT
            if due:
                mppt_step(self.mppt, *self._windowed_meas())
        else:
            if self.mode is not OperatingMode.FAULT_NON_MPPT:
                # entering right-branch operation: the present tracking point
                # is the best maximum-power voltage estimate
                self.mppt.v_floor = self.mppt.vdc_ref
                self.mode = OperatingMode.FAULT_NON_MPPT
            if due:
                v_mean, p_mean = self._windowed_meas()
                non_mppt_step(self.mppt, p_ref, p_mean, v_mean)
        return SetPoints(p_ref, q_ref, self.mppt.vdc_ref, self.mode, True)


def supervisor_step(sync, p_available_mpp: float, t_since_fault: float,
                    profile: RideThroughProfile | None,
                    state: LvrtSupervisor) -> SetPoints:
    """Advance the supervision machine one controller tick."""
    return state.step(sync, p_available_mpp, t_since_fault, profile)
