"""Two-rate deterministic simulation loop and its file outputs.

The circuit integrates at the fast step; the controller samples, decides,
and latches a new modulation vector every eighth step. A value latched at
tick k drives the circuit during the tick k+1 interval (one-sample delay),
so the loop reproduces the sampled, delayed behavior of a discrete
controller without modeling switching.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalBlowup, SequenceSingularity, WindowTooShort
from .frames import AlphaBetaVector
from .lvrt import LvrtSupervisor, MpptState, OperatingMode, s_fault
from .metrics import SERIES_COLUMNS, MetricsReport, compute_metrics
from .plant import FAST_COLUMNS, Plant
from .references import current_references
from .regulators import CurrentRegulator, PiState, modulation_limit, pi_vdc_step
from .scenario import Scenario
from .sync import MsogiFll

__all__ = ["T_FAST", "T_CONTROL", "CONTROL_DIVISOR", "SimResult",
           "run_scenario"]

T_FAST = 5.1196e-6
CONTROL_DIVISOR = 8
T_CONTROL = CONTROL_DIVISOR * T_FAST

# Smoothing time constant of the available-power estimate fed to the mode
# machine. Long against the tick, short against the tracking cadence.
P_AVAILABLE_TAU = 0.02

_ZERO_AB = AlphaBetaVector(0.0, 0.0)


@dataclass
class SimResult:
    """Everything one run produced: full-rate series, analysis, diagnostics.

    series holds one numpy array per SERIES_COLUMNS name at the fast rate;
    commands holds the per-tick delivery command trail (active command,
    reactive set point, apparent-power budget) used by invariant checks.
    failed means the run aborted early; the series is truncated to whole
    controller ticks either way.
    """

    name: str
    series: dict
    commands: dict
    fundamental_hz: float
    decimation: int = 8
    report: MetricsReport | None = None
    failed: bool = False
    failure: str = ""
    metrics_error: str = ""

    def write_csv(self, path):
        cols = [self.series[c] for c in SERIES_COLUMNS]
        data = np.column_stack(cols)[:: self.decimation]
        fmt = ["%.10g"] * (len(SERIES_COLUMNS) - 1) + ["%d"]
        header = ",".join(SERIES_COLUMNS)
        np.savetxt(path, data, fmt=fmt, delimiter=",", header=header,
                   comments="")

    def write_metrics(self, path):
        lines = [f"scenario = {self.name}",
                 f"failed = {int(self.failed)}"]
        if self.failure:
            lines.append(f"failure = {self.failure}")
        if self.report is not None:
            for key, value in self.report.as_dict().items():
                lines.append(f"{key} = {value}")
        elif self.metrics_error:
            lines.append(f"metrics_error = {self.metrics_error}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _feedforward(fund, omega, v_dc, lead):
    """Modulation that reproduces the estimated fundamental grid voltage.

    The positive and negative sequences are rotated forward by their own
    travel over the hold-plus-delay interval, so the value latched now is
    phase-correct when it reaches the bridge. Without this term the
    current regulator would have to cancel the whole grid voltage out of
    its finite resonant gain, leaving a standing tracking error.
    """
    ang = omega * lead
    cs = math.cos(ang)
    sn = math.sin(ang)
    k_pwm = (2.0 / 3.0) * v_dc
    ff_a = (fund.pos.alpha * cs - fund.pos.beta * sn
            + fund.neg.alpha * cs + fund.neg.beta * sn) / k_pwm
    ff_b = (fund.pos.beta * cs + fund.pos.alpha * sn
            + fund.neg.beta * cs - fund.neg.alpha * sn) / k_pwm
    return ff_a, ff_b


def run_scenario(sc: Scenario) -> SimResult:
    """Execute one scenario end to end; never raises for in-run physics
    faults (those mark the result failed and truncate the series)."""
    ctl = sc.control
    t_cell = ctl.t_cell
    g0 = sc.irradiance_at(0.0)
    v0, p0 = sc.pv.mpp(g0, t_cell)

    plant = Plant(sc.pv, sc.grid, vdc_init=v0)
    ab_nom = math.sqrt(3.0) * sc.grid.u_gnom
    # expected steady delivery: array power net of the filter loss
    p_net0 = p0 - plant.r_filter * (p0 / ab_nom) ** 2
    # start with that power already flowing, in phase with the grid, so
    # the run opens at the operating point instead of with an inrush that
    # pins the DC-link regulator at its ceiling
    plant.i_l_alpha = min(p_net0, ctl.s_nom) / ab_nom
    plant.i_l_beta = 0.0

    freq0 = ctl.fll_init_hz if ctl.fll_init_hz > 0.0 else sc.grid.freq
    sync = MsogiFll(channels=ctl.sync_channels, gamma=ctl.gamma,
                    freq_init=freq0, u_gnom=sc.grid.u_gnom,
                    threshold=ctl.fault_threshold,
                    debounce_samples=ctl.debounce_samples)
    sync.preload_fundamental(ab_nom, 0.0, T_CONTROL)

    mppt = MpptState(vdc_ref=v0, step=ctl.mppt_step,
                     v_min=0.5 * sc.pv.v_oc, v_max=sc.pv.v_oc,
                     ramp_gain=ctl.ramp_gain, max_move=ctl.max_move,
                     v_floor=v0)
    supervisor = LvrtSupervisor(s_nom=ctl.s_nom, u_gnom=sc.grid.u_gnom,
                                profile=sc.lvrt_profile, mppt=mppt,
                                mppt_period=ctl.mppt_period,
                                reg_period=T_CONTROL)

    # integral preload at the same settling delivery; starting above it
    # (at the raw array power) would pin the output at the apparent-power
    # ceiling and let the DC link drift up the flat side of the curve
    pi = PiState(integral=min(p_net0, ctl.s_nom), kp=ctl.kp_vdc,
                 ki=ctl.ki_vdc, out_min=0.0, out_max=ctl.s_nom)

    hc = ctl.harmonic_channels if ctl.hc_enabled else ()
    reg_a = CurrentRegulator(kp=ctl.kp_current, ki=ctl.ki_current,
                             harmonic_channels=hc,
                             ki_harmonic=ctl.ki_harmonic, wc=ctl.wc)
    reg_b = CurrentRegulator(kp=ctl.kp_current, ki=ctl.ki_current,
                             harmonic_channels=hc,
                             ki_harmonic=ctl.ki_harmonic, wc=ctl.wc)
    # initial latch: the feedforward value for the first held interval,
    # phased to its center
    w0 = 2.0 * math.pi * freq0
    m_amp = ab_nom / ((2.0 / 3.0) * v0)
    m_hold = AlphaBetaVector(m_amp * math.cos(0.5 * w0 * T_CONTROL),
                             m_amp * math.sin(0.5 * w0 * T_CONTROL))

    n_ticks = int(sc.duration / T_CONTROL)
    n_rows = n_ticks * CONTROL_DIVISOR
    rec = np.zeros((n_rows, len(FAST_COLUMNS)))
    v_fault_tick = np.zeros(n_ticks)
    omega_tick = np.zeros(n_ticks)
    mode_tick = np.zeros(n_ticks)
    p_cmd_tick = np.zeros(n_ticks)
    q_ref_tick = np.zeros(n_ticks)
    budget_tick = np.zeros(n_ticks)

    p_avail = v0 * plant.pv.current(v0, g0, t_cell)
    smooth = T_CONTROL / P_AVAILABLE_TAU
    fault_t0 = None
    failed = False
    failure = ""
    done_ticks = 0

    for k in range(n_ticks):
        t_k = plant.sim_time
        g = sc.irradiance_at(t_k)
        try:
            u_abc, i_meas, v_dc, i_p = plant.measure(m_hold, g, t_cell)
            est = sync.step(u_abc, T_CONTROL)
            p_dc = v_dc * i_p
            supervisor.observe(v_dc, p_dc)
            if supervisor.mode is not OperatingMode.FAULT_NON_MPPT:
                # off the tracking branch the measurement stops meaning
                # "what the array could do", so the estimate freezes there
                p_avail += smooth * (p_dc - p_avail)
            if est.fault_flag:
                if fault_t0 is None:
                    fault_t0 = t_k
                t_since = t_k - fault_t0
            else:
                fault_t0 = None
                t_since = 0.0
            sp = supervisor.step(est, p_avail, t_since)
            pi.out_max = sp.p_ref
            p_cmd, _ = pi_vdc_step(pi, sp.vdc_ref, v_dc, T_CONTROL)
            fund = est.per_harmonic[1]
            if sp.mode is OperatingMode.DISCONNECTED:
                i_star = _ZERO_AB
            else:
                i_star = current_references(p_cmd, sp.q_ref, fund.pos,
                                            fund.neg)
            ff_a, ff_b = _feedforward(fund, est.omega_est, v_dc,
                                      1.5 * T_CONTROL)
            m_raw = AlphaBetaVector(
                ff_a + reg_a.step(i_star.alpha - i_meas.alpha,
                                  est.omega_est, T_CONTROL),
                ff_b + reg_b.step(i_star.beta - i_meas.beta,
                                  est.omega_est, T_CONTROL))
            m_next = modulation_limit(m_raw, 1.0)
            if m_next is not m_raw:
                reg_a.revert_last()
                reg_b.revert_last()
            v_fault_tick[k] = est.v_fault
            omega_tick[k] = est.omega_est
            mode_tick[k] = sp.mode.code
            p_cmd_tick[k] = p_cmd
            q_ref_tick[k] = sp.q_ref
            budget_tick[k] = s_fault(fund.pos, fund.neg, ctl.s_nom,
                                     sc.grid.u_gnom)
            plant.advance(m_hold, g, t_cell, T_FAST, CONTROL_DIVISOR,
                          rec, k * CONTROL_DIVISOR)
            m_hold = m_next
        except (NumericalBlowup, SequenceSingularity) as exc:
            failed = True
            failure = f"{type(exc).__name__} at t={t_k:.6f}s: {exc}"
            break
        done_ticks = k + 1

    n_rows = done_ticks * CONTROL_DIVISOR
    series = {}
    for j, name in enumerate(FAST_COLUMNS):
        series[name] = rec[:n_rows, j].copy()
    series["v_fault"] = np.repeat(v_fault_tick[:done_ticks], CONTROL_DIVISOR)
    series["omega_est"] = np.repeat(omega_tick[:done_ticks], CONTROL_DIVISOR)
    series["mode"] = np.repeat(mode_tick[:done_ticks], CONTROL_DIVISOR)
    commands = {
        "p_cmd": p_cmd_tick[:done_ticks].copy(),
        "q_ref": q_ref_tick[:done_ticks].copy(),
        "s_budget": budget_tick[:done_ticks].copy(),
    }

    result = SimResult(name=sc.name, series=series, commands=commands,
                       fundamental_hz=sc.grid.freq,
                       decimation=int(sc.decimation),
                       failed=failed, failure=failure)
    try:
        result.report = compute_metrics(series, sc.grid.freq)
    except WindowTooShort as exc:
        result.metrics_error = str(exc)
    return result
