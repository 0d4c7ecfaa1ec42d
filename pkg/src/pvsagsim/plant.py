"""Averaged power-circuit model integrated at the fast simulation rate.

Covers the PV array (single-diode fit), DC-link capacitor, averaged VSI,
series RL filter, a Thevenin grid source, and the disturbance generators
(per-phase sags, voltage harmonics, frequency changes). The fast-rate loop
is compiled with numba; the single-step and batched paths share one kernel
so both produce identical trajectories.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import NumericalBlowup
from .frames import AlphaBetaVector, ThreePhaseSample

__all__ = [
    "PvArrayModel",
    "SagEvent",
    "GridSpec",
    "Plant",
    "pv_current",
    "grid_voltage",
    "plant_step",
    "FAST_COLUMNS",
]

_CLARKE = math.sqrt(2.0 / 3.0)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_TWO_THIRDS = 2.0 / 3.0
_VDC_LIMIT = 2000.0  # V, sanity bound
_IL_LIMIT_SQ = 1.0e8  # (10 kA)^2, sanity bound

# column order of the fast-rate record block
FAST_COLUMNS = ("time", "u_g_r", "u_g_s", "u_g_t", "i_r", "i_s", "i_t",
                "v_dc", "i_p", "p", "q")


@njit(cache=True)
def _pv_current_newton(v, iph, i0, av, rs):
    """Solve iph - i0*(exp((v+i*rs)/av)-1) - i = 0 for i (bracketed Newton)."""
    lo = -2.0e4
    hi = iph + i0
    i = iph - i0 * math.expm1(min(v / av, 500.0))
    if i < lo:
        i = lo
    elif i > hi:
        i = hi
    for _ in range(60):
        x = (v + i * rs) / av
        if x > 500.0:
            x = 500.0
        e = math.expm1(x)
        f = iph - i0 * e - i
        if f > 0.0:
            lo = i
        else:
            hi = i
        fp = -i0 * (e + 1.0) * rs / av - 1.0
        i_new = i - f / fp
        if not (lo < i_new < hi):
            i_new = 0.5 * (lo + hi)
        if abs(i_new - i) <= 1e-10 * (1.0 + abs(i_new)):
            i = i_new
            break
        i = i_new
    return i if i > 0.0 else 0.0


@njit(cache=True)
def _emf(t, vpk, seg_t, seg_w, seg_th, sag_t0, sag_t1, sag_sc, h_ord, h_frac, h_ph):
    """Three-phase source voltage behind the Thevenin impedance at time t."""
    k = seg_t.shape[0] - 1
    while k > 0 and t < seg_t[k]:
        k -= 1
    theta = seg_th[k] + seg_w[k] * (t - seg_t[k])
    sr = 1.0
    ss = 1.0
    st = 1.0
    for j in range(sag_t0.shape[0]):
        if sag_t0[j] <= t < sag_t1[j]:
            sr *= sag_sc[j, 0]
            ss *= sag_sc[j, 1]
            st *= sag_sc[j, 2]
    third = 2.0 * math.pi / 3.0
    out_r = 0.0
    out_s = 0.0
    out_t = 0.0
    for p in range(3):
        if p == 0:
            th = theta
        elif p == 1:
            th = theta - third
        else:
            th = theta + third
        w = math.cos(th)
        for j in range(h_ord.shape[0]):
            w += h_frac[j] * math.cos(h_ord[j] * th + h_ph[j])
        if p == 0:
            out_r = w
        elif p == 1:
            out_s = w
        else:
            out_t = w
    return vpk * sr * out_r, vpk * ss * out_s, vpk * st * out_t


@njit(cache=True)
def _derivatives(t, ia, ib, vdc, ma, mb, iph, i0, av, rs,
                 c_link, l_tot, r_tot,
                 vpk, seg_t, seg_w, seg_th, sag_t0, sag_t1, sag_sc,
                 h_ord, h_frac, h_ph):
    er, es, et = _emf(t, vpk, seg_t, seg_w, seg_th, sag_t0, sag_t1, sag_sc,
                      h_ord, h_frac, h_ph)
    ea = _CLARKE * (er - 0.5 * es - 0.5 * et)
    eb = _INV_SQRT2 * (es - et)
    kpwm = _TWO_THIRDS * vdc
    dia = (ma * kpwm - ea - r_tot * ia) / l_tot
    dib = (mb * kpwm - eb - r_tot * ib) / l_tot
    ip = _pv_current_newton(vdc, iph, i0, av, rs)
    idc = _TWO_THIRDS * (ma * ia + mb * ib)
    dvdc = (ip - idc) / c_link
    return dia, dib, dvdc, ea, eb, ip


@njit(cache=True)
def _advance(ia, ib, vdc, t, n_steps, h, ma, mb,
             iph, i0, av, rs,
             c_link, l_tot, r_tot, r_th, l_th,
             vpk, seg_t, seg_w, seg_th, sag_t0, sag_t1, sag_sc,
             h_ord, h_frac, h_ph,
             rec, rec_i):
    """n_steps RK4 steps with fixed modulation; records the state at each step start.

    Returns (ia, ib, vdc, t, status) with status 0 on success, 1 on a sanity
    bound violation (recording stops at the offending step).
    """
    for n in range(n_steps):
        d1a, d1b, d1v, ea, eb, ip = _derivatives(
            t, ia, ib, vdc, ma, mb, iph, i0, av, rs, c_link, l_tot, r_tot,
            vpk, seg_t, seg_w, seg_th, sag_t0, sag_t1, sag_sc, h_ord, h_frac, h_ph)
        if rec_i >= 0:
            ua = ea + r_th * ia + l_th * d1a
            ub = eb + r_th * ib + l_th * d1b
            row = rec_i + n
            rec[row, 0] = t
            rec[row, 1] = _CLARKE * ua
            rec[row, 2] = _CLARKE * (-0.5 * ua + 0.5 * math.sqrt(3.0) * ub)
            rec[row, 3] = _CLARKE * (-0.5 * ua - 0.5 * math.sqrt(3.0) * ub)
            rec[row, 4] = _CLARKE * ia
            rec[row, 5] = _CLARKE * (-0.5 * ia + 0.5 * math.sqrt(3.0) * ib)
            rec[row, 6] = _CLARKE * (-0.5 * ia - 0.5 * math.sqrt(3.0) * ib)
            rec[row, 7] = vdc
            rec[row, 8] = ip
            rec[row, 9] = ua * ia + ub * ib
            rec[row, 10] = ub * ia - ua * ib
        half = 0.5 * h
        d2a, d2b, d2v, _, _, _ = _derivatives(
            t + half, ia + half * d1a, ib + half * d1b, vdc + half * d1v,
            ma, mb, iph, i0, av, rs, c_link, l_tot, r_tot,
            vpk, seg_t, seg_w, seg_th, sag_t0, sag_t1, sag_sc, h_ord, h_frac, h_ph)
        d3a, d3b, d3v, _, _, _ = _derivatives(
            t + half, ia + half * d2a, ib + half * d2b, vdc + half * d2v,
            ma, mb, iph, i0, av, rs, c_link, l_tot, r_tot,
            vpk, seg_t, seg_w, seg_th, sag_t0, sag_t1, sag_sc, h_ord, h_frac, h_ph)
        d4a, d4b, d4v, _, _, _ = _derivatives(
            t + h, ia + h * d3a, ib + h * d3b, vdc + h * d3v,
            ma, mb, iph, i0, av, rs, c_link, l_tot, r_tot,
            vpk, seg_t, seg_w, seg_th, sag_t0, sag_t1, sag_sc, h_ord, h_frac, h_ph)
        sixth = h / 6.0
        ia += sixth * (d1a + 2.0 * d2a + 2.0 * d3a + d4a)
        ib += sixth * (d1b + 2.0 * d2b + 2.0 * d3b + d4b)
        vdc += sixth * (d1v + 2.0 * d2v + 2.0 * d3v + d4v)
        t += h
        if abs(vdc) > _VDC_LIMIT or ia * ia + ib * ib > _IL_LIMIT_SQ:
            return ia, ib, vdc, t, 1
    return ia, ib, vdc, t, 0


@dataclass
class PvArrayModel:
    """Single-diode array model fitted so all four datasheet anchors hold.

    The fit solves I = iph - i0*(exp((V+I*rs)/a)-1) with (a, rs) chosen so the
    curve passes through (v_mpp, i_mpp) with dP/dV = 0 there, besides matching
    v_oc and i_sc exactly. iph scales with irradiance; the temperature
    coefficients are standard and only matter away from 25 degC.
    """

    v_oc: float = 1003.2   # V
    i_sc: float = 653.04   # A
    v_mpp: float = 807.4   # V
    i_mpp: float = 627.84  # A
    series_modules: int = 22
    strings: int = 72
    alpha_isc: float = 5e-4  # 1/K, short-circuit current coefficient
    iph: float = field(init=False, repr=False, default=0.0)
    i0: float = field(init=False, repr=False, default=0.0)
    av: float = field(init=False, repr=False, default=0.0)
    rs: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        if not (0.0 < self.v_mpp < self.v_oc):
            raise ValueError("v_mpp must lie in (0, v_oc)")
        if not (0.0 < self.i_mpp < self.i_sc):
            raise ValueError("i_mpp must lie in (0, i_sc)")
        self._fit()

    def _i0_iph(self, a, rs):
        i0 = self.i_sc / (math.exp(self.v_oc / a) - math.exp(self.i_sc * rs / a))
        iph = i0 * math.expm1(self.v_oc / a)
        return i0, iph

    def _mpp_current_residual(self, a, rs):
        i0, iph = self._i0_iph(a, rs)
        return iph - i0 * math.expm1((self.v_mpp + self.i_mpp * rs) / a) - self.i_mpp

    def _fit(self):
        a_lo = self.v_oc / 700.0  # keeps exp(v_oc/a) finite

        def dpdv_at_mpp(rs):
            a = brentq(lambda aa: self._mpp_current_residual(aa, rs), a_lo, 600.0,
                       xtol=1e-12, rtol=1e-15)
            i0, _ = self._i0_iph(a, rs)
            e = math.exp((self.v_mpp + self.i_mpp * rs) / a)
            didv = -(i0 / a) * e / (1.0 + (i0 * rs / a) * e)
            return self.i_mpp + self.v_mpp * didv

        rs_hi = 0.95 * (self.v_oc - self.v_mpp) / self.i_mpp
        rs = brentq(dpdv_at_mpp, 1e-9, rs_hi, xtol=1e-14, rtol=1e-15)
        a = brentq(lambda aa: self._mpp_current_residual(aa, rs), a_lo, 600.0,
                   xtol=1e-12, rtol=1e-15)
        self.rs = rs
        self.av = a
        self.i0, self.iph = self._i0_iph(a, rs)

    def params_at(self, g: float, t_c: float):
        """Effective (iph, i0, av, rs) at irradiance g and cell temperature t_c."""
        iph = self.iph * (g / 1000.0) * (1.0 + self.alpha_isc * (t_c - 25.0))
        av = self.av * (t_c + 273.15) / 298.15
        return iph, self.i0, av, self.rs

    def current(self, v: float, g: float = 1000.0, t_c: float = 25.0) -> float:
        iph, i0, av, rs = self.params_at(g, t_c)
        return _pv_current_newton(v, iph, i0, av, rs)

    def power(self, v: float, g: float = 1000.0, t_c: float = 25.0) -> float:
        return v * self.current(v, g, t_c)

    def mpp(self, g: float = 1000.0, t_c: float = 25.0):
        """Numerically locate the maximum of the P-V curve; returns (v, p)."""
        vs = np.linspace(0.2 * self.v_oc, self.v_oc, 4001)
        ps = np.array([self.power(v, g, t_c) for v in vs])
        k = int(np.argmax(ps))
        lo = vs[max(k - 1, 0)]
        hi = vs[min(k + 1, len(vs) - 1)]
        for _ in range(60):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if self.power(m1, g, t_c) < self.power(m2, g, t_c):
                lo = m1
            else:
                hi = m2
        v = 0.5 * (lo + hi)
        return v, self.power(v, g, t_c)


def pv_current(v: float, g: float, t_c: float, model: PvArrayModel) -> float:
    """Array current at terminal voltage v, irradiance g, cell temperature t_c."""
    return model.current(v, g, t_c)


@dataclass(frozen=True)
class SagEvent:
    """Per-phase amplitude scaling active on [t_start, t_end)."""

    t_start: float
    t_end: float
    per_phase_scale: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("sag needs t_start < t_end")
        for s in self.per_phase_scale:
            if not 0.0 <= s <= 1.0:
                raise ValueError("sag scale fractions must lie in [0, 1]")


@dataclass
class GridSpec:
    """Source-side description: stiff Thevenin grid plus disturbance schedule.

    harmonics entries are (order, fraction) or (order, fraction, phase_rad)
    with fraction >= 0; order parity fixes the sequence rotation the usual
    three-wire way (5th/11th negative, 7th/13th positive).
    """

    u_gnom: float = 230.0      # V rms phase-neutral
    freq: float = 50.0         # Hz
    thevenin_r: float = 1e-3   # ohm
    thevenin_l: float = 1e-6   # H
    sags: tuple = ()
    harmonics: tuple = ()
    freq_events: tuple = ()    # (t, new_freq_hz), t ascending

    def __post_init__(self):
        for h in self.harmonics:
            if int(h[0]) < 2:
                raise ValueError("harmonic order must be >= 2")
            if h[1] < 0.0:
                raise ValueError("harmonic fractions must be >= 0")
        last = 0.0
        for t, f in self.freq_events:
            if t < last:
                raise ValueError("freq_events must be time-ascending")
            if f <= 0.0:
                raise ValueError("frequency must be positive")
            last = t

    def packed(self):
        """Flat float arrays for the compiled kernels."""
        seg_t = [0.0]
        seg_w = [2.0 * math.pi * self.freq]
        for t, f in self.freq_events:
            seg_t.append(t)
            seg_w.append(2.0 * math.pi * f)
        seg_th = [0.0]
        for k in range(1, len(seg_t)):
            seg_th.append(seg_th[k - 1] + seg_w[k - 1] * (seg_t[k] - seg_t[k - 1]))
        n_sag = len(self.sags)
        sag_t0 = np.array([s.t_start for s in self.sags], dtype=np.float64)
        sag_t1 = np.array([s.t_end for s in self.sags], dtype=np.float64)
        sag_sc = np.zeros((n_sag, 3), dtype=np.float64)
        for j, s in enumerate(self.sags):
            sag_sc[j, :] = s.per_phase_scale
        h_ord = np.array([float(h[0]) for h in self.harmonics], dtype=np.float64)
        h_frac = np.array([float(h[1]) for h in self.harmonics], dtype=np.float64)
        h_ph = np.array([float(h[2]) if len(h) > 2 else 0.0 for h in self.harmonics],
                        dtype=np.float64)
        return (self.u_gnom * math.sqrt(2.0),
                np.array(seg_t), np.array(seg_w), np.array(seg_th),
                sag_t0, sag_t1, sag_sc, h_ord, h_frac, h_ph)


def grid_voltage(t: float, spec: GridSpec) -> ThreePhaseSample:
    """Source voltage triple at time t (sags, harmonics, frequency schedule applied)."""
    r, s, tt = _emf(t, *spec.packed())
    return ThreePhaseSample(r, s, tt)


class Plant:
    """Power-circuit state advanced by fixed-step RK4 at the fast rate."""

    def __init__(self, pv: PvArrayModel, grid: GridSpec,
                 c_link: float = 65000e-6, l_filter: float = 0.15e-3,
                 r_filter: float = 5e-3, vdc_init: float = 807.4):
        self.pv = pv
        self.grid = grid
        self.c_link = c_link
        self.l_filter = l_filter
        self.r_filter = r_filter
        self.v_dc = vdc_init
        self.i_l_alpha = 0.0
        self.i_l_beta = 0.0
        self.sim_time = 0.0
        self._gp = grid.packed()
        self._l_tot = l_filter + grid.thevenin_l
        self._r_tot = r_filter + grid.thevenin_r
        self._scratch = np.zeros((1, len(FAST_COLUMNS)))

    def measure(self, m: AlphaBetaVector, g: float, t_c: float):
        """Sensor view at sim_time: PCC voltage triple, currents, v_dc, i_p."""
        iph, i0, av, rs = self.pv.params_at(g, t_c)
        d1a, d1b, _, ea, eb, ip = _derivatives(
            self.sim_time, self.i_l_alpha, self.i_l_beta, self.v_dc,
            m.alpha, m.beta, iph, i0, av, rs,
            self.c_link, self._l_tot, self._r_tot, *self._gp)
        ua = ea + self.grid.thevenin_r * self.i_l_alpha + self.grid.thevenin_l * d1a
        ub = eb + self.grid.thevenin_r * self.i_l_beta + self.grid.thevenin_l * d1b
        u_abc = ThreePhaseSample(
            _CLARKE * ua,
            _CLARKE * (-0.5 * ua + 0.5 * math.sqrt(3.0) * ub),
            _CLARKE * (-0.5 * ua - 0.5 * math.sqrt(3.0) * ub))
        return u_abc, AlphaBetaVector(self.i_l_alpha, self.i_l_beta), self.v_dc, ip

    def step(self, m: AlphaBetaVector, g: float, t_c: float, dt: float):
        """One fast integration step (modulation held)."""
        self.advance(m, g, t_c, dt, 1, self._scratch, -1)

    def advance(self, m: AlphaBetaVector, g: float, t_c: float, dt: float,
                n_steps: int, rec: np.ndarray, rec_i: int):
        """n_steps fast steps with modulation held; records rows when rec_i >= 0."""
        iph, i0, av, rs = self.pv.params_at(g, t_c)
        ia, ib, vdc, t, status = _advance(
            self.i_l_alpha, self.i_l_beta, self.v_dc, self.sim_time,
            n_steps, dt, m.alpha, m.beta, iph, i0, av, rs,
            self.c_link, self._l_tot, self._r_tot,
            self.grid.thevenin_r, self.grid.thevenin_l,
            *self._gp, rec, rec_i)
        self.i_l_alpha = ia
        self.i_l_beta = ib
        self.v_dc = vdc
        self.sim_time = t
        if status != 0:
            raise NumericalBlowup(
                f"plant state left sanity bounds at t={t:.6f}s "
                f"(v_dc={vdc:.1f} V, |i_l|={math.hypot(ia, ib):.1f} A)")


def plant_step(plant: Plant, m: AlphaBetaVector, g: float, t_c: float,
               dt: float) -> Plant:
    """Advance the circuit one fast step with modulation held; returns the plant."""
    plant.step(m, g, t_c, dt)
    return plant
