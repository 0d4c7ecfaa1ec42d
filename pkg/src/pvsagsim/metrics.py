"""Time-series analysis for simulation runs.

All spectral quantities come from single-bin discrete Fourier sums over a
window trimmed to a whole number of fundamental cycles, so no window
function is needed. The headline report is computed over the dominant
operating-mode window: the longest fault episode when one exists, otherwise
the longest normal stretch.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import WindowTooShort

__all__ = [
    "SERIES_COLUMNS",
    "MetricsReport",
    "single_bin",
    "phasor",
    "phase_lag_degrees",
    "thd",
    "settle_time",
    "mode_timeline",
    "compute_metrics",
]

SERIES_COLUMNS = ("time", "u_g_r", "u_g_s", "u_g_t", "i_r", "i_s", "i_t",
                  "v_dc", "i_p", "p", "q", "v_fault", "omega_est", "mode")

MIN_CYCLES = 5
FAULT_SETTLE_SKIP = 0.15   # s discarded after a fault-mode entry
NORMAL_SETTLE_SKIP = 0.5   # s discarded at the head of a normal stretch


@dataclass(frozen=True)
class MetricsReport:
    """Headline numbers over the analysis window plus whole-run extrema."""

    p_mean: float
    p_ripple_2w: float
    q_mean: float
    q_ripple_2w: float
    thd_per_phase: tuple
    max_phase_current_peak: float
    v_fault_min: float
    v_fault_max: float
    omega_settle_time: float
    vdc_mean: float
    vdc_ripple_2w: float
    mode_timeline: tuple
    window: tuple  # (t_start, t_end) actually analyzed

    def as_dict(self):
        out = {
            "p_mean": self.p_mean,
            "p_ripple_2w": self.p_ripple_2w,
            "q_mean": self.q_mean,
            "q_ripple_2w": self.q_ripple_2w,
            "thd_phase_r": self.thd_per_phase[0],
            "thd_phase_s": self.thd_per_phase[1],
            "thd_phase_t": self.thd_per_phase[2],
            "max_phase_current_peak": self.max_phase_current_peak,
            "v_fault_min": self.v_fault_min,
            "v_fault_max": self.v_fault_max,
            "omega_settle_time": self.omega_settle_time,
            "vdc_mean": self.vdc_mean,
            "vdc_ripple_2w": self.vdc_ripple_2w,
            "window_start": self.window[0],
            "window_end": self.window[1],
            "mode_timeline": ";".join(
                f"{t:.6f}:{code}" for t, code in self.mode_timeline),
        }
        return out


def _bin_raw(seg, dt: float, f_hz: float) -> complex:
    """Single-bin sum over the segment exactly as given (no trimming)."""
    t = np.arange(len(seg)) * dt
    return 2.0 * np.sum(seg * np.exp(-2j * math.pi * f_hz * t)) / len(seg)


def _whole_periods(n_samples: int, dt: float, f_hz: float) -> int:
    n_per = 1.0 / (f_hz * dt)
    n = int(round(math.floor(n_samples / n_per) * n_per))
    if n < 2:
        raise WindowTooShort(f"window holds no full period of {f_hz} Hz")
    return n


def phasor(x, dt: float, f_hz: float) -> complex:
    """Complex amplitude c with x(t) ~= Re[c exp(j 2 pi f t)] over the
    window, window trimmed to whole periods of f_hz."""
    x = np.asarray(x, dtype=np.float64)
    return _bin_raw(x[:_whole_periods(len(x), dt, f_hz)], dt, f_hz)


def single_bin(x, dt: float, f_hz: float):
    """(mean, amplitude) of the f_hz component over whole periods."""
    x = np.asarray(x, dtype=np.float64)
    seg = x[:_whole_periods(len(x), dt, f_hz)]
    return float(np.mean(seg)), float(abs(_bin_raw(seg, dt, f_hz)))


def phase_lag_degrees(u, i, dt: float, f_hz: float) -> float:
    """How many degrees the i waveform lags the u waveform at f_hz,
    normalized to (-180, 180]."""
    lag = math.degrees(np.angle(phasor(u, dt, f_hz))
                       - np.angle(phasor(i, dt, f_hz)))
    lag = (lag + 180.0) % 360.0 - 180.0
    return 180.0 if lag == -180.0 else lag


def thd(x, dt: float, fundamental_hz: float, highest_bin: int = 25) -> float:
    """Total harmonic distortion: bins 2..highest_bin over the fundamental.

    All bins are evaluated over one shared window of whole fundamental
    periods, so integer harmonics stay orthogonal to the fundamental.
    """
    x = np.asarray(x, dtype=np.float64)
    seg = x[:_whole_periods(len(x), dt, fundamental_hz)]
    fund = abs(_bin_raw(seg, dt, fundamental_hz))
    if fund == 0.0:
        return math.inf
    acc = 0.0
    for k in range(2, highest_bin + 1):
        a = abs(_bin_raw(seg, dt, k * fundamental_hz))
        acc += a * a
    return math.sqrt(acc) / fund


def settle_time(time, x, band_fraction: float = 0.005) -> float:
    """Time after which x never leaves a +/-band around its final value.

    The target is the mean of the last tenth of the series; returns 0.0 when
    the whole series already sits inside the band.
    """
    time = np.asarray(time, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    target = float(np.mean(x[-max(1, len(x) // 10):]))
    band = band_fraction * abs(target)
    outside = np.abs(x - target) > band
    if not outside.any():
        return 0.0
    last = int(np.max(np.nonzero(outside)[0]))
    if last + 1 >= len(time):
        return float(time[-1] - time[0])
    return float(time[last + 1] - time[0])


def mode_timeline(time, mode) -> tuple:
    """((t, mode_code) at the start and at every change)."""
    time = np.asarray(time, dtype=np.float64)
    mode = np.asarray(mode)
    out = [(float(time[0]), int(mode[0]))]
    changes = np.nonzero(np.diff(mode) != 0)[0]
    for k in changes:
        out.append((float(time[k + 1]), int(mode[k + 1])))
    return tuple(out)


def _runs(mode):
    """Contiguous (start_idx, end_idx_exclusive, code) segments."""
    mode = np.asarray(mode)
    edges = np.nonzero(np.diff(mode) != 0)[0] + 1
    bounds = np.concatenate(([0], edges, [len(mode)]))
    return [(int(bounds[k]), int(bounds[k + 1]), int(mode[bounds[k]]))
            for k in range(len(bounds) - 1)]


def _analysis_window(time, mode, dt, fundamental_hz):
    """(i0, i1) sample range: longest fault episode if any, else longest
    normal stretch, head-trimmed for settling and tail-trimmed to whole
    fundamental cycles."""
    runs = _runs(mode)
    # merge adjacent fault-mode runs into episodes
    episodes = []
    for start, stop, code in runs:
        if code in (1, 2):
            if episodes and episodes[-1][1] == start:
                episodes[-1] = (episodes[-1][0], stop)
            else:
                episodes.append((start, stop))
    if episodes:
        start, stop = max(episodes, key=lambda e: e[1] - e[0])
        skip = FAULT_SETTLE_SKIP
    else:
        normal = [(s, e) for s, e, code in runs if code == 0]
        if normal:
            start, stop = max(normal, key=lambda e: e[1] - e[0])
            skip = NORMAL_SETTLE_SKIP
        else:
            start, stop, _ = max(runs, key=lambda e: e[1] - e[0])
            skip = FAULT_SETTLE_SKIP
    i0 = start + int(round(skip / dt))
    per = 1.0 / (fundamental_hz * dt)
    cycles = math.floor((stop - i0) / per)
    if cycles < MIN_CYCLES:
        raise WindowTooShort(
            f"analysis window holds {max(cycles, 0)} fundamental cycles, "
            f"need {MIN_CYCLES}")
    return i0, i0 + int(round(cycles * per))


def compute_metrics(series: dict, fundamental_hz: float) -> MetricsReport:
    """Headline report for a full-rate series (see SERIES_COLUMNS)."""
    time = np.asarray(series["time"], dtype=np.float64)
    if len(time) < 2:
        raise WindowTooShort("series holds fewer than two samples")
    dt = float(time[1] - time[0])
    i0, i1 = _analysis_window(time, series["mode"], dt, fundamental_hz)
    f2 = 2.0 * fundamental_hz

    p_mean, p_rip = single_bin(series["p"][i0:i1], dt, f2)
    q_mean, q_rip = single_bin(series["q"][i0:i1], dt, f2)
    vdc_mean, vdc_rip = single_bin(series["v_dc"][i0:i1], dt, f2)
    thds = tuple(thd(series[c][i0:i1], dt, fundamental_hz)
                 for c in ("i_r", "i_s", "i_t"))
    peak = max(float(np.max(np.abs(series[c][i0:i1])))
               for c in ("i_r", "i_s", "i_t"))
    return MetricsReport(
        p_mean=p_mean,
        p_ripple_2w=p_rip,
        q_mean=q_mean,
        q_ripple_2w=q_rip,
        thd_per_phase=thds,
        max_phase_current_peak=peak,
        v_fault_min=float(np.min(series["v_fault"])),
        v_fault_max=float(np.max(series["v_fault"])),
        omega_settle_time=settle_time(time, series["omega_est"]),
        vdc_mean=vdc_mean,
        vdc_ripple_2w=vdc_rip,
        mode_timeline=mode_timeline(time, series["mode"]),
        window=(float(time[i0]), float(time[i1 - 1] + dt)),
    )
