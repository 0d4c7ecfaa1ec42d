"""Scenario definitions and their on-disk INI format.

A scenario bundles everything one deterministic run needs: grid disturbance
schedule, array and irradiance, controller gain overrides, ride-through
profile, duration, and output decimation. Files use configparser INI with
numbered sections for repeated events ([sag.1], [harmonic.2], ...).
"""

import configparser
from dataclasses import dataclass, field, fields, replace

from .errors import ScenarioError
from .lvrt import RideThroughProfile
from .plant import GridSpec, PvArrayModel, SagEvent

__all__ = ["ControlConfig", "Scenario", "load_scenario",
           "scenario_from_parser", "with_overrides"]


@dataclass(frozen=True)
class ControlConfig:
    """Controller-side tuning; defaults reproduce the shipped design."""

    kp_current: float = 0.0011
    ki_current: float = 0.1
    ki_harmonic: float = 0.1
    wc: float = 1.0
    hc_enabled: bool = True
    harmonic_channels: tuple = (5, 7, 11, 13)
    kp_vdc: float = 3977.5
    ki_vdc: float = 152110.0
    s_nom: float = 500e3
    sync_channels: tuple = (1, 5, 7, 11, 13)
    gamma: float = 50.0
    debounce_samples: int = 2
    fll_init_hz: float = 0.0  # 0 means "start at the grid frequency"
    fault_threshold: float = 0.85
    mppt_step: float = 2.0
    # one DC-ripple period at 50 Hz, so the tracker's windowed power
    # average cancels the double-frequency component exactly
    mppt_period: float = 1e-2
    ramp_gain: float = 2e-4
    max_move: float = 50.0
    t_cell: float = 25.0

    def __post_init__(self):
        if self.s_nom <= 0.0:
            raise ValueError("s_nom must be positive")
        if self.debounce_samples < 1:
            raise ValueError("debounce_samples must be >= 1")


@dataclass(frozen=True)
class Scenario:
    """One reproducible experiment."""

    name: str
    duration: float
    grid: GridSpec = field(default_factory=GridSpec)
    irradiance_profile: tuple = ((0.0, 1000.0),)
    pv: PvArrayModel = field(default_factory=PvArrayModel)
    control: ControlConfig = field(default_factory=ControlConfig)
    lvrt_profile: RideThroughProfile = field(
        default_factory=RideThroughProfile)
    decimation: int = 8

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if int(self.decimation) < 1:
            raise ValueError("decimation must be >= 1")
        prev = None
        for t, g in self.irradiance_profile:
            if g < 0.0:
                raise ValueError("irradiance must be >= 0")
            if prev is not None and t <= prev:
                raise ValueError("irradiance times must be ascending")
            prev = t
        if not self.irradiance_profile or self.irradiance_profile[0][0] > 0.0:
            raise ValueError("irradiance profile must start at t <= 0")

    def irradiance_at(self, t: float) -> float:
        g = self.irradiance_profile[0][1]
        for tk, gk in self.irradiance_profile:
            if tk <= t:
                g = gk
            else:
                break
        return g


def _numbered_sections(cp, prefix):
    got = []
    for name in cp.sections():
        if name == prefix or name.startswith(prefix + "."):
            got.append(name)
    return sorted(got)


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        if conv is bool:
            return cp.getboolean(section, key)
        return conv(raw)
    except ValueError as exc:
        raise ScenarioError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _pairs(raw, what):
    """Parse 'a:b, c:d' into ((a, b), (c, d))."""
    out = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            out.append((float(a), float(b)))
        except ValueError as exc:
            raise ScenarioError(f"{what}: bad pair {item!r}") from exc
    return tuple(out)


def scenario_from_parser(cp: configparser.ConfigParser,
                         fallback_name: str = "scenario") -> Scenario:
    """Build and validate a Scenario from parsed INI content."""
    sags = []
    for sec in _numbered_sections(cp, "sag"):
        try:
            sags.append(SagEvent(
                t_start=_get(cp, sec, "t_start", float, 0.0),
                t_end=_get(cp, sec, "t_end", float, 0.0),
                per_phase_scale=(
                    _get(cp, sec, "scale_r", float, 1.0),
                    _get(cp, sec, "scale_s", float, 1.0),
                    _get(cp, sec, "scale_t", float, 1.0),
                )))
        except ValueError as exc:
            raise ScenarioError(f"[{sec}]: {exc}") from exc
    harmonics = []
    for sec in _numbered_sections(cp, "harmonic"):
        harmonics.append((
            _get(cp, sec, "order", int, 0),
            _get(cp, sec, "fraction", float, 0.0),
            _get(cp, sec, "phase", float, 0.0),
        ))
    freq_events = ()
    if cp.has_option("grid", "freq_events"):
        freq_events = _pairs(cp.get("grid", "freq_events"),
                             "[grid] freq_events")

    try:
        grid = GridSpec(
            u_gnom=_get(cp, "grid", "u_gnom", float, 230.0),
            freq=_get(cp, "grid", "freq", float, 50.0),
            thevenin_r=_get(cp, "grid", "thevenin_r", float, 1e-3),
            thevenin_l=_get(cp, "grid", "thevenin_l", float, 1e-6),
            sags=tuple(sags),
            harmonics=tuple(harmonics),
            freq_events=freq_events,
        )
    except ValueError as exc:
        raise ScenarioError(f"[grid]: {exc}") from exc

    pv_kwargs = {}
    if cp.has_section("pv"):
        for f in fields(PvArrayModel):
            if f.init and cp.has_option("pv", f.name):
                conv = int if f.name in ("series_modules", "strings") else float
                pv_kwargs[f.name] = _get(cp, "pv", f.name, conv, None)
    try:
        pv = PvArrayModel(**pv_kwargs)
    except ValueError as exc:
        raise ScenarioError(f"[pv]: {exc}") from exc

    ctl_kwargs = {}
    if cp.has_section("control"):
        for f in fields(ControlConfig):
            if not cp.has_option("control", f.name):
                continue
            if f.name in ("harmonic_channels", "sync_channels"):
                raw = cp.get("control", f.name)
                try:
                    ctl_kwargs[f.name] = tuple(
                        int(x) for x in raw.split(",") if x.strip())
                except ValueError as exc:
                    raise ScenarioError(
                        f"[control] {f.name} = {raw!r}: {exc}") from exc
            elif f.type == "bool" or f.name == "hc_enabled":
                ctl_kwargs[f.name] = _get(cp, "control", f.name, bool, None)
            elif f.name == "debounce_samples":
                ctl_kwargs[f.name] = _get(cp, "control", f.name, int, None)
            else:
                ctl_kwargs[f.name] = _get(cp, "control", f.name, float, None)
    try:
        control = ControlConfig(**ctl_kwargs)
    except ValueError as exc:
        raise ScenarioError(f"[control]: {exc}") from exc

    profile_kwargs = {}
    if cp.has_option("lvrt", "profile"):
        profile_kwargs["breakpoints"] = _pairs(cp.get("lvrt", "profile"),
                                               "[lvrt] profile")
    try:
        lvrt_profile = RideThroughProfile(**profile_kwargs)
    except ValueError as exc:
        raise ScenarioError(f"[lvrt]: {exc}") from exc

    irradiance = ((0.0, 1000.0),)
    if cp.has_option("irradiance", "profile"):
        irradiance = _pairs(cp.get("irradiance", "profile"),
                            "[irradiance] profile")

    try:
        return Scenario(
            name=_get(cp, "scenario", "name", str, fallback_name),
            duration=_get(cp, "scenario", "duration", float, 0.0),
            grid=grid,
            irradiance_profile=irradiance,
            pv=pv,
            control=control,
            lvrt_profile=lvrt_profile,
            decimation=_get(cp, "scenario", "decimation", int, 8),
        )
    except ValueError as exc:
        raise ScenarioError(f"[scenario]: {exc}") from exc


def load_scenario(path: str, overrides: dict | None = None) -> Scenario:
    """Read an INI scenario file; overrides are {'section.key': 'value'}."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise ScenarioError(f"cannot read scenario file {path!r}")
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ScenarioError(
                f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)
    import os
    fallback = os.path.splitext(os.path.basename(path))[0]
    return scenario_from_parser(cp, fallback_name=fallback)


def with_overrides(sc: Scenario, **changes) -> Scenario:
    """Functional update helper for programmatic variants."""
    return replace(sc, **changes)
