"""Radio-link physics for a single-cell uplink simulator.

Geometry, pathloss, log-normal shadowing, Rayleigh fading power, receiver
noise, SNR and energy efficiency. Every draw comes from a caller-supplied
``numpy.random.Generator``, so a fixed seed reproduces the full gain
trajectory bit for bit.

Unit conventions: suffix ``_db`` / ``_dbm`` marks log-scale values,
everything else is linear (watts, Hz, meters). The per-link loss matrix
stored in :class:`ChannelState` already includes the BS and UE antenna
gains, so ``gain = 10**(-loss/10) * shadowing * fading`` holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Subchannel bandwidths in MHz: 12 subcarriers per resource block at
# 15/30/60/120 kHz spacing.
DEFAULT_BANDWIDTH_SET_MHZ = (0.18, 0.18, 0.36, 0.36, 0.36, 0.72, 0.72, 0.72, 1.44, 1.44)

SCENARIO_KINDS = ("indoor", "urban_micro", "urban_macro", "rural_macro")

# kind -> (area side m, BS height m, noise PSD dBm/Hz)
_PRESET_GEOMETRY = {
    "indoor": (20.0, 3.0, -160.0),
    "urban_micro": (100.0, 10.0, -170.0),
    "urban_macro": (500.0, 25.0, -180.0),
    "rural_macro": (1000.0, 35.0, -185.0),
}


def dbm_to_w(p_dbm: float) -> float:
    """Convert dBm to watts."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def db_to_lin(x_db: float) -> float:
    """Convert a dB power ratio to linear scale."""
    return 10.0 ** (x_db / 10.0)


@dataclass
class ScenarioConfig:
    """Physical constants of one deployment scenario.

    ``subchannel_bandwidth_hz`` and ``carrier_freq_ghz`` are per-subchannel
    vectors of length ``n_subchannels``.
    """

    kind: str = "urban_micro"
    area_side_m: float = 100.0
    bs_height_m: float = 10.0
    ue_height_m: float = 1.5
    bs_antenna_gain_db: float = 8.0
    ue_antenna_gain_db: float = 3.0
    bs_noise_figure_db: float = 5.0
    ue_noise_figure_db: float = 9.0
    n_subchannels: int = 10
    subchannel_bandwidth_hz: np.ndarray = field(
        default_factory=lambda: np.array(DEFAULT_BANDWIDTH_SET_MHZ) * 1e6
    )
    carrier_freq_ghz: np.ndarray = field(default_factory=lambda: np.full(10, 6.0))
    noise_psd_dbm_hz: float = -170.0
    p_max_dbm: float = 24.0
    p_min_dbm: float = 0.0
    gamma_min_db: float = 5.0
    shadowing_sigma_db: float = 7.8
    # one shadowing draw per (UE, subchannel); False shares one draw per UE
    shadowing_per_subchannel: bool = True
    large_scale_update_period_steps: int = 100
    fast_fading_update_period_steps: int = 1

    def __post_init__(self) -> None:
        self.subchannel_bandwidth_hz = np.asarray(self.subchannel_bandwidth_hz, dtype=float)
        self.carrier_freq_ghz = np.asarray(self.carrier_freq_ghz, dtype=float)
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}, expected one of {SCENARIO_KINDS}")
        if len(self.subchannel_bandwidth_hz) != self.n_subchannels:
            raise ValueError("bandwidth vector length must equal n_subchannels")
        if len(self.carrier_freq_ghz) != self.n_subchannels:
            raise ValueError("carrier frequency vector length must equal n_subchannels")
        if np.any(self.subchannel_bandwidth_hz <= 0):
            raise ValueError("all subchannel bandwidths must be positive")
        if np.any(self.carrier_freq_ghz <= 0):
            raise ValueError("all carrier frequencies must be positive")
        if not self.p_min_dbm < self.p_max_dbm:
            raise ValueError("p_min_dbm must be below p_max_dbm")
        if not math.isfinite(self.gamma_min_db):
            raise ValueError("gamma_min_db must be finite")
        if self.large_scale_update_period_steps < 1 or self.fast_fading_update_period_steps < 1:
            raise ValueError("update periods must be >= 1 step")

    # -- derived quantities -------------------------------------------------

    @property
    def p_min_w(self) -> float:
        return dbm_to_w(self.p_min_dbm)

    @property
    def p_max_w(self) -> float:
        return dbm_to_w(self.p_max_dbm)

    @property
    def gamma_min_lin(self) -> float:
        return db_to_lin(self.gamma_min_db)

    @property
    def antenna_gain_db(self) -> float:
        """Combined BS + UE antenna gain credited to the link budget."""
        return self.bs_antenna_gain_db + self.ue_antenna_gain_db

    def noise_w(self) -> np.ndarray:
        """Uplink noise power per subchannel in watts (BS is the receiver)."""
        return noise_power_w(
            self.subchannel_bandwidth_hz, self.noise_psd_dbm_hz, self.bs_noise_figure_db
        )

    def bs_position(self) -> np.ndarray:
        """BS sits at the center of the deployment square."""
        half = self.area_side_m / 2.0
        return np.array([half, half, self.bs_height_m])


def scenario_preset(kind: str, **overrides) -> ScenarioConfig:
    """Build a scenario from one of the named deployments.

    Any :class:`ScenarioConfig` field can be overridden by keyword.
    """
    if kind not in _PRESET_GEOMETRY:
        raise ValueError(f"unknown scenario kind {kind!r}, expected one of {SCENARIO_KINDS}")
    area, bs_h, psd = _PRESET_GEOMETRY[kind]
    base = dict(kind=kind, area_side_m=area, bs_height_m=bs_h, noise_psd_dbm_hz=psd)
    n = int(overrides.get("n_subchannels", base.get("n_subchannels", 10)))
    if n != 10:
        # shorter/longer channel sets need explicit vectors unless provided
        overrides.setdefault("subchannel_bandwidth_hz", np.array(DEFAULT_BANDWIDTH_SET_MHZ[:n]) * 1e6)
        overrides.setdefault("carrier_freq_ghz", np.full(n, 6.0))
    base.update(overrides)
    return ScenarioConfig(**base)


@dataclass
class UEState:
    """Position and mobility of one UE. ``heading`` is radians in the xy plane."""

    position: np.ndarray  # (3,) meters
    speed: float  # m/s, in [0, 1]
    heading: float


@dataclass
class ChannelState:
    """Per-(UE, subchannel) decomposition of the link gains.

    ``pathloss_db`` is the distance/frequency loss minus the antenna gains,
    so the composition invariant
    ``gain_lin = 10**(-pathloss_db/10) * shadowing_lin * fading_power_lin``
    holds entrywise at every step.
    """

    pathloss_db: np.ndarray  # (I, N)
    shadowing_lin: np.ndarray  # (I, N)
    fading_power_lin: np.ndarray  # (I, N), unit-mean Rayleigh power
    gain_lin: np.ndarray  # (I, N)
    step_counter: int = 0


# ---------------------------------------------------------------------------
# formulas


def pathloss_db(f_ghz, d_m):
    """Urban NLOS pathloss in dB for carrier ``f_ghz`` (GHz) at 3-D distance ``d_m`` (meters).

    The model is valid for d >= 1 m; callers must clamp shorter distances.
    Accepts scalars or broadcastable arrays.
    """
    f = np.asarray(f_ghz, dtype=float)
    d = np.asarray(d_m, dtype=float)
    if np.any(f <= 0):
        raise ValueError("carrier frequency must be positive")
    if np.any(d < 1.0):
        raise ValueError("pathloss model invalid below 1 m; clamp distance upstream")
    out = 32.4 + 20.0 * np.log10(f) + 30.0 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def channel_gain(pl_db, shadow_lin, fading_lin):
    """Linear power gain: pathloss composed with shadowing and fading factors."""
    return 10.0 ** (-np.asarray(pl_db, dtype=float) / 10.0) * shadow_lin * fading_lin


def noise_power_w(bw_hz, psd_dbm_hz, noise_figure_db):
    """Receiver noise power in watts over bandwidth ``bw_hz``.

    The PSD is given in dBm/Hz; the receiver noise figure adds on top.
    """
    bw = np.asarray(bw_hz, dtype=float)
    if np.any(bw <= 0):
        raise ValueError("bandwidth must be positive")
    out = bw * 10.0 ** ((np.asarray(psd_dbm_hz, float) + noise_figure_db - 30.0) / 10.0)
    return float(out) if out.ndim == 0 else out


def snr(assigned, gain_lin, p_w, noise_w):
    """Linear SNR of one uplink; zero when the subchannel is not assigned."""
    rho = np.asarray(assigned, dtype=float)
    out = rho * np.asarray(gain_lin, float) * np.asarray(p_w, float) / np.asarray(noise_w, float)
    return float(out) if out.ndim == 0 else out


def energy_efficiency(bw_hz, p_w, gamma_lin, assigned=True):
    """Uplink energy efficiency in bits per joule.

    Rate is Shannon capacity over ``bw_hz``; an unassigned UE transmits
    nothing and scores 0.
    """
    rho = np.asarray(assigned, dtype=bool)
    p = np.asarray(p_w, dtype=float)
    if np.any(rho & (p <= 0)):
        raise ValueError("transmit power must be positive for an assigned channel")
    rate = np.log2(1.0 + np.asarray(gamma_lin, dtype=float))
    safe_p = np.where(rho, p, 1.0)
    out = np.where(rho, np.asarray(bw_hz, dtype=float) / safe_p * rate, 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# stochastic state


def make_ues(scenario: ScenarioConfig, n_ues: int, rng: np.random.Generator,
             speed_max: float = 1.0) -> list[UEState]:
    """Draw initial UE positions (uniform in the square), speeds and headings."""
    ues = []
    for _ in range(n_ues):
        xy = rng.uniform(0.0, scenario.area_side_m, size=2)
        pos = np.array([xy[0], xy[1], scenario.ue_height_m])
        speed = rng.uniform(0.0, speed_max)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        ues.append(UEState(position=pos, speed=speed, heading=heading))
    return ues


def _pathloss_matrix(scenario: ScenarioConfig, ues: list[UEState]) -> np.ndarray:
    """Effective per-link loss (dB): distance/frequency pathloss minus antenna gains."""
    bs = scenario.bs_position()
    d = np.array([max(float(np.linalg.norm(ue.position - bs)), 1.0) for ue in ues])
    pl = pathloss_db(scenario.carrier_freq_ghz[None, :], d[:, None])
    return pl - scenario.antenna_gain_db


def _draw_shadowing(scenario: ScenarioConfig, shape, rng: np.random.Generator) -> np.ndarray:
    """Log-normal shadowing, its log10-scale std being ``shadowing_sigma_db`` dB."""
    if scenario.shadowing_per_subchannel:
        s_db = rng.normal(0.0, scenario.shadowing_sigma_db, size=shape)
    else:
        per_ue = rng.normal(0.0, scenario.shadowing_sigma_db, size=(shape[0], 1))
        s_db = np.broadcast_to(per_ue, shape).copy()
    return 10.0 ** (s_db / 10.0)


def _draw_fading(shape, rng: np.random.Generator) -> np.ndarray:
    """Rayleigh fading power: exponential with unit mean."""
    return rng.exponential(1.0, size=shape)


def init_channel(scenario: ScenarioConfig, ues: list[UEState],
                 rng: np.random.Generator) -> ChannelState:
    """Fresh channel state for the given UE placement."""
    shape = (len(ues), scenario.n_subchannels)
    pl = _pathloss_matrix(scenario, ues)
    shadow = _draw_shadowing(scenario, shape, rng)
    fading = _draw_fading(shape, rng)
    return ChannelState(
        pathloss_db=pl,
        shadowing_lin=shadow,
        fading_power_lin=fading,
        gain_lin=channel_gain(pl, shadow, fading),
        step_counter=0,
    )


def _move_ues(scenario: ScenarioConfig, ues: list[UEState], dt_s: float,
              rng: np.random.Generator) -> None:
    """Advance UEs along their headings, reflect at the square boundary, redraw headings."""
    side = scenario.area_side_m
    for ue in ues:
        step = ue.speed * dt_s
        x = ue.position[0] + step * math.cos(ue.heading)
        y = ue.position[1] + step * math.sin(ue.heading)
        # reflect at [0, side]
        for _ in range(2):
            x = abs(x) if x < 0 else (2 * side - x if x > side else x)
            y = abs(y) if y < 0 else (2 * side - y if y > side else y)
        ue.position[0] = min(max(x, 0.0), side)
        ue.position[1] = min(max(y, 0.0), side)
        ue.heading = rng.uniform(0.0, 2.0 * math.pi)


def advance(state: ChannelState, scenario: ScenarioConfig, ues: list[UEState],
            rng: np.random.Generator) -> ChannelState:
    """Advance the channel by one step (1 ms).

    Fading is redrawn on the fast cadence; every
    ``large_scale_update_period_steps`` the UEs move, pathloss is recomputed
    from the new geometry and shadowing is redrawn.
    """
    state.step_counter += 1
    if state.step_counter % scenario.large_scale_update_period_steps == 0:
        dt = scenario.large_scale_update_period_steps * 1e-3
        _move_ues(scenario, ues, dt, rng)
        state.pathloss_db = _pathloss_matrix(scenario, ues)
        state.shadowing_lin = _draw_shadowing(scenario, state.pathloss_db.shape, rng)
    if state.step_counter % scenario.fast_fading_update_period_steps == 0:
        state.fading_power_lin = _draw_fading(state.pathloss_db.shape, rng)
    state.gain_lin = channel_gain(state.pathloss_db, state.shadowing_lin, state.fading_power_lin)
    return state


def toy_scenario(n_subchannels: int = 3, bandwidth_mhz: float = 0.18, **overrides) -> ScenarioConfig:
    """Small indoor-like scenario for fast experiments and tests."""
    overrides.setdefault("subchannel_bandwidth_hz", np.full(n_subchannels, bandwidth_mhz * 1e6))
    overrides.setdefault("carrier_freq_ghz", np.full(n_subchannels, 6.0))
    return scenario_preset("indoor", n_subchannels=n_subchannels, **overrides)


__all__ = [
    "ScenarioConfig",
    "UEState",
    "ChannelState",
    "DEFAULT_BANDWIDTH_SET_MHZ",
    "SCENARIO_KINDS",
    "scenario_preset",
    "toy_scenario",
    "dbm_to_w",
    "db_to_lin",
    "pathloss_db",
    "channel_gain",
    "noise_power_w",
    "snr",
    "energy_efficiency",
    "make_ues",
    "init_channel",
    "advance",
]
