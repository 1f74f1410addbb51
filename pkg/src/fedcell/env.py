"""Multi-agent uplink MDP: observations, hybrid actions, team reward.

Each UE is one agent. Per step every UE picks a subchannel (discrete) and a
transmit power (continuous, pre-squash Gaussian sample mapped into the dBm
range). The team reward is the coefficient-scaled sum of per-UE energy
efficiencies when the step is collision free, and a shared punishment
``(I_suc - I) / I`` otherwise.

Observations have a fixed layout of ``n_subchannels + 2`` entries across
tasks with different UE counts: the UE's own gain vector (log-compressed),
the normalized UE count and the epoch fingerprint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as ch

# gains span ~10 orders of magnitude; feed log10(h)/10 shifted toward [-1, 1]
_GAIN_LOG_SHIFT = 0.85


@dataclass
class Action:
    """One UE's joint action: subchannel index plus transmit power.

    ``power_raw`` is the unclipped Gaussian sample (log-probs are computed
    under its density); ``power_w`` is the watts actually transmitted.
    """

    channel: int
    power_raw: float
    power_w: float


@dataclass
class Transition:
    """One experience tuple plus the bookkeeping PPO needs at update time."""

    obs: np.ndarray
    action: Action
    reward: float
    next_obs: np.ndarray
    log_prob_channel: float
    log_prob_power: float
    value_estimate: float
    done: bool


@dataclass
class SuccessTracker:
    """Per-UE successful-assignment counts over the run."""

    beta: np.ndarray  # (I,) int counts
    total: int = 0


@dataclass
class StepStats:
    """Per-step diagnostics emitted alongside the reward."""

    collision: bool
    i_suc: int
    ee_per_ue: np.ndarray  # bits/J actually achieved (0 for colliding UEs)
    gamma_lin: np.ndarray  # SNR at the effective power (0 for colliding UEs)
    power_w: np.ndarray  # effective transmit power per UE
    channels: np.ndarray  # chosen subchannel per UE


def success_rate(tracker: SuccessTracker, ue_index: int) -> float:
    """Fraction of steps where this UE's channel choice was collision free."""
    if tracker.total <= 0:
        return 0.0
    return float(tracker.beta[ue_index]) / float(tracker.total)


def discounted_return(rewards, xi: float) -> float:
    """Discounted sum of a reward sequence."""
    if not 0.0 < xi < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    total = 0.0
    for r in reversed(np.asarray(rewards, dtype=float)):
        total = r + xi * total
    return float(total)


def power_from_raw(raw: float, scenario: ch.ScenarioConfig) -> float:
    """Map a raw Gaussian sample to watts.

    The sample is clipped to [-1, 1] and mapped affinely onto
    [p_min_dbm, p_max_dbm] before the dBm -> W conversion, so the emitted
    power always respects the hardware range.
    """
    clipped = min(max(float(raw), -1.0), 1.0)
    dbm = scenario.p_min_dbm + (clipped + 1.0) / 2.0 * (scenario.p_max_dbm - scenario.p_min_dbm)
    return ch.dbm_to_w(dbm)


def ue_reward(ee_chosen: float, ee_pmax: float, gamma_lin: float, gamma_min_lin: float,
              coeff: float) -> float:
    """Reward of one successfully assigned UE.

    The chosen power counts only when it clears the SNR floor; otherwise the
    UE falls back to maximum transmit power and is scored at that power.
    """
    if gamma_lin > gamma_min_lin:
        return coeff * ee_chosen
    return coeff * ee_pmax


def collision_penalty(i_suc: int, n_ues: int) -> float:
    """Shared punishment when any subchannel is chosen twice: (I_suc - I) / I."""
    return (i_suc - n_ues) / float(n_ues)


class UplinkEnv:
    """Single-cell uplink with ``n_ues`` agents sharing ``n_subchannels``.

    One env step is one fast-fading interval (1 ms); an episode is
    ``episode_len`` steps, aligned with the large-scale update period so
    pathloss and shadowing are stationary within an episode.
    """

    def __init__(self, scenario: ch.ScenarioConfig, n_ues: int,
                 reward_coeff: float = 1e-7, episode_len: int = 100,
                 ue_speed_max: float = 1.0):
        if n_ues > scenario.n_subchannels:
            raise ValueError(
                f"n_ues={n_ues} exceeds n_subchannels={scenario.n_subchannels}; "
                "collision-free assignment would be impossible"
            )
        if n_ues < 1:
            raise ValueError("need at least one UE")
        self.scenario = scenario
        self.n_ues = n_ues
        self.reward_coeff = reward_coeff
        self.episode_len = episode_len
        self.ue_speed_max = ue_speed_max
        self.noise_w = scenario.noise_w()
        self.obs_dim = scenario.n_subchannels + 2
        self._rng: np.random.Generator | None = None
        self.ues: list[ch.UEState] = []
        self.state: ch.ChannelState | None = None
        self.tracker: SuccessTracker | None = None

    # -- lifecycle ----------------------------------------------------------

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        """Fresh placement, channel and trackers; returns the (I, obs_dim) observations."""
        self._rng = rng
        self.ues = ch.make_ues(self.scenario, self.n_ues, rng, self.ue_speed_max)
        self.state = ch.init_channel(self.scenario, self.ues, rng)
        self.tracker = SuccessTracker(beta=np.zeros(self.n_ues, dtype=np.int64))
        return self.observations()

    @property
    def epoch(self) -> int:
        """Episode counter used as the observation fingerprint."""
        return self.state.step_counter // self.episode_len if self.state else 0

    def observations(self) -> np.ndarray:
        """Stack of per-UE observation vectors."""
        gains = np.log10(self.state.gain_lin) / 10.0 + _GAIN_LOG_SHIFT
        n = self.scenario.n_subchannels
        out = np.empty((self.n_ues, self.obs_dim))
        out[:, :n] = gains
        out[:, n] = self.n_ues / n
        out[:, n + 1] = self.epoch / self.episode_len
        return out

    # -- dynamics -----------------------------------------------------------

    def joint_step(self, actions: list[Action]) -> tuple[float, np.ndarray, StepStats]:
        """Apply one joint action, advance the channel, return (reward, next_obs, stats)."""
        if len(actions) != self.n_ues:
            raise ValueError("need exactly one action per UE")
        sc = self.scenario
        channels = np.array([a.channel for a in actions], dtype=np.int64)
        counts = np.bincount(channels, minlength=sc.n_subchannels)
        unique = counts[channels] == 1

        ee = np.zeros(self.n_ues)
        gamma_eff = np.zeros(self.n_ues)
        power_eff = np.zeros(self.n_ues)
        for i in np.flatnonzero(unique):
            n = channels[i]
            h = self.state.gain_lin[i, n]
            noise = self.noise_w[n]
            bw = sc.subchannel_bandwidth_hz[n]
            p = actions[i].power_w
            g = ch.snr(True, h, p, noise)
            if g > sc.gamma_min_lin:
                power_eff[i] = p
                gamma_eff[i] = g
            else:
                # below the QoS floor the UE escalates to maximum power
                power_eff[i] = sc.p_max_w
                gamma_eff[i] = ch.snr(True, h, sc.p_max_w, noise)
            ee[i] = ch.energy_efficiency(bw, power_eff[i], gamma_eff[i])

        i_suc = int(unique.sum())
        collision = i_suc < self.n_ues
        if collision:
            reward = collision_penalty(i_suc, self.n_ues)
        else:
            reward = float(self.reward_coeff * ee.sum())

        self.tracker.beta[unique] += 1
        self.tracker.total += 1

        ch.advance(self.state, sc, self.ues, self._rng)
        next_obs = self.observations()
        stats = StepStats(
            collision=collision,
            i_suc=i_suc,
            ee_per_ue=ee,
            gamma_lin=gamma_eff,
            power_w=power_eff,
            channels=channels,
        )
        return reward, next_obs, stats


__all__ = [
    "Action",
    "Transition",
    "SuccessTracker",
    "StepStats",
    "UplinkEnv",
    "success_rate",
    "discounted_return",
    "power_from_raw",
    "ue_reward",
    "collision_penalty",
]
