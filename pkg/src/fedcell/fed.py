"""Per-UE adaptation with periodic federated averaging at the BS.

Every UE clones the broadcast initialization and fine-tunes it on its own
rollouts (all UEs share one environment, so episodes are collected in lock
step). Every ``averaging_period_episodes`` the BS combines the local models
with one of two convex rules — batch-size weights or success-rate weights —
and broadcasts the result back, after which the per-round success counters
restart.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import net, ppo
from .env import UplinkEnv
from .meta import TaskSpec
from .rollout import run_episode

log = logging.getLogger(__name__)

WEIGHTINGS = ("size", "success", "none")


@dataclass
class FedConfig:
    """Switches of one adaptation run."""

    averaging_period_episodes: int = 100
    weighting: str = "success"        # "size", "success" or "none"
    adaptation_lr: float = 1e-6
    n_adapt_episodes: int = 1000
    checkpoint_episodes: tuple = (500,)
    freeze_after: int | None = None   # stop updates/averaging from this episode on

    def __post_init__(self) -> None:
        if self.averaging_period_episodes < 1:
            raise ValueError("averaging period must be >= 1 episode")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")


def _check_same_topology(models: list[net.PolicyParams]) -> None:
    if not models:
        raise ValueError("need at least one model")
    topo = models[0].topology
    for m in models[1:]:
        if m.topology != topo:
            raise ValueError("cannot average models with different topologies")


def _weighted_average(models: list[net.PolicyParams], weights) -> net.PolicyParams:
    w = np.asarray(weights, dtype=np.float64)
    stack = np.stack([m.theta for m in models])
    avg = np.average(stack, axis=0, weights=w)
    return net.PolicyParams(models[0].topology, avg)


def fedavg_size_weighted(models: list[net.PolicyParams], batch_sizes) -> net.PolicyParams:
    """Average weighted by each UE's local batch size."""
    _check_same_topology(models)
    sizes = np.asarray(batch_sizes, dtype=np.float64)
    if len(sizes) != len(models):
        raise ValueError("one batch size per model required")
    if sizes.sum() <= 0:
        raise ValueError("batch sizes must sum to a positive value")
    return _weighted_average(models, sizes)


def fedavg_success_weighted(models: list[net.PolicyParams], success_rates) -> net.PolicyParams:
    """Average weighted by each UE's allocation success rate.

    A degenerate cold start (all rates zero) falls back to the unweighted
    mean with a logged warning.
    """
    _check_same_topology(models)
    rates = np.asarray(success_rates, dtype=np.float64)
    if len(rates) != len(models):
        raise ValueError("one success rate per model required")
    if rates.sum() <= 0:
        log.warning("all success rates are zero; falling back to the unweighted mean")
        rates = np.ones_like(rates)
    return _weighted_average(models, rates)


@dataclass
class EpisodeMetrics:
    """One row of the adaptation metric stream.

    The three loss diagnostics are means over the per-UE PPO updates of the
    episode; they are NaN on frozen episodes (no update ran).
    """

    episode: int
    reward: float
    entropy_channel: float
    entropy_power: float
    mean_sum_ee: float
    collision_rate: float
    mean_power_w: float
    actor_term: float
    critic_term: float
    clip_fraction: float
    eta: list[float]          # per-UE success rate in the current averaging round
    averaged: bool            # True on episodes that ended with a federated average


@dataclass
class AdaptResult:
    """Final models, metric stream and checkpoints of one adaptation run."""

    models: list[net.PolicyParams]
    metrics: list[EpisodeMetrics]
    checkpoints: dict = field(default_factory=dict)  # episode -> list of PolicyParams


def adapt(initial: net.PolicyParams, task: TaskSpec, fed_cfg: FedConfig,
          ppo_cfg: ppo.PpoConfig, seed: int, reward_coeff: float = 1e-7,
          episode_len: int = 100) -> AdaptResult:
    """Fine-tune per-UE clones of ``initial`` in the task's environment."""
    ss = np.random.SeedSequence((seed, task.seed))
    env_seed, rollout_seed, update_seed = ss.spawn(3)
    env = UplinkEnv(task.scenario, task.n_ues, reward_coeff=reward_coeff,
                    episode_len=episode_len)
    env_rng = np.random.default_rng(env_seed)
    rollout_rng = np.random.default_rng(rollout_seed)
    update_rng = np.random.default_rng(update_seed)

    n = task.n_ues
    models = [initial.copy() for _ in range(n)]
    opts = [net.AdamState.for_params(m, lr=fed_cfg.adaptation_lr) for m in models]
    obs = env.reset(env_rng)

    # success counts at the start of the current averaging round
    beta_mark = np.zeros(n, dtype=np.int64)
    total_mark = 0

    metrics: list[EpisodeMetrics] = []
    checkpoints: dict[int, list[net.PolicyParams]] = {}
    for episode in range(fed_cfg.n_adapt_episodes):
        frozen = fed_cfg.freeze_after is not None and episode >= fed_cfg.freeze_after
        result, obs = run_episode(env, models, rollout_rng, obs)
        diags = []
        if not frozen:
            for i in range(n):
                batch = result.buffers[i].finalize(float(result.bootstrap_values[i]), ppo_cfg)
                diags.append(ppo.update(models[i], opts[i], batch, ppo_cfg, update_rng))
                result.buffers[i].clear()

        round_total = env.tracker.total - total_mark
        eta = [(env.tracker.beta[i] - beta_mark[i]) / round_total if round_total else 0.0
               for i in range(n)]

        averaged = False
        if (not frozen and fed_cfg.weighting != "none"
                and (episode + 1) % fed_cfg.averaging_period_episodes == 0):
            if fed_cfg.weighting == "size":
                merged = fedavg_size_weighted(models, [env.episode_len] * n)
            else:
                merged = fedavg_success_weighted(models, eta)
            models = [merged.copy() for _ in range(n)]
            beta_mark = env.tracker.beta.copy()
            total_mark = env.tracker.total
            averaged = True

        metrics.append(EpisodeMetrics(
            episode=episode,
            reward=result.reward_total,
            entropy_channel=result.mean_entropy_channel,
            entropy_power=result.mean_entropy_power,
            mean_sum_ee=result.mean_sum_ee,
            collision_rate=result.collision_steps / env.episode_len,
            mean_power_w=result.mean_power_w,
            actor_term=float(np.mean([d.actor_term for d in diags])) if diags else float("nan"),
            critic_term=float(np.mean([d.critic_term for d in diags])) if diags else float("nan"),
            clip_fraction=float(np.mean([d.clip_fraction for d in diags])) if diags else float("nan"),
            eta=[float(e) for e in eta],
            averaged=averaged,
        ))
        if (episode + 1) in fed_cfg.checkpoint_episodes:
            checkpoints[episode + 1] = [m.copy() for m in models]

    return AdaptResult(models=models, metrics=metrics, checkpoints=checkpoints)


__all__ = [
    "FedConfig",
    "EpisodeMetrics",
    "AdaptResult",
    "WEIGHTINGS",
    "fedavg_size_weighted",
    "fedavg_success_weighted",
    "adapt",
]
