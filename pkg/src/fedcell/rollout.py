"""Episode collection shared by meta-training and federated adaptation.

One episode is ``env.episode_len`` joint steps. All UEs act in the same
environment instance; when every UE runs the same parameter vector the
forward passes are batched, otherwise each UE's own model is evaluated
separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net
from .env import Action, Transition, UplinkEnv, power_from_raw
from .ppo import RolloutBuffer


@dataclass
class EpisodeResult:
    """Buffers and summary statistics of one collected episode."""

    buffers: list[RolloutBuffer]     # one per UE, in UE order
    bootstrap_values: np.ndarray     # V(o_T+1) per UE under its own params
    reward_total: float              # sum of team rewards over the episode
    collision_steps: int
    mean_sum_ee: float               # average over steps of the per-step EE sum
    mean_entropy_channel: float
    mean_entropy_power: float
    mean_power_w: float


def run_episode(env: UplinkEnv, actors: list[net.PolicyParams],
                rng: np.random.Generator, obs: np.ndarray) -> tuple[EpisodeResult, np.ndarray]:
    """Roll one episode; returns the result and the observations after it.

    ``actors`` holds one parameter vector per UE; pass the same object I
    times for a shared policy (detected and batched).
    """
    n = env.n_ues
    if len(actors) != n:
        raise ValueError("need one parameter vector per UE")
    shared = all(a is actors[0] for a in actors)
    buffers = [RolloutBuffer() for _ in range(n)]
    reward_total = 0.0
    collisions = 0
    sum_ee_acc = 0.0
    ent_c_acc = 0.0
    ent_p_acc = 0.0
    power_acc = 0.0

    for step in range(env.episode_len):
        if shared:
            cache = net.forward_batch(actors[0], obs)
            heads = [(cache.logits[i], float(cache.mu[i]), float(cache.log_sigma[i]),
                      float(cache.value[i])) for i in range(n)]
        else:
            heads = [net.forward(actors[i], obs[i]) for i in range(n)]

        actions = []
        sampled = []
        for i in range(n):
            logits, mu, log_sigma, value = heads[i]
            c, raw, lp_c, lp_p, ent_c, ent_p = net.sample_action(logits, mu, log_sigma, rng)
            action = Action(channel=c, power_raw=raw,
                            power_w=power_from_raw(raw, env.scenario))
            actions.append(action)
            sampled.append((lp_c, lp_p, value, ent_c, ent_p))
            ent_c_acc += ent_c
            ent_p_acc += ent_p
            power_acc += action.power_w

        reward, next_obs, stats = env.joint_step(actions)
        reward_total += reward
        collisions += int(stats.collision)
        sum_ee_acc += float(stats.ee_per_ue.sum())
        done = step == env.episode_len - 1
        for i in range(n):
            lp_c, lp_p, value, _, _ = sampled[i]
            buffers[i].add(Transition(
                obs=obs[i].copy(), action=actions[i], reward=reward,
                next_obs=next_obs[i].copy(), log_prob_channel=lp_c,
                log_prob_power=lp_p, value_estimate=value, done=done,
            ))
        obs = next_obs

    if shared:
        cache = net.forward_batch(actors[0], obs)
        boot = cache.value.copy()
    else:
        boot = np.array([net.forward(actors[i], obs[i])[3] for i in range(n)])

    steps = env.episode_len
    result = EpisodeResult(
        buffers=buffers,
        bootstrap_values=boot,
        reward_total=reward_total,
        collision_steps=collisions,
        mean_sum_ee=sum_ee_acc / steps,
        mean_entropy_channel=ent_c_acc / (steps * n),
        mean_entropy_power=ent_p_acc / (steps * n),
        mean_power_w=power_acc / (steps * n),
    )
    return result, obs


__all__ = ["EpisodeResult", "run_episode"]
