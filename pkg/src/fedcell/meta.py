"""Meta-training a generalized initialization across tasks of different sizes.

One global parameter vector is trained at the BS: every epoch the current
policy collects one episode in each task's environment, the transitions of
all UEs land in a central dataset (with rollout-time log-probs, advantages
and targets attached), a batch is sampled and a single PPO update is applied
to the shared model. The dataset is cleared after each epoch's update so the
importance ratios always refer to the collecting policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import net, ppo
from .channel import ScenarioConfig
from .env import UplinkEnv
from .rollout import run_episode


@dataclass
class TaskSpec:
    """One training task: a scenario populated with ``n_ues`` agents."""

    n_ues: int
    scenario: ScenarioConfig
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_ues > self.scenario.n_subchannels:
            raise ValueError(
                f"task with n_ues={self.n_ues} exceeds n_subchannels="
                f"{self.scenario.n_subchannels}"
            )


@dataclass
class CentralDataset:
    """Pooled transitions from all tasks, stored update-ready."""

    obs: list = field(default_factory=list)
    channels: list = field(default_factory=list)
    power_raw: list = field(default_factory=list)
    log_prob_old: list = field(default_factory=list)
    advantages: list = field(default_factory=list)
    value_targets: list = field(default_factory=list)
    task_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return int(sum(len(chunk) for chunk in self.obs))

    def add_batch(self, batch: ppo.TrainingBatch, task_id: int) -> None:
        self.obs.append(batch.obs)
        self.channels.append(batch.channels)
        self.power_raw.append(batch.power_raw)
        self.log_prob_old.append(batch.log_prob_old)
        self.advantages.append(batch.advantages)
        self.value_targets.append(batch.value_targets)
        self.task_ids.append(np.full(len(batch), task_id, dtype=np.int64))

    def clear(self) -> None:
        for name in ("obs", "channels", "power_raw", "log_prob_old",
                     "advantages", "value_targets", "task_ids"):
            getattr(self, name).clear()

    def _stacked(self) -> ppo.TrainingBatch:
        return ppo.TrainingBatch(
            obs=np.concatenate(self.obs),
            channels=np.concatenate(self.channels),
            power_raw=np.concatenate(self.power_raw),
            log_prob_old=np.concatenate(self.log_prob_old),
            advantages=np.concatenate(self.advantages),
            value_targets=np.concatenate(self.value_targets),
        )


def sample_batch(dataset: CentralDataset, batch_size: int,
                 rng: np.random.Generator) -> ppo.TrainingBatch:
    """Uniform sample without replacement; a short dataset is returned whole."""
    if len(dataset) == 0:
        raise ValueError("cannot sample from an empty dataset")
    full = dataset._stacked()
    if len(full) <= batch_size:
        return full
    idx = rng.choice(len(full), size=batch_size, replace=False)
    return full.select(idx)


@dataclass
class MetaEpochLog:
    epoch: int
    task_rewards: list[float]
    reward_total: float
    transitions_collected: int = 0


def meta_train(tasks: list[TaskSpec], n_epochs: int, meta_lr: float,
               ppo_cfg: ppo.PpoConfig, seed: int,
               hidden1: int = 512, hidden2: int = 256, critic_hidden: int = 128,
               batch_size: int = 256, episode_len: int = 100,
               reward_coeff: float = 1e-7,
               log_sigma_init: float = -0.7) -> tuple[net.PolicyParams, list[MetaEpochLog]]:
    """Train one shared initialization over all tasks; returns it plus per-epoch logs."""
    if not tasks:
        raise ValueError("need at least one task")
    n_sub = tasks[0].scenario.n_subchannels
    for t in tasks:
        if t.scenario.n_subchannels != n_sub:
            raise ValueError("all tasks must share the subchannel count "
                             "(observation dimensionality is fixed)")

    ss = np.random.SeedSequence(seed)
    init_seed, update_seed = ss.spawn(2)
    topo = net.Topology(obs_dim=n_sub + 2, hidden1=hidden1, hidden2=hidden2,
                        n_channels=n_sub, critic_hidden=critic_hidden)
    params = net.init_params(topo, np.random.default_rng(init_seed),
                             log_sigma_init=log_sigma_init)
    opt = net.AdamState.for_params(params, lr=meta_lr)
    update_rng = np.random.default_rng(update_seed)

    envs = []
    env_rngs = []
    obs_list = []
    for k, t in enumerate(tasks):
        env = UplinkEnv(t.scenario, t.n_ues, reward_coeff=reward_coeff,
                        episode_len=episode_len)
        rng = np.random.default_rng(np.random.SeedSequence((seed, t.seed, k)))
        obs_list.append(env.reset(rng))
        envs.append(env)
        env_rngs.append(rng)

    dataset = CentralDataset()
    history: list[MetaEpochLog] = []
    for epoch in range(n_epochs):
        task_rewards = []
        for k, env in enumerate(envs):
            actors = [params] * env.n_ues
            result, obs_list[k] = run_episode(env, actors, env_rngs[k], obs_list[k])
            for i, buf in enumerate(result.buffers):
                batch = buf.finalize(float(result.bootstrap_values[i]), ppo_cfg)
                dataset.add_batch(batch, task_id=k)
                buf.clear()
            task_rewards.append(result.reward_total)
        collected = len(dataset)
        batch = sample_batch(dataset, batch_size, update_rng)
        ppo.update(params, opt, batch, ppo_cfg, update_rng)
        dataset.clear()
        history.append(MetaEpochLog(epoch=epoch, task_rewards=task_rewards,
                                    reward_total=float(sum(task_rewards)),
                                    transitions_collected=collected))
    return params, history


__all__ = ["TaskSpec", "CentralDataset", "MetaEpochLog", "sample_batch", "meta_train"]
