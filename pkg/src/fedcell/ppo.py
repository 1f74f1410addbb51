"""PPO learning core: GAE, clipped surrogate, critic loss, entropy bonus.

The objective maximized per minibatch is

    mean[ L_clip - c1 * L_critic + c2 * (H_channel + H_power) ]

where L_clip is the clipped importance-ratio surrogate, L_critic the
squared one-step TD error against targets frozen at rollout time, and the
entropies keep both heads exploring. The joint action log-prob is the sum
of the channel and power log-probs (independent heads, one shared ratio).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import net
from .env import Transition

log = logging.getLogger(__name__)


@dataclass
class PpoConfig:
    """Hyperparameters of one PPO learner."""

    discount: float = 0.9          # reward discount
    gae_lambda: float = 0.98       # advantage decay
    clip_epsilon: float = 0.2
    value_coeff: float = 0.5       # c1
    entropy_coeff: float = 0.01    # c2
    epochs_per_update: int = 4
    minibatch_size: int = 256
    normalize_advantage: bool = True
    # include the discount on the bootstrapped value in the TD target
    # (toggle kept because the plain target variant is a valid reading)
    td_target_uses_discount: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        if not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in (0, 1]")
        if self.clip_epsilon <= 0.0:
            raise ValueError("clip_epsilon must be positive")


def compute_gae(rewards, values, next_values, xi: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates by backward recursion.

    ``values`` and ``next_values`` are the critic's estimates of V(o_t) and
    V(o_{t+1}); the recursion A_t = delta_t + lam*xi*A_{t+1} reproduces the
    exponentially weighted sum of TD residuals.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    v_next = np.asarray(next_values, dtype=np.float64)
    if not (r.shape == v.shape == v_next.shape):
        raise ValueError("rewards, values and next_values must have equal length")
    delta = r + xi * v_next - v
    adv = np.empty_like(delta)
    acc = 0.0
    for t in range(len(delta) - 1, -1, -1):
        acc = delta[t] + lam * xi * acc
        adv[t] = acc
    return adv


def clip_fn(epsilon: float, advantage):
    """Clipped branch of the surrogate: (1+eps)*A for A >= 0, (1-eps)*A otherwise."""
    a = np.asarray(advantage, dtype=np.float64)
    out = np.where(a >= 0.0, (1.0 + epsilon) * a, (1.0 - epsilon) * a)
    return float(out) if out.ndim == 0 else out


def clipped_objective(log_prob_new, log_prob_old, advantage, epsilon: float):
    """Pessimistic surrogate min(ratio*A, clip(eps, A)) with ratio = exp(new - old)."""
    ratio = np.exp(np.asarray(log_prob_new, float) - np.asarray(log_prob_old, float))
    out = np.minimum(ratio * advantage, clip_fn(epsilon, advantage))
    return float(out) if out.ndim == 0 else out


def critic_loss(reward, value_next, value_now, xi: float):
    """Squared TD gap (r + xi*V(o') - V(o))^2."""
    out = (np.asarray(reward, float) + xi * np.asarray(value_next, float)
           - np.asarray(value_now, float)) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass
class TrainingBatch:
    """Frozen minibatch: everything an update needs, advantages precomputed."""

    obs: np.ndarray            # (B, D)
    channels: np.ndarray       # (B,) int
    power_raw: np.ndarray      # (B,)
    log_prob_old: np.ndarray   # (B,) joint log-prob at rollout time
    advantages: np.ndarray     # (B,)
    value_targets: np.ndarray  # (B,)

    def __len__(self) -> int:
        return len(self.obs)

    def select(self, idx: np.ndarray) -> "TrainingBatch":
        return TrainingBatch(self.obs[idx], self.channels[idx], self.power_raw[idx],
                             self.log_prob_old[idx], self.advantages[idx],
                             self.value_targets[idx])


class RolloutBuffer:
    """Ordered transitions of one agent, finalized into a TrainingBatch.

    On-policy contract: fill during rollout, call :meth:`finalize` once with
    the bootstrap value of the observation after the last step, feed the
    batch to exactly one update, then :meth:`clear`.
    """

    def __init__(self) -> None:
        self.transitions: list[Transition] = []

    def add(self, transition: Transition) -> None:
        self.transitions.append(transition)

    def __len__(self) -> int:
        return len(self.transitions)

    def clear(self) -> None:
        self.transitions = []

    def finalize(self, bootstrap_value: float, cfg: PpoConfig) -> TrainingBatch:
        """Compute GAE advantages and frozen TD targets for the stored trajectory."""
        if not self.transitions:
            raise ValueError("cannot finalize an empty rollout buffer")
        obs = np.stack([t.obs for t in self.transitions])
        channels = np.array([t.action.channel for t in self.transitions], dtype=np.int64)
        power_raw = np.array([t.action.power_raw for t in self.transitions])
        logp_old = np.array([t.log_prob_channel + t.log_prob_power for t in self.transitions])
        rewards = np.array([t.reward for t in self.transitions])
        values = np.array([t.value_estimate for t in self.transitions])
        next_values = np.append(values[1:], bootstrap_value)
        adv = compute_gae(rewards, values, next_values, cfg.discount, cfg.gae_lambda)
        xi_t = cfg.discount if cfg.td_target_uses_discount else 1.0
        targets = rewards + xi_t * next_values
        return TrainingBatch(obs=obs, channels=channels, power_raw=power_raw,
                             log_prob_old=logp_old, advantages=adv, value_targets=targets)


def _head_terms(params: net.PolicyParams, batch: TrainingBatch, cfg: PpoConfig):
    """Forward pass plus all per-sample quantities the objective needs."""
    cache = net.forward_batch(params, batch.obs)
    logp_all = net.log_softmax(cache.logits)
    b = np.arange(len(batch))
    logp_c = logp_all[b, batch.channels]
    logp_p = net.gaussian_log_prob(batch.power_raw, cache.mu, cache.log_sigma)
    ratio = np.exp(logp_c + logp_p - batch.log_prob_old)
    return cache, logp_all, logp_c, logp_p, ratio


def ppo_objective(params: net.PolicyParams, batch: TrainingBatch, cfg: PpoConfig) -> float:
    """Scalar objective (to be maximized) on a frozen batch."""
    cache, logp_all, _, _, ratio = _head_terms(params, batch, cfg)
    surrogate = np.minimum(ratio * batch.advantages, clip_fn(cfg.clip_epsilon, batch.advantages))
    td = (batch.value_targets - cache.value) ** 2
    ent_c = -(np.exp(logp_all) * logp_all).sum(axis=1)
    ent = ent_c + net.gaussian_entropy(cache.log_sigma)
    return float(np.mean(surrogate - cfg.value_coeff * td + cfg.entropy_coeff * ent))


def ppo_objective_grad(params: net.PolicyParams, batch: TrainingBatch,
                       cfg: PpoConfig) -> np.ndarray:
    """Exact gradient of :func:`ppo_objective` w.r.t. the flat parameters."""
    cache, logp_all, _, _, ratio = _head_terms(params, batch, cfg)
    b_idx = np.arange(len(batch))
    probs = np.exp(logp_all)
    inv_b = 1.0 / len(batch)

    # surrogate: gradient flows only through the unclipped branch of the min
    unclipped = ratio * batch.advantages
    active = unclipped <= clip_fn(cfg.clip_epsilon, batch.advantages)
    d_logp = np.where(active, unclipped, 0.0) * inv_b

    onehot = np.zeros_like(probs)
    onehot[b_idx, batch.channels] = 1.0
    d_logits = (onehot - probs) * d_logp[:, None]

    inv_var = np.exp(-2.0 * cache.log_sigma)
    resid = batch.power_raw - cache.mu
    d_mu = d_logp * resid * inv_var
    d_ls = d_logp * (resid * resid * inv_var - 1.0)

    # entropy bonus
    ent_c = -(probs * logp_all).sum(axis=1)
    d_logits += cfg.entropy_coeff * inv_b * (-probs * (logp_all + ent_c[:, None]))
    d_ls += cfg.entropy_coeff * inv_b

    # critic term (targets frozen)
    d_value = 2.0 * cfg.value_coeff * inv_b * (batch.value_targets - cache.value)

    return net.backward(params, cache, d_logits, d_mu, d_ls, d_value)


@dataclass
class UpdateDiagnostics:
    """Per-term loss diagnostics evaluated on the full buffer after the update."""

    objective: float = 0.0
    actor_term: float = 0.0
    critic_term: float = 0.0
    entropy_channel: float = 0.0
    entropy_power: float = 0.0
    mean_ratio: float = 1.0
    clip_fraction: float = 0.0
    n_samples: int = 0
    skipped: bool = False


def evaluate_terms(params: net.PolicyParams, batch: TrainingBatch,
                   cfg: PpoConfig) -> UpdateDiagnostics:
    """Term-by-term readout of the objective on a batch."""
    cache, logp_all, _, _, ratio = _head_terms(params, batch, cfg)
    surrogate = np.minimum(ratio * batch.advantages, clip_fn(cfg.clip_epsilon, batch.advantages))
    td = (batch.value_targets - cache.value) ** 2
    ent_c = -(np.exp(logp_all) * logp_all).sum(axis=1)
    ent_p = net.gaussian_entropy(cache.log_sigma)
    clipped = np.abs(ratio - 1.0) > cfg.clip_epsilon
    return UpdateDiagnostics(
        objective=float(np.mean(surrogate - cfg.value_coeff * td
                                + cfg.entropy_coeff * (ent_c + ent_p))),
        actor_term=float(surrogate.mean()),
        critic_term=float(td.mean()),
        entropy_channel=float(ent_c.mean()),
        entropy_power=float(ent_p.mean()),
        mean_ratio=float(ratio.mean()),
        clip_fraction=float(clipped.mean()),
        n_samples=len(batch),
    )


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std rescale; preserves the within-batch ordering."""
    std = adv.std()
    if std < 1e-12:
        return adv - adv.mean()
    return (adv - adv.mean()) / std


def update(params: net.PolicyParams, opt: net.AdamState, batch: TrainingBatch,
           cfg: PpoConfig, rng: np.random.Generator) -> UpdateDiagnostics:
    """Run the configured passes of minibatch Adam ascent on one frozen batch.

    Mutates ``params`` and ``opt`` in place and returns diagnostics computed
    on the full batch with the updated parameters.
    """
    if len(batch) == 0:
        log.warning("ppo.update called with an empty batch; skipping")
        return UpdateDiagnostics(skipped=True)
    if cfg.normalize_advantage:
        batch = TrainingBatch(batch.obs, batch.channels, batch.power_raw,
                              batch.log_prob_old, normalize_advantages(batch.advantages),
                              batch.value_targets)
    n = len(batch)
    mb = min(cfg.minibatch_size, n)
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            sel = batch.select(order[start:start + mb])
            grad = ppo_objective_grad(params, sel, cfg)
            net.adam_step(params, opt, -grad)  # ascent
    return evaluate_terms(params, batch, cfg)


__all__ = [
    "PpoConfig",
    "TrainingBatch",
    "RolloutBuffer",
    "UpdateDiagnostics",
    "compute_gae",
    "clip_fn",
    "clipped_objective",
    "critic_loss",
    "ppo_objective",
    "ppo_objective_grad",
    "evaluate_terms",
    "normalize_advantages",
    "update",
]
