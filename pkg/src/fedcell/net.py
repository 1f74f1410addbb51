"""Shared-trunk actor-critic network with hand-written reverse-mode gradients.

The network is small enough that an explicit numpy implementation is
simpler and faster than a framework here: a two-layer tanh trunk feeding a
categorical head over subchannels, a Gaussian (mu, log-sigma) head for the
transmit power, and a one-hidden-layer critic branch attached after the
trunk. All parameters live in a single flat float64 vector, which makes
federated averaging and checkpointing plain vector arithmetic.

Gradients are exact reverse-mode derivatives of this module's own forward
arithmetic: callers provide the derivative of their scalar objective with
respect to the four head outputs, and :func:`backward` propagates it to the
flat parameter vector.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))

_MAGIC = b"FCP1"


@dataclass(frozen=True)
class Topology:
    """Layer widths of the network; defines the flat parameter layout."""

    obs_dim: int
    hidden1: int = 512
    hidden2: int = 256
    n_channels: int = 10
    critic_hidden: int = 128

    def shapes(self) -> list[tuple[int, ...]]:
        d, h1, h2, n, c = self.obs_dim, self.hidden1, self.hidden2, self.n_channels, self.critic_hidden
        return [
            (d, h1), (h1,),      # trunk layer 1
            (h1, h2), (h2,),     # trunk layer 2
            (h2, n), (n,),       # channel logits head
            (h2, 1), (1,),       # power mean head
            (h2, 1), (1,),       # power log-sigma head
            (h2, c), (c,),       # critic hidden
            (c, 1), (1,),        # value head
        ]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes())

    def offsets(self) -> list[tuple[int, int]]:
        out, pos = [], 0
        for s in self.shapes():
            size = int(np.prod(s))
            out.append((pos, pos + size))
            pos += size
        return out


@dataclass
class PolicyParams:
    """Flat parameter vector plus its topology."""

    topology: Topology
    theta: np.ndarray

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.topology.n_params,):
            raise ValueError(
                f"theta has {self.theta.shape} entries, topology needs {self.topology.n_params}"
            )

    def views(self) -> list[np.ndarray]:
        """Per-layer views into the flat vector (no copies)."""
        return [
            self.theta[a:b].reshape(s)
            for (a, b), s in zip(self.topology.offsets(), self.topology.shapes())
        ]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.topology, self.theta.copy())


def _orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal init scaled by ``gain`` (rows orthonormal up to transpose)."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(topology: Topology, rng: np.random.Generator,
                log_sigma_init: float = -0.7) -> PolicyParams:
    """Random initial parameters.

    Hidden layers use orthogonal init with gain sqrt(2); actor heads start
    near zero (gain 0.01) so early policies stay close to uniform; the value
    head uses gain 1. The log-sigma head bias starts at ``log_sigma_init``.
    """
    params = PolicyParams(topology, np.zeros(topology.n_params))
    w0, b0, w1, b1, wl, bl, wm, bm, ws, bs, wc, bc, wv, bv = params.views()
    w0[:] = _orthogonal(w0.shape, np.sqrt(2.0), rng)
    w1[:] = _orthogonal(w1.shape, np.sqrt(2.0), rng)
    wl[:] = _orthogonal(wl.shape, 0.01, rng)
    wm[:] = _orthogonal(wm.shape, 0.01, rng)
    ws[:] = _orthogonal(ws.shape, 0.01, rng)
    wc[:] = _orthogonal(wc.shape, np.sqrt(2.0), rng)
    wv[:] = _orthogonal(wv.shape, 1.0, rng)
    bs[:] = log_sigma_init
    return params


@dataclass
class ForwardCache:
    """Head outputs of a batched forward pass plus the activations backward needs."""

    x: np.ndarray          # (B, D)
    h1: np.ndarray         # (B, H1)
    h2: np.ndarray         # (B, H2)
    hc: np.ndarray         # (B, C)
    logits: np.ndarray     # (B, N)
    mu: np.ndarray         # (B,)
    log_sigma: np.ndarray  # (B,)
    value: np.ndarray      # (B,)


def forward_batch(params: PolicyParams, obs: np.ndarray) -> ForwardCache:
    """Deterministic forward pass on a (B, obs_dim) batch."""
    x = np.asarray(obs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.topology.obs_dim:
        raise ValueError(f"expected (B, {params.topology.obs_dim}) observations, got {x.shape}")
    w0, b0, w1, b1, wl, bl, wm, bm, ws, bs, wc, bc, wv, bv = params.views()
    h1 = np.tanh(x @ w0 + b0)
    h2 = np.tanh(h1 @ w1 + b1)
    logits = h2 @ wl + bl
    mu = (h2 @ wm)[:, 0] + bm[0]
    log_sigma = (h2 @ ws)[:, 0] + bs[0]
    hc = np.tanh(h2 @ wc + bc)
    value = (hc @ wv)[:, 0] + bv[0]
    return ForwardCache(x=x, h1=h1, h2=h2, hc=hc, logits=logits, mu=mu,
                        log_sigma=log_sigma, value=value)


def forward(params: PolicyParams, obs: np.ndarray) -> tuple[np.ndarray, float, float, float]:
    """Single-observation forward: (channel logits, mu, log_sigma, value)."""
    cache = forward_batch(params, np.asarray(obs, dtype=np.float64)[None, :])
    return cache.logits[0], float(cache.mu[0]), float(cache.log_sigma[0]), float(cache.value[0])


def backward(params: PolicyParams, cache: ForwardCache, d_logits: np.ndarray,
             d_mu: np.ndarray, d_log_sigma: np.ndarray, d_value: np.ndarray) -> np.ndarray:
    """Exact gradient of ``sum(objective)`` w.r.t. the flat parameter vector.

    ``d_*`` are the objective's derivatives w.r.t. the head outputs, shaped
    like the corresponding :class:`ForwardCache` fields. Any batch reduction
    (mean, weighting) must already be folded into them.
    """
    w0, b0, w1, b1, wl, bl, wm, bm, ws, bs, wc, bc, wv, bv = params.views()
    x, h1, h2, hc = cache.x, cache.h1, cache.h2, cache.hc
    d_mu = np.asarray(d_mu, dtype=np.float64)[:, None]
    d_ls = np.asarray(d_log_sigma, dtype=np.float64)[:, None]
    d_v = np.asarray(d_value, dtype=np.float64)[:, None]

    g_wv = hc.T @ d_v
    g_bv = d_v.sum(axis=0)
    d_hc = d_v @ wv.T
    d_pc = d_hc * (1.0 - hc * hc)
    g_wc = h2.T @ d_pc
    g_bc = d_pc.sum(axis=0)

    g_wl = h2.T @ d_logits
    g_bl = d_logits.sum(axis=0)
    g_wm = h2.T @ d_mu
    g_bm = d_mu.sum(axis=0)
    g_ws = h2.T @ d_ls
    g_bs = d_ls.sum(axis=0)

    d_h2 = d_logits @ wl.T + d_mu @ wm.T + d_ls @ ws.T + d_pc @ wc.T
    d_p2 = d_h2 * (1.0 - h2 * h2)
    g_w1 = h1.T @ d_p2
    g_b1 = d_p2.sum(axis=0)
    d_h1 = d_p2 @ w1.T
    d_p1 = d_h1 * (1.0 - h1 * h1)
    g_w0 = x.T @ d_p1
    g_b0 = d_p1.sum(axis=0)

    return np.concatenate([
        g.ravel() for g in (g_w0, g_b0, g_w1, g_b1, g_wl, g_bl,
                            g_wm, g_bm, g_ws, g_bs, g_wc, g_bc, g_wv, g_bv)
    ])


# ---------------------------------------------------------------------------
# distributions


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable log-softmax along the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    """Entropy of the channel distribution (nats)."""
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=-1)

def gaussian_entropy(log_sigma: np.ndarray) -> np.ndarray:
    """Differential entropy of the power distribution (nats)."""
    return 0.5 * (_LOG_2PI + 1.0) + np.asarray(log_sigma, dtype=np.float64)


def gaussian_log_prob(x, mu, log_sigma):
    """Log-density of the pre-clip Gaussian power sample."""
    z = (np.asarray(x, float) - mu) / np.exp(log_sigma)
    return -0.5 * z * z - log_sigma - 0.5 * _LOG_2PI


def sample_action(logits: np.ndarray, mu: float, log_sigma: float,
                  rng: np.random.Generator):
    """Sample (channel, power_raw) and return log-probs and entropies.

    Returns ``(channel, power_raw, logp_channel, logp_power, ent_channel,
    ent_power)``. Log-probs are under the pre-clip densities.
    """
    logp = log_softmax(logits)
    cdf = np.cumsum(np.exp(logp))
    channel = int(np.searchsorted(cdf, rng.random() * cdf[-1]))
    channel = min(channel, len(logits) - 1)
    sigma = float(np.exp(log_sigma))
    power_raw = float(mu + sigma * rng.standard_normal())
    ent_c = float(-(np.exp(logp) * logp).sum())
    ent_p = float(gaussian_entropy(log_sigma))
    return (channel, power_raw, float(logp[channel]),
            float(gaussian_log_prob(power_raw, mu, log_sigma)), ent_c, ent_p)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """Adam moments for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: PolicyParams, lr: float) -> "AdamState":
        n = params.topology.n_params
        return cls(m=np.zeros(n), v=np.zeros(n), lr=lr)


def adam_step(params: PolicyParams, state: AdamState, grad: np.ndarray) -> PolicyParams:
    """One bias-corrected Adam descent step; mutates ``params`` and ``state`` in place.

    Callers maximizing an objective pass the negated gradient.
    """
    if grad.shape != params.theta.shape:
        raise ValueError("gradient length does not match parameter vector")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    params.theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# ---------------------------------------------------------------------------
# persistence: little-endian binary, 4-byte magic, int32 topology header,
# float64 parameter payload


def save_params(params: PolicyParams, path) -> None:
    t = params.topology
    header = struct.pack("<5i", t.obs_dim, t.hidden1, t.hidden2, t.n_channels, t.critic_hidden)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(header)
        f.write(params.theta.astype("<f8").tobytes())


def load_params(path) -> PolicyParams:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a parameter file (bad magic {magic!r})")
        d, h1, h2, n, c = struct.unpack("<5i", f.read(20))
        topo = Topology(obs_dim=d, hidden1=h1, hidden2=h2, n_channels=n, critic_hidden=c)
        theta = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    return PolicyParams(topo, theta)


__all__ = [
    "Topology",
    "PolicyParams",
    "ForwardCache",
    "AdamState",
    "init_params",
    "forward",
    "forward_batch",
    "backward",
    "sample_action",
    "log_softmax",
    "softmax",
    "categorical_entropy",
    "gaussian_entropy",
    "gaussian_log_prob",
    "adam_step",
    "save_params",
    "load_params",
]
