"""Benchmark variants and exact small-instance oracles.

The five schemes form a lattice over {random vs pre-trained init} x
{with vs without federated averaging}, plus a half-trained checkpoint
variant. The oracles solve the joint channel/power problem exactly on
small instances: per-(UE, subchannel) the energy-efficiency-optimal power
has a closed form (EE is strictly decreasing in power, so the optimum sits
at the lowest power that clears the SNR floor), and the channel assignment
is found by exhaustive enumeration or by linear sum assignment.
"""

from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import channel as ch
from . import net, ppo
from .fed import AdaptResult, FedConfig, adapt
from .meta import TaskSpec

VARIANTS = ("MFRL", "MRL", "FRL", "MARL", "MFRL_EARLY")

_ORACLE_MAX_CHANNELS = 6
_ORACLE_MAX_GRID = 32


def default_power_grid(scenario: ch.ScenarioConfig, n_points: int = 25) -> np.ndarray:
    """Candidate transmit powers: uniform in dBm over the allowed range."""
    dbm = np.linspace(scenario.p_min_dbm, scenario.p_max_dbm, n_points)
    return np.array([ch.dbm_to_w(x) for x in dbm])


def run_variant(variant: str, task: TaskSpec, fed_cfg: FedConfig,
                ppo_cfg: ppo.PpoConfig, seed: int,
                meta_params: net.PolicyParams | None = None,
                random_init: net.PolicyParams | None = None,
                reward_coeff: float = 1e-7, episode_len: int = 100,
                hidden1: int = 512, hidden2: int = 256, critic_hidden: int = 128,
                log_sigma_init: float = -0.7) -> AdaptResult:
    """Adaptation run with the switches of the named benchmark.

    MFRL/MRL/MFRL_EARLY start from ``meta_params``; FRL/MARL from a fresh
    random model (or ``random_init`` when supplied, so paired comparisons
    can share it). MFRL_EARLY trains like MFRL for the first half of the
    episodes and is evaluated frozen afterwards.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    uses_meta = variant in ("MFRL", "MRL", "MFRL_EARLY")
    if uses_meta and meta_params is None:
        raise ValueError(f"{variant} requires a pre-trained meta model")

    if uses_meta:
        initial = meta_params
    elif random_init is not None:
        initial = random_init
    else:
        n_sub = task.scenario.n_subchannels
        topo = net.Topology(obs_dim=n_sub + 2, hidden1=hidden1, hidden2=hidden2,
                            n_channels=n_sub, critic_hidden=critic_hidden)
        init_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF3D)))
        initial = net.init_params(topo, init_rng, log_sigma_init=log_sigma_init)

    cfg = fed_cfg
    if variant in ("MRL", "MARL"):
        cfg = replace(cfg, weighting="none")
    if variant == "MFRL_EARLY":
        half = cfg.n_adapt_episodes // 2
        marks = tuple(sorted(set(cfg.checkpoint_episodes) | {half}))
        cfg = replace(cfg, freeze_after=half, checkpoint_episodes=marks)

    return adapt(initial, task, cfg, ppo_cfg, seed=seed,
                 reward_coeff=reward_coeff, episode_len=episode_len)


# ---------------------------------------------------------------------------
# oracles


def best_power_per_cell(gains: np.ndarray, scenario: ch.ScenarioConfig,
                        power_grid: np.ndarray | None = None):
    """Optimal feasible power and its EE for every (UE, subchannel) pair.

    EE is strictly decreasing in power, so the continuous optimum is the
    smallest feasible power: p_min when that already clears the SNR floor,
    otherwise the floor-crossing power. The grid is augmented with those
    closed-form candidates, which makes the search exact rather than a
    grid-resolution lower bound. Pairs that cannot reach the floor even at
    maximum power are scored at maximum power (the environment's fallback),
    flagged infeasible.

    Returns ``(ee, power, feasible)`` arrays of shape ``gains.shape``.
    """
    gains = np.asarray(gains, dtype=float)
    n_ues, n_sub = gains.shape
    noise = scenario.noise_w()
    if power_grid is None:
        power_grid = default_power_grid(scenario)
    grid = np.asarray(power_grid, dtype=float)

    ee = np.zeros_like(gains)
    power = np.zeros_like(gains)
    feasible = np.zeros(gains.shape, dtype=bool)
    gmin = scenario.gamma_min_lin
    for i in range(n_ues):
        for n in range(n_sub):
            h = gains[i, n]
            bw = scenario.subchannel_bandwidth_hz[n]
            # power where the SNR floor is met exactly, nudged to the strict side
            p_floor = gmin * noise[n] / h * (1.0 + 1e-12)
            cand = np.concatenate([grid, [scenario.p_min_w, scenario.p_max_w, p_floor]])
            cand = cand[(cand >= scenario.p_min_w) & (cand <= scenario.p_max_w)]
            snrs = h * cand / noise[n]
            ok = snrs > gmin
            if np.any(ok):
                vals = ch.energy_efficiency(bw, cand[ok], snrs[ok])
                best = int(np.argmax(vals))
                ee[i, n] = vals[best]
                power[i, n] = cand[ok][best]
                feasible[i, n] = True
            else:
                g_max = h * scenario.p_max_w / noise[n]
                ee[i, n] = ch.energy_efficiency(bw, scenario.p_max_w, g_max)
                power[i, n] = scenario.p_max_w
    return ee, power, feasible


def brute_force_optimum(gains: np.ndarray, power_grid: np.ndarray,
                        scenario: ch.ScenarioConfig):
    """Exhaustive joint optimum over injective assignments and candidate powers.

    Tractability guard: at most 6 subchannels and 32 grid points. With no
    inter-UE interference the power choice separates per (UE, subchannel),
    so the search is a per-cell power argmax followed by assignment
    enumeration.

    Returns ``(assignment, powers, ee_total)`` with ``assignment[i]`` the
    subchannel of UE i.
    """
    gains = np.asarray(gains, dtype=float)
    n_ues, n_sub = gains.shape
    if not n_ues <= n_sub <= _ORACLE_MAX_CHANNELS:
        raise ValueError(
            f"instance {n_ues}x{n_sub} outside the oracle guard (I <= N <= {_ORACLE_MAX_CHANNELS})"
        )
    if len(power_grid) > _ORACLE_MAX_GRID:
        raise ValueError(f"power grid larger than {_ORACLE_MAX_GRID} points")

    ee, power, _ = best_power_per_cell(gains, scenario, power_grid)
    best_sum = -np.inf
    best_assign: tuple[int, ...] | None = None
    for assign in itertools.permutations(range(n_sub), n_ues):
        total = sum(ee[i, n] for i, n in enumerate(assign))
        if total > best_sum:
            best_sum = total
            best_assign = assign
    assignment = np.array(best_assign, dtype=np.int64)
    powers = power[np.arange(n_ues), assignment]
    return assignment, powers, float(best_sum)


def hungarian_assignment(ee_matrix: np.ndarray):
    """Sum-maximizing injective assignment of UEs to subchannels.

    Solved as a linear sum assignment problem; returns ``(assignment,
    total)`` with ``assignment[i]`` the subchannel of UE i.
    """
    m = np.asarray(ee_matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] > m.shape[1]:
        raise ValueError("need an I x N matrix with I <= N")
    if not np.all(np.isfinite(m)):
        raise ValueError("assignment matrix must be finite")
    rows, cols = linear_sum_assignment(m, maximize=True)
    assignment = np.empty(m.shape[0], dtype=np.int64)
    assignment[rows] = cols
    return assignment, float(m[rows, cols].sum())


def oracle_sum_ee(gains: np.ndarray, scenario: ch.ScenarioConfig,
                  power_grid: np.ndarray | None = None) -> float:
    """Optimal sum EE on one gain snapshot via the assignment oracle."""
    ee, _, _ = best_power_per_cell(gains, scenario, power_grid)
    _, total = hungarian_assignment(ee)
    return total


__all__ = [
    "VARIANTS",
    "default_power_grid",
    "run_variant",
    "best_power_per_cell",
    "brute_force_optimum",
    "hungarian_assignment",
    "oracle_sum_ee",
]
