"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they complete. The trend criteria (07-09) train on desk-scale toy
tasks with frozen seeds, so every run reproduces the same numbers.
"""

import itertools

import numpy as np
import pytest

from conftest import finite_difference, relative_errors
from fedcell import baselines, channel as ch, fed, meta, net, ppo
from fedcell.expcli import cmd_adapt, cmd_evaluate, cmd_meta_train, cmd_oracle, evaluate_models, load_config
from test_net import score_function_mean_and_se
from test_ppo import gae_double_sum, make_batch

SEEDS = (0, 1, 2, 3, 4)
NETKW = dict(hidden1=32, hidden2=32, critic_hidden=16)
META_PPO = ppo.PpoConfig(minibatch_size=256, epochs_per_update=4)
# fast schedule: used for the learning smoke test / benchmark ordering
PPO_FAST = ppo.PpoConfig(minibatch_size=256, epochs_per_update=10)
FED_FAST = fed.FedConfig(averaging_period_episodes=120, weighting="success",
                         adaptation_lr=1e-3, n_adapt_episodes=300, checkpoint_episodes=())
# slow schedule: used for the convergence-speed comparison
PPO_SLOW = ppo.PpoConfig(minibatch_size=256, epochs_per_update=4)
FED_SLOW = fed.FedConfig(averaging_period_episodes=120, weighting="success",
                         adaptation_lr=3e-4, n_adapt_episodes=300, checkpoint_episodes=())
REWARD_COEFF = 1e-9


def report(num: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print("\n" + line)
    assert ok, line


def toy_scenario(n_subchannels: int) -> ch.ScenarioConfig:
    bw = {3: [0.18, 0.36, 0.72], 4: [0.18, 0.36, 0.72, 1.44]}[n_subchannels]
    return ch.toy_scenario(n_subchannels=n_subchannels,
                           subchannel_bandwidth_hz=np.array(bw) * 1e6)


def run_adapt(variant, scenario, fed_cfg, ppo_cfg, seed, meta_params=None):
    task = meta.TaskSpec(n_ues=2, scenario=scenario, seed=0)
    return baselines.run_variant(variant, task, fed_cfg, ppo_cfg, seed=seed,
                                 meta_params=meta_params, reward_coeff=REWARD_COEFF,
                                 episode_len=100, **NETKW)


def train_meta(scenario, task_sizes, seed=7):
    tasks = [meta.TaskSpec(n_ues=i, scenario=scenario, seed=k)
             for k, i in enumerate(task_sizes)]
    params, _ = meta.meta_train(tasks, n_epochs=300, meta_lr=3e-4, ppo_cfg=META_PPO,
                                seed=seed, batch_size=256, episode_len=100,
                                reward_coeff=REWARD_COEFF, **NETKW)
    return params


# -- shared training runs (expensive, computed once) ---------------------------------

@pytest.fixture(scope="module")
def toy3():
    return toy_scenario(3)


@pytest.fixture(scope="module")
def toy4():
    return toy_scenario(4)


@pytest.fixture(scope="module")
def meta3_model(toy3):
    return train_meta(toy3, (2, 3))


@pytest.fixture(scope="module")
def meta4_model(toy4):
    return train_meta(toy4, (2, 4))


@pytest.fixture(scope="module")
def mfrl_runs(toy3, meta3_model):
    return {s: run_adapt("MFRL", toy3, FED_FAST, PPO_FAST, s, meta3_model) for s in SEEDS}


@pytest.fixture(scope="module")
def marl_runs(toy3):
    return {s: run_adapt("MARL", toy3, FED_FAST, PPO_FAST, s) for s in SEEDS}


@pytest.fixture(scope="module")
def paired_runs(toy4, meta4_model):
    out = {}
    for s in SEEDS:
        out[s] = (run_adapt("MFRL", toy4, FED_SLOW, PPO_SLOW, s, meta4_model),
                  run_adapt("FRL", toy4, FED_SLOW, PPO_SLOW, s))
    return out


# -- criterion 1: formula exactness ---------------------------------------------------

def test_criterion_01_formula_exactness():
    cases = [
        ("pathloss f=1 d=100", ch.pathloss_db(1.0, 100.0), 92.4),
        ("pathloss f=6 d=100", ch.pathloss_db(6.0, 100.0), 107.9630250077),
        ("pathloss f=6 d=1", ch.pathloss_db(6.0, 1.0), 47.9630250077),
        ("gain 100dB", ch.channel_gain(100.0, 1.0, 1.0), 1e-10),
        ("gain 0dB", ch.channel_gain(0.0, 1.0, 1.0), 1.0),
        ("gain 92.4dB sh2 f.5", ch.channel_gain(92.4, 2.0, 0.5), 5.7544e-10),
        ("noise 1Hz", ch.noise_power_w(1.0, -170.0, 0.0), 1e-20),
        ("noise 0.18MHz", ch.noise_power_w(0.18e6, -170.0, 0.0), 1.8e-15),
        ("noise 1.44MHz nf5", ch.noise_power_w(1.44e6, -160.0, 5.0), 4.5537e-13),
        ("snr assigned", ch.snr(True, 1e-10, 0.1, 1.8e-15), 5555.5556),
        ("snr unassigned", ch.snr(False, 1e-10, 0.1, 1.8e-15), 0.0),
        ("snr identity", ch.snr(True, 1.0, 1.0, 1.0), 1.0),
        ("ee typical", ch.energy_efficiency(0.18e6, 0.1, 5555.56), 2.2392e7),
        ("ee identity", ch.energy_efficiency(1.0, 1.0, 1.0), 1.0),
        ("ee unassigned", ch.energy_efficiency(0.18e6, 0.1, 5555.56, assigned=False), 0.0),
    ]
    worst = 0.0
    for name, got, want in cases:
        err = abs(got - want) / max(abs(want), 1e-30) if want != 0.0 else abs(got)
        worst = max(worst, err)
        assert err < 1e-3, f"{name}: got {got!r}, want {want!r}"
    report(1, "formula exactness", True, f"{len(cases)} pinned cases, worst rel err {worst:.2e}")


# -- criterion 2: gradient correctness -------------------------------------------------

def test_criterion_02_gradient_correctness():
    topo = net.Topology(obs_dim=5, hidden1=8, hidden2=8, n_channels=3, critic_hidden=8)
    cfg = ppo.PpoConfig(clip_epsilon=0.2, value_coeff=0.5, entropy_coeff=0.01)
    params, batch = make_batch(topo, batch_size=16, seed=20)
    analytic = ppo.ppo_objective_grad(params, batch, cfg)
    numeric = finite_difference(lambda: ppo.ppo_objective(params, batch, cfg),
                                params.theta, h=1e-5)
    worst = relative_errors(analytic, numeric).max()
    report(2, "gradient correctness", worst < 1e-4,
           f"max rel coord err {worst:.2e} over {len(analytic)} params")


# -- criterion 3: GAE oracle equivalence ------------------------------------------------

def test_criterion_03_gae_oracle_equivalence():
    rng = np.random.default_rng(33)
    worst = 0.0
    for _ in range(1000):
        T = int(rng.integers(1, 51))
        r, v, nv = rng.normal(size=(3, T))
        xi = rng.uniform(0.5, 0.99)
        lam = rng.uniform(0.5, 1.0)
        diff = np.abs(ppo.compute_gae(r, v, nv, xi, lam)
                      - gae_double_sum(r, v, nv, xi, lam)).max()
        worst = max(worst, diff)
    assert worst < 1e-10
    # lambda = 1 equals the discounted Monte-Carlo return minus baseline
    worst_mc = 0.0
    for _ in range(200):
        T = int(rng.integers(2, 51))
        r = rng.normal(size=T)
        v = rng.normal(size=T + 1)
        xi = rng.uniform(0.5, 0.99)
        adv = ppo.compute_gae(r, v[:-1], v[1:], xi=xi, lam=1.0)
        for t in range(T):
            mc = sum(xi ** l * r[t + l] for l in range(T - t)) + xi ** (T - t) * v[T]
            worst_mc = max(worst_mc, abs(adv[t] - (mc - v[t])))
    report(3, "GAE oracle equivalence", worst < 1e-10 and worst_mc < 1e-10,
           f"recursion vs double sum {worst:.2e}, lambda=1 identity {worst_mc:.2e}")


# -- criterion 4: score function has zero mean -------------------------------------------

def test_criterion_04_score_function_zero_mean():
    topo = net.Topology(obs_dim=5, hidden1=8, hidden2=8, n_channels=3, critic_hidden=4)
    rng = np.random.default_rng(777)
    worst_z = 0.0
    for _ in range(5):
        params = net.PolicyParams(topo, rng.normal(0.0, 0.6, topo.n_params))
        obs = rng.normal(size=5)
        mean, se = score_function_mean_and_se(params, obs, n_samples=100_000,
                                              n_chunks=100, rng=rng)
        ok = np.abs(mean) <= 3.0 * se + 1e-12
        nonzero = np.abs(mean) > 1e-12
        if np.any(nonzero):
            worst_z = max(worst_z, float((np.abs(mean)[nonzero] / se[nonzero]).max()))
        assert np.all(ok)
    report(4, "expected grad-log-prob is zero", True,
           f"5 pairs x 1e5 samples, worst |z| {worst_z:.2f} < 3")


# -- criterion 5: federated averaging algebra ---------------------------------------------

def test_criterion_05_federated_averaging_algebra():
    topo = net.Topology(obs_dim=3, hidden1=4, hidden2=4, n_channels=2, critic_hidden=2)
    rng = np.random.default_rng(55)
    worst = 0.0
    for case in range(1000):
        k = int(rng.integers(2, 9))
        models = [net.PolicyParams(topo, rng.normal(size=topo.n_params)) for _ in range(k)]
        weights = rng.uniform(0.05, 3.0, size=k)
        rates = rng.uniform(0.01, 1.0, size=k)
        stack = np.stack([m.theta for m in models])
        scale = np.abs(stack).max()
        for avg in (fed.fedavg_size_weighted(models, weights),
                    fed.fedavg_success_weighted(models, rates)):
            # convexity
            hi = (avg.theta - stack.max(axis=0)).max() / scale
            lo = (stack.min(axis=0) - avg.theta).max() / scale
            worst = max(worst, hi, lo)
            assert hi <= 1e-15 and lo <= 1e-15
        # permutation invariance
        perm = rng.permutation(k)
        a = fed.fedavg_size_weighted(models, weights).theta
        b = fed.fedavg_size_weighted([models[i] for i in perm], weights[perm]).theta
        d = np.abs(a - b).max() / scale
        worst = max(worst, d)
        assert d <= 1e-15
        # idempotence on identical models
        clones = [models[0].copy() for _ in range(k)]
        for avg in (fed.fedavg_size_weighted(clones, weights),
                    fed.fedavg_success_weighted(clones, rates)):
            d = (np.abs(avg.theta - models[0].theta)
                 / np.maximum(np.abs(models[0].theta), 1e-30)).max()
            worst = max(worst, d)
            assert d <= 1e-15
        # single-model identity
        for avg in (fed.fedavg_size_weighted(models[:1], weights[:1]),
                    fed.fedavg_success_weighted(models[:1], rates[:1])):
            d = (np.abs(avg.theta - models[0].theta)
                 / np.maximum(np.abs(models[0].theta), 1e-30)).max()
            worst = max(worst, d)
            assert d <= 1e-15
    report(5, "federated averaging algebra", True,
           f"1000 cases, worst deviation {worst:.2e} <= 1e-15")


# -- criterion 6: assignment oracle agreement -----------------------------------------------

def test_criterion_06_assignment_oracle():
    rng = np.random.default_rng(66)
    for case in range(200):
        n_ues = int(rng.integers(1, 6))
        n_sub = int(rng.integers(n_ues, 9))
        ee = rng.uniform(0.0, 100.0, size=(n_ues, n_sub))
        _, h_total = baselines.hungarian_assignment(ee)
        best = max(sum(ee[i, n] for i, n in enumerate(assign))
                   for assign in itertools.permutations(range(n_sub), n_ues))
        assert abs(h_total - best) <= 1e-9 * max(1.0, abs(best)), f"case {case}"
    report(6, "Hungarian equals exhaustive enumeration", True, "200 instances, I<=5 N<=8")


# -- criterion 7: learning smoke test ----------------------------------------------------------

def test_criterion_07_learning_smoke(toy3, mfrl_runs):
    improvements, collisions, ratios = [], [], []
    for seed, result in mfrl_runs.items():
        rewards = np.array([m.reward for m in result.metrics])
        coll = np.array([m.collision_rate for m in result.metrics])
        improvements.append(rewards[-50:].mean() - rewards[:50].mean())
        collisions.append(coll[-50:].mean())
        rows = evaluate_models(result.models, toy3, 2, n_distributions=20, n_steps=20,
                               seed=1234, episode_len=100)
        ratios.append(np.mean([r["mean_sum_ee"] / r["oracle_sum_ee"] for r in rows]))
    ok = (all(d > 0 for d in improvements)
          and float(np.mean(collisions)) < 0.05
          and float(np.mean(ratios)) >= 0.70)
    report(7, "learning smoke test", ok,
           f"reward gain per seed {['%.0f' % d for d in improvements]}, "
           f"mean final collision rate {np.mean(collisions):.3f} < 0.05, "
           f"EE/oracle {np.mean(ratios):.3f} >= 0.70")


# -- criterion 8: meta-initialization benefit ----------------------------------------------------

def _episodes_to_fraction_of_final(rewards: np.ndarray, frac: float = 0.8,
                                   window: int = 10) -> int:
    smooth = np.convolve(rewards, np.ones(window) / window, mode="valid")
    final = rewards[-50:].mean()
    hits = np.flatnonzero(smooth >= frac * final)
    return int(hits[0]) if len(hits) else len(rewards)


def test_criterion_08_meta_initialization_benefit(paired_runs):
    wins = 0
    ent_meta, ent_rand = [], []
    details = []
    for seed, (run_meta_init, run_rand_init) in paired_runs.items():
        r_m = np.array([m.reward for m in run_meta_init.metrics])
        r_f = np.array([m.reward for m in run_rand_init.metrics])
        t_m = _episodes_to_fraction_of_final(r_m)
        t_f = _episodes_to_fraction_of_final(r_f)
        wins += int(t_m < t_f)
        ent_meta.append(run_meta_init.metrics[100].entropy_channel)
        ent_rand.append(run_rand_init.metrics[100].entropy_channel)
        details.append(f"s{seed}:{t_m}vs{t_f}")
    entropy_ok = float(np.mean(ent_meta)) < float(np.mean(ent_rand))
    ok = wins >= 4 and entropy_ok
    report(8, "meta initialization converges faster", ok,
           f"episode-to-80% wins {wins}/5 [{' '.join(details)}], "
           f"entropy@100 {np.mean(ent_meta):.3f} < {np.mean(ent_rand):.3f}")


# -- criterion 9: benchmark ordering sanity ---------------------------------------------------------

def test_criterion_09_benchmark_ordering(toy3, mfrl_runs, marl_runs):
    def mean_eval_ee(runs):
        vals = []
        for result in runs.values():
            rows = evaluate_models(result.models, toy3, 2, n_distributions=20,
                                   n_steps=20, seed=4321, episode_len=100)
            vals.extend(r["mean_sum_ee"] for r in rows)
        return float(np.mean(vals))

    ee_mfrl = mean_eval_ee(mfrl_runs)
    ee_marl = mean_eval_ee(marl_runs)
    ok = ee_mfrl >= 0.95 * ee_marl
    strict = ee_mfrl >= ee_marl  # reported, not gated
    report(9, "benchmark ordering (soft dominance)", ok,
           f"MFRL {ee_mfrl:.3e} vs MARL {ee_marl:.3e} "
           f"(ratio {ee_mfrl / ee_marl:.3f}, strict dominance: {strict})")


# -- criterion 10: determinism ------------------------------------------------------------------------

_TINY_INI = """
[scenario]
preset = indoor
n_subchannels = 3
bandwidths_mhz = 0.18, 0.36, 0.72

[env]
n_ues = 2
episode_len = 10
reward_coeff = 1e-9

[net]
hidden1 = 8
hidden2 = 8
critic_hidden = 4

[ppo]
minibatch_size = 32
epochs_per_update = 2

[meta]
tasks = 2, 3
epochs = 3
learning_rate = 1e-4
batch_size = 64

[fed]
weighting = success
averaging_period = 2
episodes = 4
learning_rate = 1e-4
checkpoint_episodes = 2

[eval]
n_distributions = 2
n_steps = 5
"""


def test_criterion_10_determinism(tmp_path):
    ini = tmp_path / "tiny.ini"
    ini.write_text(_TINY_INI)
    cfg = load_config(str(ini))
    compared = []

    def assert_same(rel, a, b):
        fa, fb = a / rel, b / rel
        assert fa.read_bytes() == fb.read_bytes(), f"{rel} differs between reruns"
        compared.append(rel)

    for run in ("r1", "r2"):
        base = tmp_path / run
        model = cmd_meta_train(cfg, seed=9, out_dir=base / "meta")
        cmd_adapt(cfg, seed=9, out_dir=base / "adapt", variant="MFRL", meta_model=model)
        cmd_evaluate(cfg, seed=9, out_dir=base / "eval",
                     model_specs=[("MFRL", base / "adapt")])
        cmd_oracle(cfg, seed=9, out_dir=base / "oracle")
    a, b = tmp_path / "r1", tmp_path / "r2"
    assert_same("meta/meta_reward.csv", a, b)
    assert_same("meta/meta_model.bin", a, b)
    assert_same("adapt/adapt_metrics.csv", a, b)
    assert_same("adapt/model_ue0_final.bin", a, b)
    assert_same("adapt/model_ue1_final.bin", a, b)
    assert_same("eval/eval_ee.csv", a, b)
    assert_same("oracle/oracle.csv", a, b)
    report(10, "byte-identical reruns", True,
           f"{len(compared)} artifacts compared across full pipeline reruns")
