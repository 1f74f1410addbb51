import numpy as np
import pytest

from fedcell import channel as ch
from fedcell.env import (Action, SuccessTracker, UplinkEnv, collision_penalty,
                         discounted_return, power_from_raw, success_rate, ue_reward)


def _actions(env, channels, raw=0.0):
    return [Action(channel=c, power_raw=raw, power_w=power_from_raw(raw, env.scenario))
            for c in channels]


# -- reward pieces -------------------------------------------------------------

def test_team_reward_success_branch_sums_per_ue_rewards():
    assert sum([1.0, 2.0, 3.0]) == pytest.approx(6.0)  # branch definition
    assert collision_penalty(2, 4) == pytest.approx(-0.5)
    assert collision_penalty(0, 5) == pytest.approx(-1.0)


def test_ue_reward_branches():
    # above the floor: chosen-power EE; derived case 1e-7 * 2.2392e7
    assert ue_reward(2.2392e7, 1.0, gamma_lin=5555.56, gamma_min_lin=3.16,
                     coeff=1e-7) == pytest.approx(2.2392, rel=1e-3)
    # below the floor: falls back to the max-power EE
    assert ue_reward(123.0, 45.0, gamma_lin=1.0, gamma_min_lin=3.16,
                     coeff=0.5) == pytest.approx(22.5)


def test_success_rate_cases():
    t = SuccessTracker(beta=np.array([50, 0, 33]), total=100)
    assert success_rate(t, 0) == pytest.approx(0.5)
    assert success_rate(t, 1) == 0.0
    t2 = SuccessTracker(beta=np.array([33]), total=33)
    assert success_rate(t2, 0) == pytest.approx(1.0)
    fresh = SuccessTracker(beta=np.zeros(2, dtype=int), total=0)
    assert success_rate(fresh, 1) == 0.0


def test_discounted_return():
    assert discounted_return([1.0], 0.9) == pytest.approx(1.0)
    assert discounted_return([1.0, 1.0], 0.9) == pytest.approx(1.9)
    # geometric series closed form as the oracle
    closed_form = (1.0 - 0.9 ** 50) / (1.0 - 0.9)
    assert discounted_return([1.0] * 50, 0.9) == pytest.approx(closed_form, rel=1e-12)
    with pytest.raises(ValueError):
        discounted_return([1.0], 1.0)


# -- env lifecycle --------------------------------------------------------------

def test_reset_shapes_and_determinism():
    sc = ch.scenario_preset("urban_micro")
    env = UplinkEnv(sc, 2)
    obs_a = env.reset(np.random.default_rng(11))
    assert obs_a.shape == (2, 12)
    assert np.all(np.isfinite(obs_a))
    obs_b = UplinkEnv(sc, 2).reset(np.random.default_rng(11))
    np.testing.assert_array_equal(obs_a, obs_b)


def test_too_many_ues_rejected():
    sc = ch.scenario_preset("urban_micro")
    with pytest.raises(ValueError):
        UplinkEnv(sc, 11)


def test_observation_dim_constant_across_task_sizes(toy3):
    dims = set()
    for n_ues in (1, 2, 3):
        env = UplinkEnv(toy3, n_ues)
        obs = env.reset(np.random.default_rng(0))
        dims.add(obs.shape[1])
    assert dims == {toy3.n_subchannels + 2}


# -- joint step ------------------------------------------------------------------

def test_collision_free_step_matches_formula_cross_check(toy3):
    env = UplinkEnv(toy3, 3, reward_coeff=1e-9)
    env.reset(np.random.default_rng(21))
    gains = env.state.gain_lin.copy()
    actions = _actions(env, [0, 1, 2], raw=0.25)
    reward, _, stats = env.joint_step(actions)
    assert not stats.collision and stats.i_suc == 3
    expected = np.zeros(3)
    for i in range(3):
        n = actions[i].channel
        g = ch.snr(True, gains[i, n], actions[i].power_w, env.noise_w[n])
        p_eff = actions[i].power_w if g > toy3.gamma_min_lin else toy3.p_max_w
        g_eff = ch.snr(True, gains[i, n], p_eff, env.noise_w[n])
        expected[i] = ch.energy_efficiency(toy3.subchannel_bandwidth_hz[n], p_eff, g_eff)
    np.testing.assert_allclose(stats.ee_per_ue, expected, rtol=1e-12)
    assert reward == pytest.approx(1e-9 * expected.sum(), rel=1e-12)
    np.testing.assert_array_equal(env.tracker.beta, [1, 1, 1])


def test_collision_step_penalty_and_counts():
    sc = ch.toy_scenario(n_subchannels=4)
    env = UplinkEnv(sc, 4)
    env.reset(np.random.default_rng(3))
    reward, _, stats = env.joint_step(_actions(env, [0, 0, 1, 2]))
    assert stats.collision and stats.i_suc == 2
    assert reward == pytest.approx((2 - 4) / 4)
    np.testing.assert_array_equal(env.tracker.beta, [0, 0, 1, 1])
    assert stats.ee_per_ue[0] == 0.0 and stats.ee_per_ue[1] == 0.0
    assert stats.ee_per_ue[2] > 0.0 and stats.ee_per_ue[3] > 0.0


def test_reward_branch_exclusivity(toy3):
    env = UplinkEnv(toy3, 2, reward_coeff=1e-9)
    env.reset(np.random.default_rng(5))
    rng = np.random.default_rng(17)
    for _ in range(200):
        channels = rng.integers(0, 3, size=2)
        reward, _, stats = env.joint_step(_actions(env, channels, raw=float(rng.normal())))
        if stats.collision:
            assert -1.0 <= reward < 0.0
        else:
            assert reward >= 0.0


def test_success_rate_metamorphic(toy3):
    env = UplinkEnv(toy3, 2)
    env.reset(np.random.default_rng(9))
    env.joint_step(_actions(env, [0, 1]))
    eta_after_success = success_rate(env.tracker, 0)
    env.joint_step(_actions(env, [2, 2]))  # collision lowers it
    eta_after_collision = success_rate(env.tracker, 0)
    assert eta_after_collision < eta_after_success
    env.joint_step(_actions(env, [0, 1]))  # success raises it again
    assert success_rate(env.tracker, 0) > eta_after_collision


def test_wrong_action_count_rejected(toy3):
    env = UplinkEnv(toy3, 2)
    env.reset(np.random.default_rng(1))
    with pytest.raises(ValueError):
        env.joint_step(_actions(env, [0]))


# -- power mapping ----------------------------------------------------------------

def test_power_mapping_respects_range(toy3):
    p_lo = power_from_raw(-1.0, toy3)
    p_hi = power_from_raw(1.0, toy3)
    assert p_lo == pytest.approx(toy3.p_min_w, rel=1e-12)
    assert p_hi == pytest.approx(toy3.p_max_w, rel=1e-12)
    # clipping handles out-of-range samples
    assert power_from_raw(-7.3, toy3) == pytest.approx(p_lo, rel=1e-12)
    assert power_from_raw(4.1, toy3) == pytest.approx(p_hi, rel=1e-12)
    mid = power_from_raw(0.0, toy3)
    assert mid == pytest.approx(ch.dbm_to_w(12.0), rel=1e-12)
    for raw in np.linspace(-3, 3, 31):
        assert toy3.p_min_w <= power_from_raw(float(raw), toy3) <= toy3.p_max_w


def test_epoch_fingerprint_advances_with_episodes(toy3):
    env = UplinkEnv(toy3, 2, episode_len=10)
    env.reset(np.random.default_rng(2))
    assert env.epoch == 0
    for _ in range(10):
        env.joint_step(_actions(env, [0, 1]))
    assert env.epoch == 1
    obs = env.observations()
    assert obs[0, -1] == pytest.approx(1 / 10)
