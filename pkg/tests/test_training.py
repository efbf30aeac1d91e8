import numpy as np
import pytest

import zsclab
from zsclab.core import sample_episode
from zsclab.envs import build_env, lever_coordination, reference_policies
from zsclab.otherplay import apply_profile, op_value
from zsclab.symmetry import enumerate_automorphisms
from zsclab.training import (
    PolicyParams,
    TrainConfig,
    TrainingDiverged,
    exact_op_grad,
    exact_op_value_of_params,
    exhaustive_batch,
    loss_and_grad,
    resolve_share_weights,
    return_term_grad,
    train_op,
)

PIPELINE_TSLG = dict(n_steps=31_250, batch_episodes=16, entropy_coeff=0.3)


def random_params(d, shared, seed=0, scale=0.5):
    params = PolicyParams.zeros(d, shared)
    rng = np.random.default_rng(seed)
    params.logits[:] = rng.normal(0.0, scale, params.logits.size)
    return params


def sample_batch(d, params, n, seed=0):
    rng = np.random.default_rng(seed)
    auts = enumerate_automorphisms(d)
    pol = params.to_policy()
    batch = []
    for _ in range(n):
        prof = [auts[int(rng.integers(0, len(auts)))] for _ in range(d.n_agents)]
        batch.append((prof, sample_episode(d, apply_profile(prof, pol), rng)))
    return batch


def test_share_weights_resolution():
    assert resolve_share_weights(build_env("two_stage_lever"), TrainConfig(n_steps=1))
    assert not resolve_share_weights(build_env("asymmetric_lever"), TrainConfig(n_steps=1))
    cfg = TrainConfig(n_steps=1, share_weights=False)
    assert not resolve_share_weights(build_env("two_stage_lever"), cfg)


def test_loss_grad_finite_differences():
    d = build_env("two_stage_lever")
    for shared in (False, True):
        params = random_params(d, shared, seed=1)
        batch = sample_batch(d, params, 8, seed=2)
        _, grad = loss_and_grad(d, params, batch, entropy_coeff=0.5)
        h = 1e-5
        for idx in range(params.logits.size):
            params.logits[idx] += h
            up, _ = loss_and_grad(d, params, batch, entropy_coeff=0.5)
            params.logits[idx] -= 2 * h
            dn, _ = loss_and_grad(d, params, batch, entropy_coeff=0.5)
            params.logits[idx] += h
            fd = (up - dn) / (2 * h)
            assert abs(fd - grad[idx]) <= 1e-6 * max(1.0, abs(fd))


def test_zero_reward_env_gradient_vanishes_at_uniform():
    d = build_env("two_stage_lever")
    zero = zsclab.DecPomdp(
        d.n_agents, d.n_states, d.n_actions, d.n_observations,
        d.transition, d.observation, np.zeros_like(d.reward), d.initial, d.horizon,
    )
    params = PolicyParams.zeros(zero, shared=False)  # uniform policy
    batch = sample_batch(zero, params, 16, seed=3)
    _, grad = loss_and_grad(zero, params, batch, entropy_coeff=0.7)
    assert np.allclose(grad, 0.0, atol=1e-12)


def test_reinforce_identity_single_episode():
    mp = build_env("matching_pennies")
    params = random_params(mp, shared=False, seed=4)
    batch = sample_batch(mp, params, 1, seed=5)
    profile, tau = batch[0]
    grad = return_term_grad(mp, params, batch)
    # single step, alpha = 0: gradient is -scale * G_0 * grad-log-likelihood
    scale = 1.0 / (1 * 1 * mp.n_agents)
    manual = np.zeros_like(params.logits)
    pol = params.to_policy()
    g0 = tau.total_reward
    offsets = params.agent_offsets()
    for i in range(mp.n_agents):
        g_inv = profile[i].invert()
        j = g_inv.agent_perm[i]
        b = g_inv.action_maps[i][tau.actions[0][i]]
        z = params.table(j)[0]
        p = np.exp(z - z.max())
        p /= p.sum()
        delta = np.zeros_like(p)
        delta[b] = 1.0
        manual[int(offsets[j]) : int(offsets[j]) + 2] += -scale * g0 * (delta - p)
    assert np.allclose(grad, manual, atol=1e-12)


@pytest.mark.parametrize("shared", [False, True])
def test_mc_gradient_expectation_matches_exact(shared):
    d = build_env("two_stage_lever")
    params = random_params(d, shared, seed=6)
    expect = np.zeros_like(params.logits)
    for profile, hist, prob in exhaustive_batch(d, params):
        expect += prob * return_term_grad(d, params, [(profile, hist)])
    scale = 1.0 / ((d.horizon + 1) * d.n_agents)
    target = -scale * exact_op_grad(d, params)
    assert np.max(np.abs(expect - target)) < 1e-9


def test_exact_op_grad_finite_difference():
    d = build_env("matching_pennies")
    params = random_params(d, shared=False, seed=7)
    grad = exact_op_grad(d, params)
    h = 1e-6
    for idx in range(params.logits.size):
        params.logits[idx] += h
        up = exact_op_value_of_params(d, params)
        params.logits[idx] -= 2 * h
        dn = exact_op_value_of_params(d, params)
        params.logits[idx] += h
        fd = (up - dn) / (2 * h)
        assert abs(fd - grad[idx]) <= 1e-6 * max(1.0, abs(fd))


def test_shared_grad_sums_tied_slots():
    d = build_env("two_stage_lever")
    shared = random_params(d, shared=True, seed=8)
    unshared = PolicyParams.zeros(d, shared=False)
    n = shared.logits.size
    unshared.logits[:n] = shared.logits
    unshared.logits[n:] = shared.logits
    g_shared = exact_op_grad(d, shared)
    g_unshared = exact_op_grad(d, unshared)
    assert np.allclose(g_shared, g_unshared[:n] + g_unshared[n:], atol=1e-12)


def test_training_determinism():
    d = build_env("two_stage_lever")
    cfg = TrainConfig(n_steps=200, batch_episodes=8, seed=123)
    a = train_op(d, cfg)
    b = train_op(d, cfg)
    for ta, tb in zip(a.policy.tables, b.policy.tables):
        assert np.array_equal(ta, tb)
    c = train_op(d, TrainConfig(n_steps=200, batch_episodes=8, seed=124))
    assert any(
        not np.array_equal(ta, tc) for ta, tc in zip(a.policy.tables, c.policy.tables)
    )


def test_monotone_trend_smoke():
    d = build_env("two_stage_lever")
    cfg = TrainConfig(n_steps=3000, batch_episodes=16, entropy_coeff=0.3, seed=0, eval_every=100)
    res = train_op(d, cfg)
    points = [(p.update, p.exact_op_value) for p in res.curve if p.exact_op_value is not None]
    for idx in range(len(points)):
        for jump in range(1, 11):
            if idx + jump < len(points):
                assert points[idx + jump][1] >= points[idx][1] - 0.02


def test_divergence_guard():
    d = build_env("two_stage_lever")
    cfg = TrainConfig(
        n_steps=50, batch_episodes=8, optimizer="sgd", learning_rate=1e308, seed=0
    )
    with pytest.raises(TrainingDiverged):
        train_op(d, cfg)


def test_training_convergence_two_stage():
    d = build_env("two_stage_lever")
    res = train_op(d, TrainConfig(seed=0, **PIPELINE_TSLG))
    finals = [p.exact_op_value for p in res.curve if p.exact_op_value is not None]
    # optimum is 0.5; the entropy-regularized stationary point at coeff 0.3
    # sits at ~0.493 (at the 0.5 default it caps near 0.459)
    assert finals[-1] >= 0.48
    assert res.env_steps <= 1_000_000
    half = reference_policies("two_stage_lever")
    assert zsclab.policies_equivalent(d, res.policy, half["repeat"], tol=0.2) or (
        zsclab.policies_equivalent(d, res.policy, half["switch"], tol=0.2)
    )


def test_training_convergence_two_stage_paper_default_entropy():
    d = build_env("two_stage_lever")
    res = train_op(d, TrainConfig(n_steps=15_625, batch_episodes=32, seed=1))
    finals = [p.exact_op_value for p in res.curve if p.exact_op_value is not None]
    assert finals[-1] >= 0.44  # the 0.5-entropy stationary point is ~0.459


def test_training_convergence_asymmetric_vs_oracle():
    scipy_opt = pytest.importorskip("scipy.optimize")
    d = build_env("asymmetric_lever")
    params = PolicyParams.zeros(d, shared=False)

    def neg(x):
        params.logits[:] = x
        return -exact_op_value_of_params(d, params), -exact_op_grad(d, params)

    best = -np.inf
    for seed in range(3):
        rng = np.random.default_rng(seed)
        res = scipy_opt.minimize(
            neg, rng.normal(0, 1, params.logits.size), jac=True, method="L-BFGS-B"
        )
        best = max(best, -res.fun)
    assert abs(best - 2.0) < 1e-3  # analytic optimum confirmed by direct search

    trained = train_op(
        d, TrainConfig(n_steps=20_833, batch_episodes=16, entropy_coeff=0.2, seed=0)
    )
    finals = [p.exact_op_value for p in trained.curve if p.exact_op_value is not None]
    assert best - finals[-1] <= 0.05


def test_training_lever_objective_prefers_unique_lever():
    """Under random permutations only the odd-reward lever supports reliable
    coordination: its deterministic policy dominates every other profile-proof
    choice. (Gradient runs from a uniform start settle on the symmetric-lever
    mixture, a local optimum, so the claim is checked on the objective.)"""
    d = lever_coordination(4)
    L = 4
    unique = zsclab.TabularPolicy.from_tables(
        d, tuple(np.eye(L)[[L - 1]] for _ in range(2))
    )
    assert abs(op_value(d, unique) - 0.9) < 1e-12
    others = []
    for lever in range(L - 1):
        det = zsclab.TabularPolicy.from_tables(d, tuple(np.eye(L)[[lever]] for _ in range(2)))
        others.append(op_value(d, det))
    assert max(others) < 0.9
    uniform_good = np.zeros((1, L))
    uniform_good[0, : L - 1] = 1.0 / (L - 1)
    mix = zsclab.TabularPolicy.from_tables(d, (uniform_good, uniform_good.copy()))
    assert op_value(d, mix) < 0.9

    res = train_op(d, TrainConfig(n_steps=4000, batch_episodes=16, entropy_coeff=0.0, seed=0))
    finals = [p.exact_op_value for p in res.curve if p.exact_op_value is not None]
    assert finals[-1] >= 0.25  # reaches an invariant local optimum
