"""Network and optimizer tests against finite-difference oracles."""

import json
import math

import numpy as np
import pytest

from linkswim.nets import (
    LOG_STD_INIT,
    LOG_STD_MAX,
    LOG_STD_MIN,
    Adam,
    Critic,
    GaussianPolicy,
    IncompatibleCheckpointError,
    MLP,
    actor_forward,
    adam_update,
    critic_forward,
    gaussian_log_prob,
    load_checkpoint,
    orthogonal,
    sample_action,
    save_checkpoint,
)


def numeric_grad(f, x, h=1e-6):
    """Central finite differences of scalar f at array x."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-12)


# ------------------------------------------------------------ init


def test_orthogonal_columns_orthonormal():
    rng = np.random.default_rng(5)
    w = orthogonal(64, 4, 1.0, rng)
    gram = w.T @ w
    assert np.abs(gram - np.eye(4)).max() < 1e-12


def test_orthogonal_rows_orthonormal_when_wide():
    rng = np.random.default_rng(6)
    w = orthogonal(2, 64, 1.0, rng)
    gram = w @ w.T
    assert np.abs(gram - np.eye(2)).max() < 1e-12


def test_orthogonal_gain_scales():
    rng = np.random.default_rng(7)
    w = orthogonal(8, 8, 0.01, rng)
    s = np.linalg.svd(w, compute_uv=False)
    assert np.allclose(s, 0.01, atol=1e-14)


def test_orthogonal_deterministic_per_seed():
    a = orthogonal(16, 4, 1.0, np.random.default_rng(9))
    b = orthogonal(16, 4, 1.0, np.random.default_rng(9))
    assert np.array_equal(a, b)


# ------------------------------------------------------------ forward


def test_forward_matches_manual_composition():
    rng = np.random.default_rng(11)
    net = MLP([4, 8, 8, 2], rng)
    x = rng.standard_normal(4)
    h1 = np.tanh(net.W[0] @ x + net.b[0])
    h2 = np.tanh(net.W[1] @ h1 + net.b[1])
    want = net.W[2] @ h2 + net.b[2]
    got, _ = net.forward(x)
    assert np.abs(got[0] - want).max() < 1e-13


def test_forward_batch_matches_rowwise():
    rng = np.random.default_rng(12)
    net = MLP([4, 16, 16, 2], rng)
    X = rng.standard_normal((7, 4))
    batch, _ = net.forward(X)
    rows = np.stack([net.forward(x)[0][0] for x in X])
    assert np.abs(batch - rows).max() < 1e-13


def test_policy_output_small_at_init():
    # out_gain 0.01 keeps initial action means near zero so early
    # exploration is driven by the sampling noise, not by the net.
    policy = GaussianPolicy(np.random.default_rng(13))
    obs = np.random.default_rng(14).uniform(-1, 1, size=(100, 4))
    assert np.abs(policy.mean(obs)).max() < 0.05
    assert np.allclose(policy.std(), 0.5)
    assert math.isclose(policy.log_std[0], LOG_STD_INIT)


def test_critic_scalar_value():
    critic = Critic(np.random.default_rng(15))
    v = critic_forward(critic, np.array([0.1, 0.2, 0.3, 0.4]))
    assert isinstance(v, float) and np.isfinite(v)


def test_actor_forward_shapes():
    policy = GaussianPolicy(np.random.default_rng(16))
    mean, std = actor_forward(policy, np.array([1.0, 0.0, 0.3, -0.3]))
    assert mean.shape == (2,) and std.shape == (2,)


# ------------------------------------------------------------ backward


def check_mlp_gradients(widths, seed, tol):
    rng = np.random.default_rng(seed)
    net = MLP(widths, rng)
    X = rng.standard_normal((5, widths[0]))
    # arbitrary smooth scalar loss: weighted sum of squared outputs
    coef = rng.standard_normal(widths[-1])

    def loss():
        out, _ = net.forward(X)
        return float(np.sum((out * coef) ** 2))

    out, acts = net.forward(X)
    dout = 2.0 * out * coef * coef
    dW, db = net.backward(acts, dout)
    for i in range(len(net.W)):
        gw = numeric_grad(loss, net.W[i])
        gb = numeric_grad(loss, net.b[i])
        assert rel_err(dW[i], gw) < tol, f"W[{i}]"
        assert rel_err(db[i], gb) < tol, f"b[{i}]"


def test_gradients_tiny_net():
    check_mlp_gradients([3, 5, 4, 2], seed=21, tol=1e-6)


def test_gradients_policy_shape_net():
    check_mlp_gradients([4, 64, 64, 2], seed=22, tol=1e-5)


def test_gradients_critic_shape_net():
    check_mlp_gradients([4, 64, 64, 1], seed=23, tol=1e-5)


def test_backward_rejects_wrong_width():
    net = MLP([3, 4, 2], np.random.default_rng(24))
    _, acts = net.forward(np.zeros(3))
    with pytest.raises(ValueError):
        net.backward(acts, np.zeros((1, 3)))


def test_log_prob_gradient_through_network():
    # d logp / d params via the chain rule used in the learner:
    # dlogp/dmean = (raw - mean) / std^2, fed into MLP.backward.
    rng = np.random.default_rng(25)
    policy = GaussianPolicy(rng, hidden=(8, 8))
    obs = rng.standard_normal(4)
    raw = np.array([0.3, -0.7])

    def logp():
        mean = policy.mean(obs)[0]
        return gaussian_log_prob(raw, mean, policy.std())

    out, acts = policy.net.forward(obs)
    std = policy.std()
    dmean = (raw - out[0]) / (std * std)
    dW, db = policy.net.backward(acts, dmean[None, :])
    for i in range(len(policy.net.W)):
        assert rel_err(dW[i], numeric_grad(logp, policy.net.W[i])) < 1e-6
        assert rel_err(db[i], numeric_grad(logp, policy.net.b[i])) < 1e-6
    # and through log_std: dlogp/dlog_std = z^2 - 1
    z = (raw - out[0]) / std
    assert rel_err(z * z - 1.0, numeric_grad(logp, policy.log_std)) < 1e-6


# ------------------------------------------------------------ sampling


def test_sample_matches_distribution():
    rng = np.random.default_rng(31)
    mean = np.array([0.2, -0.4])
    std = np.array([0.5, 0.3])
    n = 100_000
    draws = np.empty((n, 2))
    for i in range(n):
        a, _ = sample_action(mean, std, rng, rate_cap=100.0)
        draws[i] = (a.alpha1_dot, a.alpha2_dot)
    se_mean = std / math.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se_mean)
    se_std = std / math.sqrt(2 * (n - 1))
    assert np.all(np.abs(draws.std(axis=0, ddof=1) - std) < 4 * se_std)


def test_sample_clamps_to_rate_cap():
    rng = np.random.default_rng(32)
    mean = np.array([10.0, -10.0])
    a, logp = sample_action(mean, np.array([0.1, 0.1]), rng, rate_cap=1.5)
    assert a.alpha1_dot == 1.5 and a.alpha2_dot == -1.5
    # log-density is of the raw sample near the mean, not of the clamp
    assert logp > gaussian_log_prob(np.array([1.5, -1.5]), mean,
                                    np.array([0.1, 0.1]))


def test_log_prob_at_mean():
    std = np.array([0.5, 0.25])
    want = -sum(math.log(s * math.sqrt(2 * math.pi)) for s in std)
    got = gaussian_log_prob(np.array([1.0, 2.0]), np.array([1.0, 2.0]), std)
    assert math.isclose(got, want, rel_tol=1e-12)


def test_entropy_closed_form():
    policy = GaussianPolicy(np.random.default_rng(33))
    policy.log_std[:] = [math.log(0.5), math.log(0.2)]
    want = sum(0.5 * math.log(2 * math.pi * math.e * s ** 2)
               for s in (0.5, 0.2))
    assert math.isclose(policy.entropy(), want, rel_tol=1e-12)


def test_log_std_clamp():
    policy = GaussianPolicy(np.random.default_rng(34))
    policy.log_std[:] = [-9.0, 9.0]
    policy.clamp_log_std()
    assert policy.log_std[0] == LOG_STD_MIN and policy.log_std[1] == LOG_STD_MAX


def test_deterministic_act_clamped():
    policy = GaussianPolicy(np.random.default_rng(35))
    policy.net.b[-1][:] = [5.0, -5.0]
    a = policy.act(np.zeros(4))
    assert a.alpha1_dot == policy.rate_cap and a.alpha2_dot == -policy.rate_cap


# ------------------------------------------------------------ Adam


def test_adam_zero_gradient_no_move():
    p = np.ones((3, 2))
    opt = Adam([p], lr=0.1)
    opt.step([np.zeros_like(p)])
    assert np.array_equal(p, np.ones((3, 2)))


def test_adam_first_step_magnitude():
    # with bias correction the first step is lr * g / (|g| + eps)
    p = np.zeros(4)
    opt = Adam([p], lr=1e-3)
    g = np.array([3.0, -0.5, 1e-6, 0.0])
    opt.step([g])
    expect = -1e-3 * g / (np.abs(g) + 1e-8)
    assert np.abs(p - expect).max() < 1e-12


def test_adam_quadratic_bowl_converges():
    p = np.array([5.0, -3.0])
    opt = Adam([p], lr=0.05)
    for _ in range(1000):
        opt.step([2.0 * p])
    assert np.abs(p).max() < 1e-4


def test_adam_update_wrapper_checks_identity():
    p = np.zeros(2)
    opt = Adam([p])
    adam_update([p], [np.ones(2)], opt)
    with pytest.raises(ValueError):
        adam_update([np.zeros(2)], [np.ones(2)], opt)


def test_adam_shape_mismatch():
    p = np.zeros((2, 2))
    opt = Adam([p])
    with pytest.raises(ValueError):
        opt.step([np.zeros(3)])


# ------------------------------------------------------------ checkpoints


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(41)
    policy = GaussianPolicy(rng)
    critic = Critic(rng)
    policy.log_std[:] = [math.log(0.37), -1.234567890123456]
    a_opt = Adam(policy.params(), lr=3e-4)
    c_opt = Adam(critic.params(), lr=3e-4)
    # a few optimizer steps so moment buffers are nontrivial
    for _ in range(3):
        a_opt.step([0.01 * rng.standard_normal(p.shape) for p in policy.params()])
        c_opt.step([0.01 * rng.standard_normal(p.shape) for p in critic.params()])
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, policy, critic, a_opt, c_opt,
                    seed_lineage={"master_seed": 7, "episodes_done": 120},
                    extras={"mean_speed": 0.0123})
    p2, c2, doc = load_checkpoint(path)
    for a, b in zip(policy.params(), p2.params()):
        assert np.array_equal(a, b)
    for a, b in zip(critic.params(), c2.params()):
        assert np.array_equal(a, b)
    assert doc["extras"]["mean_speed"] == 0.0123
    assert doc["seed_lineage"]["episodes_done"] == 120
    a2 = Adam(p2.params(), lr=3e-4)
    a2.load_state(doc["adam"]["actor"])
    assert a2.t == 3
    for m1, m2 in zip(a_opt.m, a2.m):
        assert np.array_equal(m1, m2)
    # save again: identical document implies repr round-trip is exact
    path2 = tmp_path / "ckpt2.json"
    save_checkpoint(path2, p2, c2, a2, None,
                    seed_lineage=doc["seed_lineage"], extras=doc["extras"])
    d1 = json.loads(path.read_text())
    d2 = json.loads(path2.read_text())
    assert d1["actor"] == d2["actor"] and d1["critic"] == d2["critic"]
    assert d1["log_std"] == d2["log_std"]
    assert d1["adam"]["actor"] == d2["adam"]["actor"]


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("not json at all {")
    with pytest.raises(IncompatibleCheckpointError):
        load_checkpoint(path)
    path.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(IncompatibleCheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_wrong_shape(tmp_path):
    rng = np.random.default_rng(42)
    policy = GaussianPolicy(rng, hidden=(8, 8))
    critic = Critic(rng, hidden=(8, 8))
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, policy, critic)
    doc = json.loads(path.read_text())
    doc["actor"]["W"][0] = [[0.0] * 3] * 8  # wrong input width
    path.write_text(json.dumps(doc))
    with pytest.raises(IncompatibleCheckpointError):
        load_checkpoint(path)
