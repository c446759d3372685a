import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsdqn import autograd as ag
from rsdqn.agents import greedy_action
from rsdqn.attacks import AttackSpec, fgsm, input_gradient, perturb_for_agent, pgd
from rsdqn.errors import ConfigError
from rsdqn.nn import Adam

from conftest import make_net

DIM = 8


def ce(net, states, labels):
    with ag.no_grad():
        q = net.forward(states, "eval").q.data
    z = q - q.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return -logp[np.arange(len(labels)), labels]


@pytest.fixture(scope="module")
def toy_policy():
    """Small dueling net trained to imitate a fixed linear rule on [0, 1]^8."""
    rng = np.random.default_rng(0)
    rule = rng.normal(size=(3, DIM))
    net = make_net(1, input_dim=DIM, hidden=(32,), stream_hidden=16)
    opt = Adam(net.params, 3e-3)
    for _ in range(400):
        x = rng.random((64, DIM))
        ag.cross_entropy(net.forward(x, "eval").q, np.argmax(x @ rule.T, axis=1)).backward()
        opt.step()
    states = np.random.default_rng(1).uniform(0.05, 0.95, size=(200, DIM))
    return net, states


def test_spec_validation_and_labels():
    assert AttackSpec("pgd", 0.004, 4).label == "TestPGD(k=4)"
    assert AttackSpec("training_pgd", 0.004, 1).label == "TrainingPGD(k=1)"
    assert AttackSpec("training_pgd").sign == -1 and AttackSpec("pgd").sign == 1
    assert AttackSpec().epsilon == 0.004
    for bad in (dict(kind="cw"), dict(kind="pgd", epsilon=-1), dict(kind="pgd", steps=0)):
        with pytest.raises(ConfigError):
            AttackSpec(**bad)


def test_zero_radius_is_identity(rng):
    net = make_net(input_dim=DIM)
    s = rng.random(DIM)
    np.testing.assert_array_equal(fgsm(net, s, 0, 0.0), s)
    np.testing.assert_array_equal(pgd(net, s, 0, 0.0, 4), s)


def test_fgsm_one_layer_hand_gradient():
    # logits [w.x, 0] with w > 0 and target 0: dCE/dx = -(1 - p0) w < 0, so x moves down
    net = make_net(input_dim=3, n_actions=2, hidden=(3,), stream_hidden=2, head="plain")
    for layer in net.layers:
        layer.w_mu.data[...] = 0.0
        layer.b_mu.data[...] = 0.0
    net.trunk[0].w_mu.data[...] = np.eye(3)
    net.adv_stream[0].w_mu.data[0] = [1.0, 2.0, 0.5]
    net.adv_stream[1].w_mu.data[0, 0] = 1.0
    x = np.array([0.5, 0.4, 0.6])
    g = input_gradient(net, x, 0, "eval")
    assert np.all(g < 0)
    np.testing.assert_allclose(fgsm(net, x, 0, 0.01, mode="eval"), x - 0.01)


def test_input_gradient_leaves_parameter_gradients_untouched(rng):
    net = make_net(input_dim=DIM)
    input_gradient(net, rng.random(DIM), 1)
    assert np.all(net.params.flat_grad == 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.3), st.integers(1, 6), st.sampled_from([1, -1]))
def test_ball_containment(seed, eps, k, sign):
    r = np.random.default_rng(seed)
    net = make_net(seed % 50, input_dim=DIM)
    s = r.random(DIM)
    s[:2] = [0.0, 1.0]
    x = pgd(net, s, int(r.integers(3)), eps, k, sign, "eval")
    assert np.max(np.abs(x - s)) <= eps + 1e-12
    assert np.all((x >= 0) & (x <= 1))


def test_pgd_k1_equals_fgsm(rng):
    net = make_net(input_dim=DIM)
    s = rng.random(DIM)
    np.testing.assert_array_equal(pgd(net, s, 2, 0.05, 1), fgsm(net, s, 2, 0.05))


def test_pgd_default_radius(rng):
    net = make_net(input_dim=DIM)
    s = rng.random(DIM)
    x = perturb_for_agent(AttackSpec("pgd", 0.004, 4), net, s)
    assert np.max(np.abs(x - s)) <= 0.004 + 1e-15


def test_sign_duality(rng):
    net = make_net(input_dim=DIM)
    s = rng.uniform(0.2, 0.8, DIM)
    g = input_gradient(net, s, 1)
    assert np.all(g != 0)
    up = fgsm(net, s, 1, 0.01, sign=1)
    down = fgsm(net, s, 1, 0.01, sign=-1)
    np.testing.assert_allclose(down, 2 * s - up, atol=1e-15)


def test_none_is_identity(rng):
    net = make_net(input_dim=DIM)
    s = rng.random(DIM)
    assert perturb_for_agent(AttackSpec("none"), net, s) is not None
    np.testing.assert_array_equal(perturb_for_agent(AttackSpec("none"), net, s), s)


def test_attack_raises_loss_of_greedy_action(toy_policy):
    net, states = toy_policy
    labels = greedy_action(net, states)
    after = np.array([pgd(net, s, a, 0.02, 4, 1, "eval") for s, a in zip(states, labels)])
    assert np.mean(ce(net, after, labels) >= ce(net, states, labels)) >= 0.95


def test_training_pgd_reinforces_chosen_action(toy_policy):
    net, states = toy_policy
    labels = greedy_action(net, states)
    spec = AttackSpec("training_pgd", 0.02, 1)
    after = np.array([perturb_for_agent(spec, net, s, "eval") for s in states])
    assert np.mean(ce(net, after, labels) <= ce(net, states, labels)) >= 0.95


def test_pgd_dominates_fgsm(toy_policy):
    net, states = toy_policy
    labels = greedy_action(net, states)
    k4 = np.array([pgd(net, s, a, 0.05, 4, 1, "eval") for s, a in zip(states, labels)])
    k1 = np.array([fgsm(net, s, a, 0.05, 1, "eval") for s, a in zip(states, labels)])
    assert np.mean(ce(net, k4, labels) >= ce(net, k1, labels) - 1e-12) >= 0.8


def test_attack_does_not_mutate_network(rng):
    net = make_net(input_dim=DIM, noisy=True)
    net.sample_noise(rng)
    before = net.params.flat.copy()
    perturb_for_agent(AttackSpec("pgd", 0.1, 5), net, rng.random(DIM))
    np.testing.assert_array_equal(net.params.flat, before)
