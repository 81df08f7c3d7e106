import numpy as np
import pytest

from mcgsim.errors import NumericalError
from mcgsim.nn import (
    Mlp,
    RmsPropState,
    backward,
    backward_batch,
    clone_weights,
    copy_weights_into,
    forward,
    load_weights,
    rmsprop_step,
    save_weights,
)


def hand_net():
    return Mlp(
        [np.array([[1.0], [-1.0]]), np.array([[2.0]])],
        [np.array([0.5]), np.array([-1.0])],
    )


def loss_of(net, states, actions, targets):
    q = forward(net, states)
    return 0.5 * np.mean((q[np.arange(len(actions)), actions] - targets) ** 2)


def test_hand_computed_forward():
    net = hand_net()
    assert forward(net, np.array([3.0, 1.0]))[0] == pytest.approx(4.0)
    assert forward(net, np.array([0.0, 3.0]))[0] == pytest.approx(-1.0)
    batch = forward(net, np.array([[3.0, 1.0], [0.0, 3.0]]))
    assert batch.shape == (2, 1)
    assert batch[:, 0] == pytest.approx([4.0, -1.0])


def test_hand_computed_gradient():
    net = hand_net()
    (dw0, db0), (dw1, db1) = backward(net, np.array([3.0, 1.0]), 0, 3.0)
    # error 1, hidden activation 2.5, path weight 2
    assert dw1 == pytest.approx(np.array([[2.5]]))
    assert db1 == pytest.approx([1.0])
    assert dw0 == pytest.approx(np.array([[6.0], [2.0]]))
    assert db0 == pytest.approx([2.0])


def test_dead_relu_blocks_gradient():
    (dw0, db0), (dw1, db1) = backward(hand_net(), np.array([0.0, 3.0]), 0, 0.0)
    assert np.all(dw0 == 0) and np.all(db0 == 0)
    assert dw1 == pytest.approx(np.array([[0.0]]))
    assert db1 == pytest.approx([-1.0])


def test_initialize_shapes_and_limits(rng):
    net = Mlp.initialize([10, 128, 128, 7], rng)
    assert net.sizes == [10, 128, 128, 7]
    assert (net.d_in, net.d_out) == (10, 7)
    assert np.abs(net.weights[0]).max() <= np.sqrt(6.0 / 10)
    assert np.abs(net.weights[1]).max() <= np.sqrt(6.0 / 128)
    assert all(np.all(b == 0) for b in net.biases)
    with pytest.raises(ValueError):
        Mlp.initialize([4], rng)


def test_forward_rejects_wrong_width(rng):
    net = Mlp.initialize([3, 4, 2], rng)
    with pytest.raises(ValueError):
        forward(net, np.zeros(4))


def test_gradients_match_finite_differences(rng):
    h = 1e-6
    for _ in range(20):
        net = Mlp.initialize([4, 6, 5, 3], rng)
        for b in net.biases:
            b[...] = rng.normal(0.0, 0.1, size=b.shape)
        states = rng.normal(size=(8, 4))
        actions = rng.integers(0, 3, size=8)
        targets = rng.normal(size=8)
        grads, loss = backward_batch(net, states, actions, targets)
        assert loss == pytest.approx(loss_of(net, states, actions, targets))
        flat = [g for pair in grads for g in pair]
        for param, grad in zip(net.parameters(), flat):
            numeric = np.zeros_like(param)
            for idx in np.ndindex(param.shape):
                keep = param[idx]
                param[idx] = keep + h
                up = loss_of(net, states, actions, targets)
                param[idx] = keep - h
                down = loss_of(net, states, actions, targets)
                param[idx] = keep
                numeric[idx] = (up - down) / (2 * h)
            np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-7)


def test_exact_targets_give_zero_gradient(rng):
    net = Mlp.initialize([5, 8, 4], rng)
    states = rng.normal(size=(6, 5))
    actions = rng.integers(0, 4, size=6)
    targets = forward(net, states)[np.arange(6), actions]
    grads, loss = backward_batch(net, states, actions, targets)
    assert loss == pytest.approx(0.0)
    assert all(np.allclose(g, 0.0) for pair in grads for g in pair)


def test_backward_rejects_bad_actions(rng):
    net = Mlp.initialize([2, 3, 2], rng)
    with pytest.raises(ValueError):
        backward_batch(net, np.zeros((1, 2)), np.array([2]), np.array([0.0]))


def test_first_rmsprop_step_is_bounded(rng):
    net = Mlp.initialize([4, 8, 3], rng)
    before = clone_weights(net)
    opt = RmsPropState(learning_rate=1e-3, decay=0.95)
    grads, _ = backward_batch(net, rng.normal(size=(4, 4)), rng.integers(0, 3, size=4), rng.normal(size=4))
    rmsprop_step(opt, net, grads)
    bound = 1e-3 / np.sqrt(1 - 0.95)
    for new, old in zip(net.parameters(), before.parameters()):
        assert np.abs(new - old).max() <= bound * (1 + 1e-9)


def test_constant_gradient_steps_approach_learning_rate():
    net = Mlp([np.zeros((2, 1))], [np.zeros(1)])
    opt = RmsPropState(learning_rate=1e-3, decay=0.95)
    grads = [(np.full((2, 1), 0.3), np.full(1, -0.3))]
    for _ in range(500):
        before = net.weights[0].copy()
        rmsprop_step(opt, net, grads)
    step = before - net.weights[0]
    assert step == pytest.approx(np.full((2, 1), 1e-3), rel=1e-3)
    assert net.biases[0][0] > 0


def test_rmsprop_descends_on_a_fixed_batch(rng):
    net = Mlp.initialize([3, 16, 2], rng)
    states = rng.normal(size=(16, 3))
    actions = rng.integers(0, 2, size=16)
    targets = rng.normal(size=16)
    opt = RmsPropState(learning_rate=1e-3)
    start = loss_of(net, states, actions, targets)
    for _ in range(300):
        grads, _ = backward_batch(net, states, actions, targets)
        rmsprop_step(opt, net, grads)
    assert loss_of(net, states, actions, targets) < start


def test_rmsprop_refuses_non_finite_gradients(rng):
    net = Mlp.initialize([2, 3, 2], rng)
    grads = [(np.full_like(w, np.nan), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
    with pytest.raises(NumericalError):
        rmsprop_step(RmsPropState(), net, grads)


def test_rmsprop_checks_shapes_and_rate(rng):
    net = Mlp.initialize([2, 3, 2], rng)
    with pytest.raises(ValueError):
        rmsprop_step(RmsPropState(), net, [(np.zeros((2, 3)), np.zeros(3))])
    with pytest.raises(ValueError):
        RmsPropState(learning_rate=0.0)


def test_clone_and_copy_are_independent(rng):
    net = Mlp.initialize([3, 4, 2], rng)
    twin = clone_weights(net)
    net.weights[0][0, 0] += 1.0
    assert twin.weights[0][0, 0] != net.weights[0][0, 0]
    copy_weights_into(twin, net)
    assert all(np.array_equal(a, b) for a, b in zip(twin.parameters(), net.parameters()))
    net.biases[1][0] = 42.0
    assert twin.biases[1][0] != 42.0


def test_save_and_load_round_trip(tmp_path, rng):
    net = Mlp.initialize([6, 5, 4], rng)
    opt = RmsPropState(learning_rate=5e-4)
    grads, _ = backward_batch(net, rng.normal(size=(3, 6)), np.array([0, 1, 3]), np.zeros(3))
    rmsprop_step(opt, net, grads)
    path = tmp_path / "online.npz"
    save_weights(path, net, opt)

    loaded, loaded_opt = load_weights(path, [6, 5, 4])
    x = rng.normal(size=(5, 6))
    assert np.array_equal(forward(loaded, x), forward(net, x))
    assert loaded_opt.learning_rate == 5e-4
    assert all(np.array_equal(a, b) for a, b in zip(loaded_opt.accumulators, opt.accumulators))


def test_load_without_optimizer_state(tmp_path, rng):
    net = Mlp.initialize([2, 3, 2], rng)
    save_weights(tmp_path / "target.npz", net)
    loaded, opt = load_weights(tmp_path / "target.npz")
    assert opt is None
    assert loaded.sizes == [2, 3, 2]


def test_load_rejects_other_topology(tmp_path, rng):
    save_weights(tmp_path / "net.npz", Mlp.initialize([2, 3, 2], rng))
    with pytest.raises(ValueError):
        load_weights(tmp_path / "net.npz", [2, 4, 2])
