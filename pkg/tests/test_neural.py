import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crahnsim import kernels
from crahnsim.errors import DimensionMismatch, EmptyDataset, IoError
from crahnsim.neural import Dataset, Mlp, TrainConfig, forward, gradient, mse, sample_loss, train

XOR = Dataset([[0, 0], [0, 1], [1, 0], [1, 1]], [[0], [1], [1], [0]])


def fd_gradient(net, x, t, h=1e-5):
    theta = net.params()
    out = np.empty_like(theta)
    for k in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        out[k] = (sample_loss(net.with_params(up), x, t) - sample_loss(net.with_params(dn), x, t)) / (2 * h)
    return out


def test_zero_net_outputs_half():
    net = Mlp.zeros(4, 3, 2)
    assert np.array_equal(forward(net, [0.3, -1.0, 7.0, 0.0]), [0.5, 0.5])


def test_one_one_one_hand_value():
    net = Mlp([[1.0]], [0.0], [[1.0]], [0.0])
    # sigmoid(sigmoid(0)) computed independently
    expected = 1.0 / (1.0 + math.exp(-0.5))
    assert forward(net, [0.0])[0] == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(0.62246, abs=1e-5)


def test_wrong_input_length():
    net = Mlp.zeros(3, 2, 1)
    with pytest.raises(DimensionMismatch):
        forward(net, [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        net.forward_batch(np.zeros((4, 2)))


def test_inconsistent_shapes_rejected():
    with pytest.raises(DimensionMismatch):
        Mlp(np.zeros((2, 3)), np.zeros(3), np.zeros((1, 2)), np.zeros(1))


def test_gradient_zero_when_output_hits_target():
    net = Mlp.random(3, 4, 2, np.random.default_rng(0))
    x = [0.1, 0.5, 0.9]
    g = gradient(net, x, forward(net, x))
    assert np.all(g.flat() == 0.0)


def test_gradient_zero_for_zero_net_at_half():
    g = gradient(Mlp.zeros(3, 5, 2), [0.2, 0.4, 0.6], [0.5, 0.5])
    assert np.all(g.flat() == 0.0)


def test_gradient_matches_finite_difference_3_5_2():
    rng = np.random.default_rng(3)
    net = Mlp.random(3, 5, 2, rng, scale=1.0)
    x, t = rng.random(3), rng.random(2)
    an, fd = gradient(net, x, t).flat(), fd_gradient(net, x, t)
    rel = np.abs(an - fd) / np.maximum(np.maximum(np.abs(an), np.abs(fd)), 1e-8)
    assert np.all(rel < 1e-4)


def test_gradient_check_100_random_pairs():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        ni, nh, no = rng.integers(1, 6, 3)
        net = Mlp.random(ni, nh, no, rng, scale=1.0)
        x, t = rng.uniform(-1, 1, ni), rng.random(no)
        an, fd = gradient(net, x, t).flat(), fd_gradient(net, x, t)
        rel = np.abs(an - fd) / np.maximum(np.maximum(np.abs(an), np.abs(fd)), 1e-8)
        assert np.all(rel < 1e-4)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_small_step_never_increases_loss(seed):
    rng = np.random.default_rng(seed)
    net = Mlp.random(3, 4, 2, rng, scale=1.0)
    x, t = rng.uniform(-1, 1, 3), rng.random(2)
    before = sample_loss(net, x, t)
    step = net.with_params(net.params() - 1e-3 * gradient(net, x, t).flat())
    assert sample_loss(step, x, t) <= before + 1e-15


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e6, 1e6))
def test_outputs_strictly_inside_unit_interval(seed, scale):
    rng = np.random.default_rng(seed)
    net = Mlp.random(2, 3, 2, rng, scale=abs(scale) + 1e-3)
    y = forward(net, rng.uniform(-1e3, 1e3, 2))
    assert np.all((y > 0) & (y < 1))


def test_xor_converges_for_most_seeds():
    cfg = TrainConfig(0.5, 20000, 0.05)
    ok = 0
    for seed in range(10):
        res = train(Mlp.uninitialized(2, 5, 1), XOR, cfg, np.random.default_rng(seed))
        ok += res.final_mse <= 0.05
    assert ok >= 8


def test_single_sample_converges():
    data = Dataset([[0.2, 0.7, 0.1]], [[0.9, 0.1]])
    res = train(Mlp.uninitialized(3, 5, 2), data, TrainConfig(0.5, 20000, 1e-4), np.random.default_rng(1))
    assert res.final_mse < 1e-3


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        train(Mlp.zeros(2, 2, 1), Dataset(np.zeros((0, 2)), np.zeros((0, 1))), TrainConfig())


def test_dataset_shape_must_match_net():
    with pytest.raises(DimensionMismatch):
        train(Mlp.zeros(3, 2, 1), XOR, TrainConfig())


def test_loose_target_stops_at_first_epoch():
    res = train(Mlp.uninitialized(2, 5, 1), XOR, TrainConfig(target_mse=1.0), np.random.default_rng(0))
    assert res.epochs_used == 1
    assert len(res.history) == 1


def test_training_is_deterministic():
    a = train(Mlp.uninitialized(2, 5, 1), XOR, TrainConfig(max_epochs=500), np.random.default_rng(9))
    b = train(Mlp.uninitialized(2, 5, 1), XOR, TrainConfig(max_epochs=500), np.random.default_rng(9))
    assert np.array_equal(a.net.params(), b.net.params())
    assert a.epochs_used == b.epochs_used


def test_reported_mse_matches_weights():
    res = train(Mlp.uninitialized(2, 5, 1), XOR, TrainConfig(max_epochs=300), np.random.default_rng(4))
    assert res.final_mse == pytest.approx(mse(res.net, XOR), rel=1e-12)


def test_json_round_trip(tmp_path):
    net = Mlp.random(5, 5, 4, np.random.default_rng(8))
    again = Mlp.from_json(net.to_json())
    assert np.allclose(again.params(), net.params(), atol=1e-12, rtol=0)
    path = tmp_path / "m.json"
    net.save(path)
    assert np.array_equal(Mlp.load(path).params(), net.params())


def test_json_with_wrong_sizes():
    d = Mlp.zeros(2, 3, 1).to_dict()
    d["n_hidden"] = 4
    with pytest.raises(DimensionMismatch):
        Mlp.from_dict(d)


def test_save_to_bad_path(tmp_path):
    with pytest.raises(IoError):
        Mlp.zeros(1, 1, 1).save(tmp_path / "missing" / "dir" / "m.json")


@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled kernels not built")
def test_backends_agree_on_training():
    data = Dataset(np.random.default_rng(0).random((40, 5)), np.eye(4)[np.arange(40) % 4])
    results = {}
    previous = kernels.BACKEND
    try:
        for name in ("python", "cython"):
            kernels.use_backend(name)
            results[name] = train(Mlp.uninitialized(5, 5, 4), data, TrainConfig(max_epochs=300, target_mse=0.0),
                                  np.random.default_rng(5))
    finally:
        kernels.use_backend(previous)
    a, b = results["python"], results["cython"]
    assert a.epochs_used == b.epochs_used
    assert np.allclose(a.net.params(), b.net.params(), atol=1e-10)
    assert np.allclose(a.history, b.history, rtol=1e-10)
