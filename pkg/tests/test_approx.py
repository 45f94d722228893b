import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbe.approx import (MLP, SGD, ActiveFeatures, Adam, FeatureMap, LinearStack,
                        finite_difference_grads, gradient_rel_error, one_hot, tile_code,
                        tile_map, triangle_index)
from vbe.errors import ContractViolation, InvalidParameter


def test_one_hot_examples():
    assert one_hot(0, 3).tolist() == [1, 0, 0]
    assert one_hot(2, 3).tolist() == [0, 0, 1]
    with pytest.raises(InvalidParameter):
        one_hot(3, 3)


def test_deepsea_features_are_triangular():
    fm = FeatureMap.deepsea(10)
    assert fm.output_dim == 55
    cells = [(r, c) for r in range(10) for c in range(r + 1)]
    idx = fm.index(np.array(cells, dtype=float))
    assert sorted(idx.tolist()) == list(range(55))
    assert triangle_index(9, 9, 10) == 54
    x = fm(np.array([4.0, 2.0]))
    assert x.sum() == 1.0 and x[triangle_index(4, 2, 10)] == 1.0


def test_tile_configs_match_feature_budget():
    rs = tile_map((0.0,), (1.0,), 4, 32, 128)
    mc = tile_map((-1.2, -0.07), (0.6, 0.07), 4, 16, 512)
    assert rs.output_dim == 128 and mc.output_dim == 512
    assert tile_code(np.array([0.3]), rs).shape == (128,)


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.5, 1.5), st.floats(-0.5, 1.5))
def test_tile_code_active_count(x, y):
    fm = tile_map((0.0, 0.0), (1.0, 1.0), 5, 5, 128)
    v = fm(np.array([x, y]))
    assert v.sum() == 5
    assert set(np.unique(v)) <= {0.0, 1.0}


def test_tile_code_same_cell_same_features():
    fm = tile_map((0.0,), (1.0,), 4, 32, 128)
    # Cells are 1/(3*32) wide after all offsets; two points inside one are identical.
    a, b = fm(np.array([0.401])), fm(np.array([0.4015]))
    assert np.array_equal(a, b)


def test_tile_code_far_points_disjoint():
    fm = tile_map((0.0,), (1.0,), 4, 32, 128)
    width = 1.0 / 3
    a, b = fm(np.array([0.05])), fm(np.array([0.05 + width + 1e-6]))
    assert np.dot(a, b) == 0.0


def test_encode_matches_dense():
    rng = np.random.default_rng(0)
    fm = tile_map((0.0, 0.0), (1.0, 1.0), 5, 5, 128)
    obs = rng.random((7, 2))
    assert np.array_equal(fm.encode(obs), fm(obs))
    ds = FeatureMap.deepsea(6)
    obs = np.array([[3.0, 1.0], [5.0, 5.0]])
    enc = ds.encode(obs)
    assert isinstance(enc, ActiveFeatures)
    assert np.array_equal(enc.dense(), ds(obs))


def test_mlp_zero_weights_zero_output():
    net = MLP([3, 4, 2], init="zeros")
    assert np.all(net(np.ones((5, 3))) == 0.0)


def test_mlp_hand_computed_forward():
    net = MLP([2, 1, 1], init="zeros")
    net.weights[0][:] = [[1.0], [-2.0]]
    net.biases[0][:] = [0.5]
    net.weights[1][:] = [[3.0]]
    net.biases[1][:] = [1.0]
    # hidden = relu(1*2 - 2*0.5 + 0.5) = 1.5; out = 3*1.5 + 1
    assert net(np.array([2.0, 0.5]))[0] == pytest.approx(5.5)
    assert net(np.array([0.0, 1.0]))[0] == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 10_000))
def test_relu_positive_homogeneity(lam, seed):
    rng = np.random.default_rng(seed)
    net = MLP([4, 6, 6, 2], rng, bias=False)
    x = rng.normal(size=(3, 4))
    np.testing.assert_allclose(net(lam * x), lam * net(x), rtol=1e-9, atol=1e-12)


def test_mlp_dimension_mismatch():
    net = MLP([3, 2])
    with pytest.raises(InvalidParameter):
        net.forward(np.ones(4))


def test_backward_needs_forward():
    with pytest.raises(ContractViolation):
        MLP([3, 2]).backward(np.ones((1, 2)))


def test_linear_gradient_is_outer_product():
    rng = np.random.default_rng(1)
    net = MLP([4, 3], rng)
    x = rng.normal(size=(2, 4))
    g = rng.normal(size=(2, 3))
    net.forward(x)
    gw, gb = net.backward(g)
    np.testing.assert_allclose(gw, x.T @ g)
    np.testing.assert_allclose(gb, g.sum(axis=0))


def test_zero_output_grad_gives_zero_gradients():
    rng = np.random.default_rng(2)
    net = MLP([3, 5, 5, 2], rng)
    net.forward(rng.normal(size=(4, 3)))
    assert all(np.all(g == 0) for g in net.backward(np.zeros((4, 2))))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, 6)) for _ in range(4)]
    net = MLP(sizes, rng)
    x = rng.normal(size=(int(rng.integers(1, 4)), sizes[0]))
    g = rng.normal(size=(len(x), sizes[-1]))
    net.forward(x)
    assert gradient_rel_error(net.backward(g), finite_difference_grads(net, x, g)) < 1e-4


def test_sparse_and_dense_paths_agree():
    rng = np.random.default_rng(3)
    fm = FeatureMap.deepsea(8)
    net = MLP([fm.output_dim, 7, 2], rng)
    obs = np.array([[r, c] for r in range(8) for c in range(r + 1)], dtype=float)[::3]
    g = rng.normal(size=(len(obs), 2))
    out_sparse = net.forward(fm.encode(obs))
    grads_sparse = net.backward(g)
    out_dense = net.forward(fm(obs))
    grads_dense = net.backward(g)
    np.testing.assert_allclose(out_sparse, out_dense)
    for a, b in zip(grads_sparse, grads_dense):
        np.testing.assert_allclose(a, b)


def test_gaussian_over_n_variance():
    n = 400
    net = MLP([n, 250], np.random.default_rng(4), init="gaussian_over_n")
    w = net.weights[0]
    assert w.size == 100_000
    assert abs(w.var() / (1.0 / n) - 1.0) < 0.05
    assert np.all(net.biases[0] == 0)


def test_default_init_bounds():
    net = MLP([16, 3], np.random.default_rng(5))
    assert np.abs(net.weights[0]).max() <= 0.25


def test_copy_and_load_are_independent():
    rng = np.random.default_rng(6)
    a = MLP([3, 4, 2], rng)
    b = a.copy()
    a.weights[0] += 1.0
    assert not np.array_equal(a.flat(), b.flat())
    b.load_from(a)
    assert np.array_equal(a.flat(), b.flat())


def test_dump_is_layer_major_float64(tmp_path):
    net = MLP([2, 3], np.random.default_rng(7))
    path = tmp_path / "w.bin"
    net.dump(path)
    flat = np.fromfile(path, dtype=np.float64)
    np.testing.assert_array_equal(flat, np.concatenate([net.weights[0].ravel(), net.biases[0]]))


def test_linear_stack_matches_members():
    rng = np.random.default_rng(8)
    fm = tile_map((0.0,), (1.0,), 4, 8, 32)
    nets = [MLP([32, 2], rng) for _ in range(5)]
    expected_before = [n(fm(np.array([[0.2], [0.7]]))) for n in nets]
    stack = LinearStack(nets)
    phi = fm.encode(np.array([[0.2], [0.7]]))
    np.testing.assert_allclose(stack(phi), np.stack(expected_before))
    nets[2].weights[0] += 1.0  # members write through to the stack
    np.testing.assert_allclose(stack(phi)[2], nets[2](phi))


# -- optimizers --------------------------------------------------------------

def test_sgd_scalar_step():
    p = np.zeros(1)
    SGD([p], lr=0.1).step([np.ones(1)])
    assert p[0] == pytest.approx(-0.1)


def test_adam_first_step_magnitude():
    p = np.zeros(3)
    Adam([p], lr=0.001).step([np.array([2.0, -0.5, 7.0])])
    np.testing.assert_allclose(p, [-0.001, 0.001, -0.001], rtol=1e-6)


@pytest.mark.parametrize("opt_cls", [SGD, Adam])
def test_zero_gradient_leaves_params(opt_cls):
    p = np.arange(4.0)
    opt = opt_cls([p])
    opt.step([np.zeros(4)])
    assert np.array_equal(p, np.arange(4.0))


def test_optimizer_shape_mismatch():
    with pytest.raises(InvalidParameter):
        SGD([np.zeros(3)]).step([np.zeros(2)])


def test_adam_minimizes_quadratic():
    p = np.array([3.0, -2.0])
    opt = Adam([p], lr=0.05)
    for _ in range(2000):
        opt.step([2 * p])
    assert np.abs(p).max() < 1e-2
    assert math.isfinite(p.sum())
