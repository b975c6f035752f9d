import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from intop import diffcore as dc
from intop.checks import gradcheck
from intop.quadrature import make_rng


def rand(*shape, seed=0):
    return make_rng(500, seed).uniform(-2.0, 2.0, shape)


def leaf(x):
    return dc.Tensor(np.asarray(x, dtype=float), requires_grad=True)


# forward values


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(dc.matmul(dc.Tensor(a), dc.Tensor(np.eye(2))).data, a)


def test_mean_value_and_gradient():
    x = leaf([1.0, 2.0, 3.0])
    m = dc.mean(x)
    assert m.item() == 2.0
    m.backward()
    np.testing.assert_allclose(x.grad, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_conv1d_delta_kernel():
    out = dc.conv1d(dc.Tensor([[1.0, 2, 3, 4]]), dc.Tensor([1.0, 0.0]), 1, dc.Tensor(0.0))
    np.testing.assert_array_equal(out.data, [[1, 2, 3]])


def test_conv1d_constant_stride_two():
    out = dc.conv1d(dc.Tensor(np.ones((1, 10))), dc.Tensor(np.ones(3)), 2, dc.Tensor(0.0))
    np.testing.assert_array_equal(out.data, [[3, 3, 3, 3]])


def test_conv1d_kernel_longer_than_signal():
    with pytest.raises(dc.ShapeError):
        dc.conv1d(dc.Tensor(np.ones((1, 3))), dc.Tensor(np.ones(4)))


def test_conv1d_rejects_bad_stride():
    with pytest.raises(ValueError):
        dc.conv1d(dc.Tensor(np.ones((1, 5))), dc.Tensor(np.ones(2)), 0)


def test_activations_at_zero():
    assert dc.tanh(dc.Tensor(0.0)).item() == 0.0
    assert dc.sigmoid(dc.Tensor(0.0)).item() == 0.5
    assert dc.relu(dc.Tensor(-1.0)).item() == 0.0


def test_sigmoid_is_stable_at_extremes():
    out = dc.sigmoid(dc.Tensor([-1000.0, 1000.0])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out, [0.0, 1.0])


def test_tanh_derivative_at_zero():
    x = leaf(0.0)
    dc.tanh(x).backward()
    fd = (math.tanh(1e-5) - math.tanh(-1e-5)) / 2e-5
    assert x.grad == pytest.approx(1.0, abs=1e-12)
    assert fd == pytest.approx(1.0, abs=1e-9)


def test_cross_entropy_uniform_logits():
    loss = dc.cross_entropy(dc.Tensor(np.zeros((4, 3))), [0, 1, 2, 0])
    assert loss.item() == pytest.approx(math.log(3), abs=1e-15)


def test_cross_entropy_saturated_no_overflow():
    loss = dc.cross_entropy(dc.Tensor([[1000.0, 0.0]]), [0]).item()
    assert np.isfinite(loss) and loss < 1e-300


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError):
        dc.cross_entropy(dc.Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(ValueError):
        dc.cross_entropy(dc.Tensor(np.zeros((2, 3))), [-1, 0])


def test_cross_entropy_needs_two_classes():
    with pytest.raises(ValueError):
        dc.cross_entropy(dc.Tensor(np.zeros((2, 1))), [0, 0])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(dc.ShapeError, match=r"\(2, 3\).*\(4,\)"):
        dc.add(dc.Tensor(np.zeros((2, 3))), dc.Tensor(np.zeros(4)))
    with pytest.raises(dc.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        dc.matmul(dc.Tensor(np.zeros((2, 3))), dc.Tensor(np.zeros((2, 3))))


def test_affine_shape_checks():
    with pytest.raises(dc.ShapeError, match="affine"):
        dc.affine(dc.Tensor(np.zeros((2, 3))), dc.Tensor(np.zeros((3, 4))), dc.Tensor(np.zeros(3)))


def test_affine_equals_matmul_plus_bias():
    x, w, b = rand(5, 3), rand(3, 2, seed=1), rand(2, seed=2)
    np.testing.assert_allclose(dc.affine(dc.Tensor(x), dc.Tensor(w), dc.Tensor(b)).data, x @ w + b, rtol=0, atol=1e-15)


def test_broadcast_only_over_leading_dims():
    out = dc.add(dc.Tensor(np.zeros((2, 3))), dc.Tensor([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(out.data, [[1, 2, 3], [1, 2, 3]])
    with pytest.raises(dc.ShapeError):
        dc.add(dc.Tensor(np.zeros((2, 3))), dc.Tensor(np.zeros((2, 1))))


# gradients against central differences


@pytest.mark.parametrize(
    "name,fn,shapes",
    [
        ("add", dc.add, [(3, 4), (4,)]),
        ("sub", dc.sub, [(3, 4), (3, 4)]),
        ("mul", dc.mul, [(2, 3), (2, 3)]),
        ("neg", dc.neg, [(3,)]),
        ("scale", lambda a: dc.scale(a, -1.7), [(3,)]),
        ("matmul", dc.matmul, [(3, 4), (4, 2)]),
        ("affine", dc.affine, [(3, 4), (4, 2), (2,)]),
        ("concat", lambda a, b: dc.concat([a, b], axis=0), [(2, 3), (1, 3)]),
        ("sum_all", dc.sum, [(3, 4)]),
        ("sum_axis", lambda a: dc.sum(a, axis=1, keepdims=True), [(3, 4)]),
        ("mean_axis", lambda a: dc.mean(a, axis=0), [(3, 4)]),
        ("tanh", dc.tanh, [(3, 4)]),
        ("sigmoid", dc.sigmoid, [(3, 4)]),
        ("transpose", lambda a: dc.transpose(a, (1, 0)), [(3, 4)]),
        ("conv1d", lambda s, k, b: dc.conv1d(s, k, 1, b), [(3, 9), (4,), ()]),
        ("conv1d_stride3", lambda s, k, b: dc.conv1d(s, k, 3, b), [(2, 13), (3,), ()]),
        ("conv1d_channels", lambda s, k, b: dc.conv1d(s, k, 2, b), [(2, 2, 10), (3, 2, 3), (3,)]),
        ("cross_entropy", lambda z: dc.cross_entropy(z, [2, 0, 1, 1]), [(4, 3)]),
    ],
)
def test_gradient_matches_finite_differences(name, fn, shapes):
    inputs = [rand(*s, seed=i) for i, s in enumerate(shapes)]
    assert gradcheck(fn, inputs) < 1e-6


def test_relu_gradient_away_from_kink():
    x = rand(3, 4)
    x[np.abs(x) < 0.1] = 0.5
    assert gradcheck(dc.relu, [x]) < 1e-6


@settings(max_examples=25, deadline=None)
@given(
    arrays(np.float64, (3, 4), elements=st.floats(-2, 2)),
    arrays(np.float64, (4, 2), elements=st.floats(-2, 2)),
)
def test_matmul_gradient_property(a, b):
    assert gradcheck(dc.matmul, [a, b]) < 1e-6


# backward semantics


def test_backward_of_sum_is_ones():
    p = dc.Parameter(rand(2, 3))
    dc.sum(p).backward()
    np.testing.assert_array_equal(p.grad, np.ones((2, 3)))


def test_backward_of_zero_times_p_is_zero():
    p = dc.Parameter(rand(4))
    dc.sum(dc.scale(p, 0.0)).backward()
    np.testing.assert_array_equal(p.grad, np.zeros(4))


def test_shared_subexpression_accumulates():
    x = leaf([1.5])
    dc.sum(dc.add(x, x)).backward()
    np.testing.assert_array_equal(x.grad, [2.0])


def test_diamond_graph_visits_each_node_once():
    x = leaf(0.3)
    y = dc.tanh(x)
    z = dc.add(dc.mul(y, y), y)
    z.backward()
    t = math.tanh(0.3)
    assert x.grad == pytest.approx((2 * t + 1) * (1 - t * t), rel=1e-14)


def test_repeated_backward_accumulates_and_zero_grad_resets():
    p = dc.Parameter(rand(3))
    loss = lambda: dc.sum(dc.mul(p, p))  # noqa: E731
    loss().backward()
    first = p.grad.copy()
    loss().backward()
    np.testing.assert_array_equal(p.grad, 2 * first)
    p.zero_grad()
    loss().backward()
    np.testing.assert_array_equal(p.grad, first)


def test_backward_requires_scalar():
    x = leaf([1.0, 2.0])
    with pytest.raises(dc.ShapeError):
        dc.tanh(x).backward()


def test_no_grad_builds_no_graph():
    x = leaf([1.0])
    with dc.no_grad():
        y = dc.tanh(x)
    assert not y.requires_grad


def test_forward_is_bitwise_deterministic():
    a, b = rand(5, 7), rand(7, 3, seed=1)
    first = dc.tanh(dc.matmul(dc.Tensor(a), dc.Tensor(b))).data
    second = dc.tanh(dc.matmul(dc.Tensor(a), dc.Tensor(b))).data
    assert first.tobytes() == second.tobytes()


# modules and optimizers


def test_module_registers_each_parameter_once():
    mlp = dc.MLP([3, 5, 2], make_rng(1))
    names = [n for n, _ in mlp.named_parameters()]
    assert len(names) == len(set(names)) == 4
    assert sum(p.size for p in (q.data for q in mlp.parameters())) == 3 * 5 + 5 + 5 * 2 + 2


def test_linear_init_bounds():
    lin = dc.Linear(16, 4, make_rng(2))
    assert np.all(np.abs(lin.weight.data) <= 0.25)


def test_adam_zero_gradient_leaves_params():
    p = dc.Parameter(np.array([1.0, -2.0]))
    before = p.data.copy()
    dc.adam_step([p], [np.zeros(2)], {}, lr=0.1)
    np.testing.assert_array_equal(p.data, before)


def test_adam_one_step_descends():
    p = dc.Parameter(np.array([1.0]))
    dc.adam_step([p], [2 * p.data], {}, lr=0.1)
    assert p.data[0] < 1.0


def test_adam_converges_on_quadratic():
    p = dc.Parameter(np.array([0.0]))
    opt = dc.Adam([p], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        d = dc.sub(p, dc.Tensor([3.0]))
        dc.sum(dc.mul(d, d)).backward()
        opt.step()
    assert abs(p.data[0] - 3.0) < 1e-3


def test_sgd_step():
    p = dc.Parameter(np.array([1.0]))
    opt = dc.make_optimizer("sgd", [p], 0.25)
    dc.sum(dc.mul(p, p)).backward()
    opt.step()
    assert p.data[0] == 0.5


def test_unknown_optimizer():
    with pytest.raises(ValueError):
        dc.make_optimizer("lbfgs", [], 0.1)


def test_params_round_trip_bit_exact(tmp_path):
    arrays = {"w": make_rng(3).normal(size=(3, 4)) * 1e-7, "b": np.array([np.pi, -0.0, 1e300])}
    dc.save_params(tmp_path / "p.json", arrays)
    back = dc.load_params(tmp_path / "p.json")
    for k in arrays:
        assert back[k].tobytes() == arrays[k].tobytes()


def test_load_state_dict_rejects_mismatch():
    mlp = dc.MLP([2, 3, 2], make_rng(4))
    state = mlp.state_dict()
    state[next(iter(state))] = np.zeros((9, 9))
    with pytest.raises(Exception):
        mlp.load_state_dict(state)
