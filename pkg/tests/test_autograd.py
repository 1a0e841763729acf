"""Tape ops: forward values against closed forms, gradients against finite
differences."""

import math

import numpy as np
import pytest

from occludox.autograd import Tape, conv_output_size
from occludox.errors import ContractError, ShapeError

from fd_oracle import finite_diff


def _scalar_net(build):
    """Run `build(tape) -> (leaves, root)` and return leaf grads via backward."""
    tape = Tape()
    leaves, root = build(tape)
    grads = tape.backward(root)
    return [grads[v.id] for v in leaves], root.value


# -- forward closed forms ----------------------------------------------------

def test_conv_identity_kernel():
    tape = Tape()
    x = tape.leaf(np.random.default_rng(0).random((2, 3, 5, 5)))
    w = tape.leaf(np.eye(3).reshape(3, 3, 1, 1))
    b = tape.leaf(np.zeros(3))
    y = tape.conv2d(x, w, b, stride=1, padding=0)
    assert np.array_equal(y.value, x.value)


def test_conv_all_ones_sum():
    tape = Tape()
    x = tape.leaf(np.ones((1, 1, 2, 2)))
    w = tape.leaf(np.ones((1, 1, 2, 2)))
    b = tape.leaf(np.zeros(1))
    y = tape.conv2d(x, w, b)
    assert y.value.shape == (1, 1, 1, 1)
    assert y.value.reshape(()) == 4.0


def test_conv_matches_nested_loop_oracle():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 3, 5, 5))
    w = rng.standard_normal((2, 3, 3, 3))
    b = rng.standard_normal(2)
    tape = Tape()
    y = tape.conv2d(tape.leaf(x), tape.leaf(w), tape.leaf(b)).value

    out = np.zeros((1, 2, 3, 3))
    for o in range(2):
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for c in range(3):
                    for u in range(3):
                        for v in range(3):
                            acc += x[0, c, i + u, j + v] * w[o, c, u, v]
                out[0, o, i, j] = acc + b[o]
    assert np.max(np.abs(y - out)) < 1e-12


def test_conv_stride_padding_shapes():
    assert conv_output_size(32, 3, 1, 1) == 32
    assert conv_output_size(5, 3, 2, 0) == 2
    tape = Tape()
    x = tape.leaf(np.zeros((1, 1, 5, 5)))
    w = tape.leaf(np.zeros((4, 1, 3, 3)))
    b = tape.leaf(np.zeros(4))
    assert tape.conv2d(x, w, b, stride=2, padding=1).shape == (1, 4, 3, 3)


def test_conv_channel_mismatch():
    tape = Tape()
    x = tape.leaf(np.zeros((1, 2, 4, 4)))
    w = tape.leaf(np.zeros((1, 3, 3, 3)))
    b = tape.leaf(np.zeros(1))
    with pytest.raises(ShapeError):
        tape.conv2d(x, w, b)


def test_conv_kernel_larger_than_input():
    tape = Tape()
    x = tape.leaf(np.zeros((1, 1, 2, 2)))
    w = tape.leaf(np.zeros((1, 1, 5, 5)))
    b = tape.leaf(np.zeros(1))
    with pytest.raises(ShapeError):
        tape.conv2d(x, w, b)


def test_relu_clip_pool_values():
    tape = Tape()
    v = tape.relu(tape.leaf(np.array([-3.0, 2.5]))).value
    assert v[0] == 0.0 and v[1] == 2.5
    c = tape.clip(tape.leaf(np.array([1.7, -0.2, 0.3])), 0.0, 1.0).value
    assert np.array_equal(c, [1.0, 0.0, 0.3])
    p = tape.maxpool2(tape.leaf(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)))
    assert p.value.reshape(()) == 4.0


def test_add_sub_mul_shapes_checked():
    tape = Tape()
    a = tape.leaf(np.zeros((2, 3)))
    b = tape.leaf(np.zeros((3, 2)))
    for op in (tape.add, tape.sub, tape.mul):
        with pytest.raises(ShapeError):
            op(a, b)


def test_cross_entropy_closed_forms():
    tape = Tape()
    two = tape.cross_entropy(tape.leaf(np.zeros(2)), 0)
    assert abs(float(two.value) - 0.6931471805599453) < 1e-15
    four = tape.cross_entropy(tape.leaf(np.zeros(4)), 3)
    assert abs(float(four.value) - math.log(4.0)) < 1e-15
    skew = tape.cross_entropy(tape.leaf(np.array([2.0, 0.0])), 0)
    assert abs(float(skew.value) - math.log1p(math.exp(-2.0))) < 1e-15


def test_cross_entropy_stability_with_huge_logits():
    tape = Tape()
    v = tape.cross_entropy(tape.leaf(np.array([1e4, 0.0])), 0)
    assert float(v.value) == 0.0  # exp(-1e4) underflows benignly


def test_cross_entropy_label_out_of_range():
    tape = Tape()
    with pytest.raises(IndexError):
        tape.cross_entropy(tape.leaf(np.zeros(3)), 5)


def test_cross_entropy_batch_reductions():
    logits = np.array([[1.0, -1.0], [0.0, 0.0]])
    labels = np.array([0, 1])
    tape = Tape()
    mean = tape.cross_entropy(tape.leaf(logits), labels, reduction="mean")
    tot = tape.cross_entropy(tape.leaf(logits), labels, reduction="sum")
    per = tape.per_example_losses(mean)
    assert per.shape == (2,)
    assert abs(float(tot.value) - per.sum()) < 1e-15
    assert abs(float(mean.value) - per.mean()) < 1e-15
    with pytest.raises(ContractError):
        tape.cross_entropy(tape.leaf(logits), labels, reduction="median")


# -- backward ---------------------------------------------------------------

def test_product_rule():
    tape = Tape()
    x = tape.leaf(np.array(3.0))
    y = tape.leaf(np.array(5.0))
    grads = tape.backward(x * y)
    assert grads[x.id] == 5.0
    assert grads[y.id] == 3.0


def test_relu_gradient_at_negative_input_is_zero():
    tape = Tape()
    x = tape.leaf(np.array(-1.0))
    g = tape.backward(tape.sum(tape.relu(x)))[x.id]
    assert g == 0.0


def test_backward_requires_scalar_root():
    tape = Tape()
    x = tape.leaf(np.zeros((2, 2)))
    with pytest.raises(ContractError):
        tape.backward(tape.relu(x))


def test_unreached_leaf_gets_zero_gradient():
    tape = Tape()
    x = tape.leaf(np.array(2.0))
    unused = tape.leaf(np.ones(3))
    grads = tape.backward(x * x)
    assert np.array_equal(grads[unused.id], np.zeros(3))


def test_fanout_accumulates():
    tape = Tape()
    x = tape.leaf(np.array(2.0))
    y = tape.backward(x * x + x * x)  # d/dx 2x^2 = 4x
    assert float(y[x.id]) == 8.0


def test_no_grad_leaf_is_skipped():
    tape = Tape()
    x = tape.leaf(np.array(2.0))
    k = tape.leaf(np.array(4.0), needs_grad=False)
    grads = tape.backward(x * k)
    assert grads[x.id] == 4.0
    assert k.id not in grads


def test_finite_difference_small_net():
    # conv -> relu -> pool -> dense -> cross-entropy, all leaves checked
    rng = np.random.default_rng(17)
    x0 = rng.random((2, 1, 4, 4))
    w0 = rng.standard_normal((2, 1, 3, 3)) * 0.5
    b0 = rng.standard_normal(2) * 0.1
    wd = rng.standard_normal((3, 8)) * 0.5
    bd = rng.standard_normal(3) * 0.1
    labels = np.array([0, 2])

    def run(x, w, b, w2, b2):
        tape = Tape()
        leaves = [tape.leaf(a) for a in (x, w, b, w2, b2)]
        h = tape.relu(tape.conv2d(leaves[0], leaves[1], leaves[2], padding=1))
        h = tape.maxpool2(h)
        flat = tape.flatten(h)
        logits = tape.dense(flat, leaves[3], leaves[4])
        loss = tape.cross_entropy(logits, labels)
        return tape, leaves, loss

    tape, leaves, loss = run(x0, w0, b0, wd, bd)
    grads = tape.backward(loss)
    args = [x0, w0, b0, wd, bd]
    for i, leaf in enumerate(leaves):
        def f(v, i=i):
            trial = list(args)
            trial[i] = v
            return float(run(*trial)[2].value)
        num = finite_diff(f, args[i])
        ana = grads[leaf.id]
        denom = max(np.max(np.abs(num)), 1e-8)
        assert np.max(np.abs(num - ana)) / denom < 1e-6
