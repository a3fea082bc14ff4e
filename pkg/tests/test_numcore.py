import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csgan import numcore as nc
from csgan.errors import NonFiniteError, ShapeError
from gradcheck import check


def param(rng, *shape, positive=False):
    data = rng.normal(size=shape)
    if positive:
        data = np.abs(data) + 0.5
    return nc.Tensor(data, requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def weighted_sum(t, rng_seed=0):
    # a fixed random projection so every output element matters
    w = np.random.default_rng(rng_seed).normal(size=t.shape)
    return nc.tsum(nc.mul(t, nc.Tensor(w)))


OPS = {
    "add": (lambda a, b: nc.add(a, b), [(3, 4), (4,)]),
    "sub": (lambda a, b: nc.sub(a, b), [(3, 4), (3, 1)]),
    "mul": (lambda a, b: nc.mul(a, b), [(2, 3, 4), (3, 4)]),
    "div": (lambda a, b: nc.div(a, b), [(3, 4), "pos(3, 4)"]),
    "scale": (lambda a: nc.scale(a, -2.5), [(3, 4)]),
    "exp": (lambda a: nc.exp(a), [(3, 4)]),
    "log": (lambda a: nc.log(a), ["pos(3, 4)"]),
    "relu": (lambda a: nc.relu(a), [(3, 4)]),
    "tanh": (lambda a: nc.tanh(a), [(3, 4)]),
    "reshape": (lambda a: nc.reshape(a, (6, 2)), [(3, 4)]),
    "transpose": (lambda a: nc.transpose(a, (2, 0, 1)), [(2, 3, 4)]),
    "getitem": (lambda a: a[1:, ::2], [(3, 4)]),
    "concat": (lambda a, b: nc.concat([a, b, a], axis=1), [(2, 3), (2, 2)]),
    "stack": (lambda a, b: nc.stack([a, b], axis=0), [(2, 3), (2, 3)]),
    "sum": (lambda a: nc.tsum(a, axis=1), [(3, 4)]),
    "mean": (lambda a: nc.tmean(a, axis=0, keepdims=True), [(3, 4)]),
    "matmul": (lambda a, b: nc.matmul(a, b), [(3, 4), (4, 2)]),
    "matmul_batched": (lambda a, b: nc.matmul(a, b), [(2, 3, 4), (2, 4, 5)]),
    "matmul_flat": (lambda a, b: nc.matmul(a, b), [(2, 3, 4), (4, 5)]),
    "linear": (lambda a, w, b: nc.linear(a, w, b), [(2, 3, 4), (4, 5), (5,)]),
    "softmax": (lambda a: nc.softmax(a, axis=-1), [(3, 5)]),
    "softmax_temp": (lambda a: nc.softmax(a, axis=0, temperature=0.7), [(3, 5)]),
    "log_softmax": (lambda a: nc.log_softmax(a), [(3, 5)]),
    "layer_norm": (lambda a, g, b: nc.layer_norm(a, g, b), [(2, 3, 6), (6,), (6,)]),
}


def _make(rng, spec):
    if isinstance(spec, str):
        return param(rng, *eval(spec[3:]), positive=True)
    return param(rng, *spec)


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_matches_finite_differences(name, rng):
    fn, specs = OPS[name]
    inputs = [_make(rng, s) for s in specs]
    err = check(lambda: weighted_sum(fn(*inputs)), inputs)
    assert err < 1e-4, f"{name}: relative error {err:.2e}"


def test_embedding_lookup_gradient(rng):
    table = param(rng, 7, 3)
    ids = np.array([[0, 3, 3], [6, 1, 3]])
    assert check(lambda: weighted_sum(nc.embedding_lookup(table, ids)), [table]) < 1e-4


def test_cross_entropy_gradient_with_mask(rng):
    logits = param(rng, 2, 3, 5)
    targets = np.array([[1, 4, 0], [2, 2, 3]])
    mask = np.array([[1, 1, 0], [1, 0, 1]], dtype=bool)
    assert check(lambda: nc.cross_entropy(logits, targets, mask), [logits]) < 1e-4


def test_mean_pool_gradient_and_masking(rng):
    x = param(rng, 2, 4, 3)
    mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=bool)
    assert check(lambda: weighted_sum(nc.mean_pool(x, 1, mask)), [x]) < 1e-4
    out = nc.mean_pool(x, 1, mask).data
    np.testing.assert_allclose(out[0], x.data[0, :2].mean(axis=0))


def test_mean_pool_rejects_fully_masked_row(rng):
    with pytest.raises(ValueError):
        nc.mean_pool(param(rng, 2, 3, 2), 1, np.array([[0, 0, 0], [1, 1, 1]], dtype=bool))


def test_cross_entropy_uniform_logits_is_log_v():
    loss = nc.cross_entropy(nc.Tensor(np.zeros((1, 7))), np.array([4]))
    assert loss.item() == pytest.approx(math.log(7), abs=1e-12)
    assert round(loss.item(), 4) == 1.9459


def test_cross_entropy_gradient_is_softmax_minus_onehot(rng):
    logits = param(rng, 1, 6)
    nc.cross_entropy(logits, np.array([2])).backward()
    p = np.exp(logits.data) / np.exp(logits.data).sum()
    expected = p - np.eye(6)[2]
    np.testing.assert_allclose(logits.grad, expected, atol=1e-12)


@pytest.mark.parametrize("v", [2, 10, 100])
def test_softmax_saturates_with_large_margin(v):
    # margin 20 over each of v - 1 rivals leaves (v - 1) * e^-20 of mass behind
    logits = np.zeros((1, v))
    logits[0, 1] = 20.0 + math.log(v - 1)
    p = nc.softmax(nc.Tensor(logits)).data
    assert p[0, 1] >= 1 - 1e-8


def test_matmul_matches_naive_triple_loop(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    naive = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                naive[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(nc.matmul(nc.Tensor(a), nc.Tensor(b)).data, naive, atol=1e-12, rtol=0)


def test_scalar_product_rule():
    x = nc.Tensor(3.0, requires_grad=True)
    y = nc.Tensor(-1.5, requires_grad=True)
    (x * y).backward()
    assert x.grad == -1.5 and y.grad == 3.0


def test_repeated_use_accumulates():
    x = nc.Tensor(np.array([2.0, -1.0]), requires_grad=True)
    nc.tsum(x * x + x).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_backward_requires_scalar(rng):
    with pytest.raises(ValueError):
        param(rng, 2, 2).backward()


def test_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(3, 4\).*\(5, 2\)"):
        nc.matmul(nc.Tensor(np.ones((3, 4))), nc.Tensor(np.ones((5, 2))))
    with pytest.raises(ShapeError):
        nc.add(nc.Tensor(np.ones((3, 4))), nc.Tensor(np.ones((3,))))


def test_non_finite_forward_is_a_hard_error():
    with pytest.raises(NonFiniteError):
        nc.log(nc.Tensor(np.array([-1.0, 1.0])))


def test_non_finite_gradient_is_a_hard_error():
    x = nc.Tensor(np.array([1e-320]), requires_grad=True)
    loss = nc.tsum(nc.log(x))
    assert np.isfinite(loss.data)
    with pytest.raises(NonFiniteError):
        loss.backward()


def test_overflow_in_forward_pass_is_caught():
    big = nc.Tensor(np.array([1e308, 1e308]), requires_grad=True)
    with pytest.raises(NonFiniteError):
        nc.tsum(nc.scale(big, 10.0)).backward()


def test_softmax_temperature_must_be_positive():
    with pytest.raises(ValueError):
        nc.softmax(nc.Tensor(np.ones((2, 2))), temperature=0.0)


def test_no_grad_records_nothing(rng):
    a = param(rng, 2, 2)
    with nc.no_grad():
        out = a @ a
    assert not out.requires_grad and out._parents == ()


shapes = st.lists(st.integers(1, 6), min_size=1, max_size=2).map(tuple)


@settings(max_examples=25, deadline=None)
@given(lead=shapes, width=st.integers(2, 8), seed=st.integers(0, 10_000))
def test_property_chain_finite_differences(lead, width, seed):
    rng = np.random.default_rng(seed)
    x = param(rng, *lead, width)
    w = param(rng, width, width)
    g = param(rng, width)
    b = param(rng, width)

    def loss():
        h = nc.layer_norm(nc.matmul(x, w), g, b)
        return weighted_sum(nc.softmax(nc.tanh(h), axis=-1, temperature=0.8), seed)

    assert check(loss, [x, w, g, b]) < 1e-4


@settings(max_examples=50, deadline=None)
@given(rows=st.integers(1, 6), cols=st.integers(2, 8), tau=st.floats(0.05, 20.0), seed=st.integers(0, 10_000))
def test_property_softmax_normalised_and_argmax_stable(rows, cols, tau, seed):
    logits = np.random.default_rng(seed).normal(size=(rows, cols))
    p = nc.softmax(nc.Tensor(logits), axis=-1, temperature=tau).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)
    assert (p.argmax(axis=-1) == logits.argmax(axis=-1)).all()


def test_forward_is_deterministic_for_a_seed():
    def run():
        rng = np.random.default_rng(99)
        x, w = param(rng, 4, 5), param(rng, 5, 3)
        return nc.cross_entropy(nc.matmul(x, w), np.array([0, 1, 2, 0])).data.tobytes()

    assert run() == run()
