import warnings

import numpy as np
import pytest

from csgan import numcore as nc
from csgan.errors import NonFiniteError


def _adam_reference(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Plain scalar Adam recurrence, written out longhand."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
        out.append(theta)
    return out


def test_zero_gradient_leaves_parameters_unchanged():
    p = {"w": np.array([1.0, -2.0])}
    before = p["w"].copy()
    nc.adam_step(p, {"w": np.zeros(2)}, nc.AdamState(), lr=1e-3)
    np.testing.assert_array_equal(p["w"], before)


def test_first_step_is_bias_corrected():
    p = {"w": np.array([0.0])}
    nc.adam_step(p, {"w": np.array([1.0])}, nc.AdamState(), lr=1e-3)
    assert p["w"][0] == pytest.approx(-1e-3 / (1 + 1e-8), abs=1e-15)


def test_constant_gradient_matches_recurrence_and_moves_monotonically():
    p = {"w": np.array([0.5])}
    state = nc.AdamState()
    traj = []
    for _ in range(100):
        nc.adam_step(p, {"w": np.array([0.3])}, state, lr=1e-2)
        traj.append(p["w"][0])
    ref = _adam_reference(0.5, [0.3] * 100, 1e-2)
    np.testing.assert_allclose(traj, ref, rtol=0, atol=1e-12)
    assert np.all(np.diff(traj) < 0)
    assert state.step == 100


def test_nan_gradient_is_rejected():
    with pytest.raises(NonFiniteError):
        nc.adam_step({"w": np.zeros(1)}, {"w": np.array([np.nan])}, nc.AdamState(), lr=1e-3)


def test_adam_wrapper_uses_tensor_grads():
    w = nc.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = nc.Adam({"w": w}, lr=0.1)
    nc.tsum(w * w).backward()
    opt.step()
    np.testing.assert_allclose(w.data, [0.9, 1.9], atol=1e-7)
    opt.zero_grad()
    assert w.grad is None


def test_clip_grad_norm_rescales_to_max():
    a = nc.Tensor(np.zeros(2), requires_grad=True)
    b = nc.Tensor(np.zeros(1), requires_grad=True)
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    total = nc.clip_grad_norm([a, b], 1.0)
    assert total == pytest.approx(5.0)
    assert np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum()) == pytest.approx(1.0, abs=1e-9)


def test_stlr_reference_values():
    sched = nc.StlrSchedule(eta_max=1e-3, total_steps=1000, cut_frac=0.1, ratio=32)
    assert sched.cut == 100
    assert abs(nc.stlr_lr(0, sched) - 3.125e-5) < 1e-12
    assert abs(nc.stlr_lr(100, sched) - 1e-3) < 1e-12
    assert abs(nc.stlr_lr(1000, sched) - 3.125e-5) < 1e-12


def test_stlr_shape():
    sched = nc.StlrSchedule(eta_max=2e-4, total_steps=500)
    lrs = [sched(t) for t in range(501)]
    peak = int(np.argmax(lrs))
    assert peak == sched.cut
    assert np.all(np.diff(lrs[: peak + 1]) > 0)
    assert np.all(np.diff(lrs[peak:]) < 0)
    assert min(lrs) > 0
    # the decay takes longer than the rise
    assert 500 - peak > peak


def test_stlr_clamps_past_horizon():
    sched = nc.StlrSchedule(eta_max=1e-3, total_steps=10)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert nc.stlr_lr(25, sched) == nc.stlr_lr(10, sched)
    assert caught


@pytest.mark.parametrize("kwargs", [dict(cut_frac=0.0), dict(cut_frac=1.0), dict(ratio=1.0)])
def test_stlr_rejects_bad_settings(kwargs):
    with pytest.raises(ValueError):
        nc.StlrSchedule(eta_max=1e-3, total_steps=10, **kwargs)
