"""Adam, global-norm gradient clipping and the slanted triangular LR schedule."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError, ShapeError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, in place.

    ``params`` and ``grads`` are dicts of name -> ndarray with matching keys
    and shapes. Entries whose gradient is ``None`` are left untouched.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError("adam_step", p.shape, g.shape, name)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    """Adam over a dict of Tensors, reading each tensor's ``.grad``."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.state = AdamState(beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr=None):
        adam_step(
            {k: p.data for k, p in self.params.items()},
            {k: p.grad for k, p in self.params.items()},
            self.state,
            self.lr if lr is None else lr,
        )


def clip_grad_norm(params, max_norm):
    """Rescale grads so their joint L2 norm is at most ``max_norm``; return the pre-clip norm."""
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if not math.isfinite(total):
        raise NonFiniteError("non-finite gradient norm")
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for g in grads:
            g *= factor
    return total


@dataclass(frozen=True)
class StlrSchedule:
    eta_max: float
    total_steps: int
    cut_frac: float = 0.1
    ratio: float = 32.0

    def __post_init__(self):
        if not 0.0 < self.cut_frac < 1.0:
            raise ValueError("cut_frac must lie in (0, 1)")
        if self.ratio <= 1.0:
            raise ValueError("ratio must exceed 1")
        if self.total_steps < 1 or self.eta_max <= 0:
            raise ValueError("need total_steps >= 1 and eta_max > 0")

    @property
    def cut(self):
        return max(1, math.floor(self.total_steps * self.cut_frac))

    def __call__(self, t):
        return stlr_lr(t, self)


def stlr_lr(t, sched):
    """Slanted triangular rate: linear rise to ``eta_max`` at the cut, then a longer linear decay."""
    if t > sched.total_steps:
        warnings.warn(f"step {t} beyond schedule horizon {sched.total_steps}; clamping", stacklevel=2)
        t = sched.total_steps
    t = max(t, 0)
    cut = sched.cut
    if t < cut:
        p = t / cut
    else:
        p = 1.0 - (t - cut) / (cut * (1.0 / sched.cut_frac - 1.0))
    return sched.eta_max * (1.0 + p * (sched.ratio - 1.0)) / sched.ratio
