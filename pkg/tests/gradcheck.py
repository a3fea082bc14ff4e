"""Central finite-difference gradient checking used across the test suite."""
import numpy as np


def numeric_grad(f, arr, h=1e-5):
    """d f() / d arr by central differences, perturbing ``arr`` in place."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


# gradients smaller than this are below what central differences resolve
GRAD_FLOOR = 1e-6


def rel_error(a, b):
    """Norm-wise relative error, with the denominator floored at ``GRAD_FLOOR``."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b), GRAD_FLOOR)
    return float(np.linalg.norm(a - b) / denom)


def check(build_loss, tensors, h=1e-5):
    """Return the worst relative error between backprop and finite differences.

    ``build_loss`` rebuilds the scalar loss Tensor from the current values of
    ``tensors`` (which must require grad).
    """
    for t in tensors:
        t.grad = None
    build_loss().backward()
    worst = 0.0
    for t in tensors:
        analytic = t.grad.copy()
        numeric = numeric_grad(lambda: float(build_loss().data), t.data, h)
        worst = max(worst, rel_error(analytic, numeric))
    return worst
