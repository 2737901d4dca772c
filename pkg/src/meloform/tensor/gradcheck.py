"""Central-difference gradient checking."""

from typing import Callable, Sequence

import numpy as np

from .core import Tensor, no_grad


def numeric_grad(f: Callable[[], Tensor], t: Tensor, eps: float = 1e-6, index=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``t.data`` (optionally only at ``index`` positions)."""
    grad = np.zeros(t.shape, dtype=t.dtype)
    positions = range(t.size) if index is None else index
    with no_grad():
        for i in positions:
            pos = np.unravel_index(int(i), t.shape)  # in place, also for non-contiguous data
            old = t.data[pos]
            t.data[pos] = old + eps
            up = f().item()
            t.data[pos] = old - eps
            down = f().item()
            t.data[pos] = old
            grad[pos] = (up - down) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """``|a - b| / (|a| + |b|)`` with the denominator floored at ``floor``.

    The floor turns the comparison absolute for gradients that are zero by
    construction (e.g. a key bias, to which softmax is invariant), where the
    finite-difference side is pure rounding noise.
    """
    num = np.linalg.norm(a - b)
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return float(num / max(den, floor))


def gradcheck(f: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-6,
              max_entries: int = 64, rng=None) -> float:
    """Worst relative error between backprop and central differences.

    Tensors should be float64.  For tensors with more than ``max_entries``
    elements a random subset is checked.
    """
    for t in tensors:
        t.grad = None
    f().backward()
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        if t.size > max_entries:
            idx = np.sort(rng.choice(t.size, size=max_entries, replace=False))
        else:
            idx = np.arange(t.size)
        numeric = numeric_grad(f, t, eps, idx)
        worst = max(worst, relative_error(analytic.reshape(-1)[idx], numeric.reshape(-1)[idx]))
    return worst
