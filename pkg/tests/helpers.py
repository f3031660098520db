"""Shared numeric oracles for the test suite.

The gradient helpers deliberately avoid torch.autograd on the oracle
side: analytic gradients are checked against plain float64 central
differences so the two routes stay independent.
"""

from __future__ import annotations

import numpy as np
import torch


def finite_difference_grad(f, x, step=1e-4):
    """Central-difference gradient of a scalar function of a numpy array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = float(f(x))
        flat[i] = orig - step
        f_minus = float(f(x))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def max_rel_error(analytic, numeric, floor=1e-6):
    """Worst entrywise relative disagreement between two gradient arrays."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    b = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def torch_fd_check(loss_fn, tensors, n_samples=6, step=1e-4, seed=0):
    """Compare autograd gradients of ``loss_fn()`` against central differences.

    ``tensors`` are leaf float64 tensors the loss depends on.  A random
    subset of entries in each tensor is perturbed in place; the worst
    relative error over all sampled entries is returned.
    """
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors, allow_unused=False)
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for tensor, grad in zip(tensors, grads):
            flat = tensor.reshape(-1)
            gflat = grad.reshape(-1)
            count = min(n_samples, flat.numel())
            idx = rng.choice(flat.numel(), size=count, replace=False)
            for i in idx:
                orig = float(flat[i])
                flat[i] = orig + step
                f_plus = float(loss_fn())
                flat[i] = orig - step
                f_minus = float(loss_fn())
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * step)
                analytic = float(gflat[i])
                denom = max(abs(analytic), abs(numeric), 1e-6)
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst
