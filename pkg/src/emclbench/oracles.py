"""Brute-force reference computations used to check the fast paths.

Nothing here shares code with the optimizers it checks.
"""

import numpy as np

from .nn import Batch

MAX_ZERO_OUT_PARAMS = 10_000


def finite_diff_grad(loss_fn, theta, step=1e-6):
    """Central differences of ``loss_fn`` at ``theta``, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for m in range(theta.size):
        orig = theta.flat[m]
        theta.flat[m] = orig + step
        up = loss_fn(theta)
        theta.flat[m] = orig - step
        down = loss_fn(theta)
        theta.flat[m] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"non-finite loss while perturbing coordinate {m}")
        grad.flat[m] = (up - down) / (2.0 * step)
    return grad


def _ternary_min(diff, lo, hi, tol):
    """Ternary search given ``diff(a, b) = f(a) - f(b)``."""
    while hi - lo > tol:
        a = lo + (hi - lo) / 3.0
        b = hi - (hi - lo) / 3.0
        if diff(a, b) < 0:
            hi = b
        else:
            lo = a
    return 0.5 * (lo + hi)


def numeric_prox(v, x0, c, gamma, tol=1e-10):
    """Minimize ``c (x - x0)^2 + (x - v)^2 / (2 gamma)`` per coordinate by ternary search."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    v, x0, c = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (v, x0, c)))
    if np.any(c < 0):
        raise ValueError("c must be nonnegative")
    out = np.empty(v.shape)
    for i in np.ndindex(v.shape):
        vi, xi, ci = float(v[i]), float(x0[i]), float(c[i])
        if ci == 0.0 or vi == xi:
            out[i] = vi
            continue
        # l(a) - l(b) factored as (a - b) * (...): comparing raw objective values
        # loses the ordering to rounding once the bracket is ~1e-8 wide
        def diff(a, b, ci=ci, xi=xi, vi=vi):
            return (a - b) * (ci * (a + b - 2.0 * xi) + (a + b - 2.0 * vi) / (2.0 * gamma))
        out[i] = _ternary_min(diff, min(vi, xi) - 1.0, max(vi, xi) + 1.0, tol)
    return out if out.ndim else float(out)


def zero_out_importance(model, loss_fn, dataset):
    """``|L(theta) - L(theta with coordinate m set to 0)|`` for every m, by re-evaluation.

    ``model`` supplies ``flatten()``; ``loss_fn(theta, dataset)`` evaluates the loss.
    """
    theta = np.array(model.flatten(), dtype=np.float64)
    if theta.size > MAX_ZERO_OUT_PARAMS:
        raise ValueError(f"{theta.size} parameters exceeds the {MAX_ZERO_OUT_PARAMS} limit")
    base = loss_fn(theta, dataset)
    out = np.empty(theta.size)
    for m in range(theta.size):
        orig = theta[m]
        if orig == 0.0:
            out[m] = 0.0
            continue
        theta[m] = 0.0
        out[m] = abs(base - loss_fn(theta, dataset))
        theta[m] = orig
    return out


def dataset_loss(model):
    """``loss_fn(theta, dataset)`` closure for an MLP evaluated on a whole dataset."""
    def loss_fn(theta, dataset):
        return model.loss(Batch(dataset.inputs, dataset.labels), theta)
    return loss_fn


def model_loss_fn(model, batch):
    """Flat-parameter loss closure for an MLP on a fixed batch."""
    return lambda theta: model.loss(batch, theta)
