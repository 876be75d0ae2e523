"""Oracle comparisons behind the ``gradcheck``/``proxcheck``/``importance-audit`` commands.

Each audit returns a plain dict with the measured errors and a ``passed`` flag.
"""

import numpy as np
from scipy.stats import spearmanr

from .data import make_synthetic
from .emcl import importance_taylor, prox_operator
from .nn import Batch, init_mlp
from .oracles import dataset_loss, finite_diff_grad, numeric_prox, zero_out_importance


def _near_kink(model, inputs, margin):
    x = inputs
    for W, b in model.layers()[:-1]:
        z = x @ W + b
        if np.abs(z).min() < margin:
            return True
        x = np.maximum(z, 0.0)
    return False


def relative_errors(analytic, numeric, atol=1e-8):
    """Elementwise relative error, ignoring entries where both sides are below ``atol``."""
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return np.where(scale >= atol, err / np.maximum(scale, atol), 0.0), err


def gradcheck(layer_sizes=(8, 5, 3), num_models=20, batch_size=4, seed=0,
              rtol=1e-6, atol=1e-8, step=1e-6):
    """Backprop vs central differences on ``num_models`` random models and batches."""
    rng = np.random.default_rng(seed)
    worst, medians, checked, failures = 0.0, [], 0, 0
    while checked < num_models:
        model = init_mlp(list(layer_sizes), int(rng.integers(2**31)))
        model.params += 0.1 * rng.normal(size=model.num_params)
        x = rng.normal(size=(batch_size, layer_sizes[0]))
        # a finite-difference stencil straddling a ReLU kink is not a valid reference
        if _near_kink(model, x, 1e-4):
            continue
        batch = Batch(x, rng.integers(0, layer_sizes[-1], size=batch_size))
        _, grad = model.loss_and_grad(batch)
        numeric = finite_diff_grad(lambda th: model.loss(batch, th), model.params, step)
        rel, err = relative_errors(grad, numeric, atol)
        bad = (err >= atol) & (rel >= rtol)
        worst = max(worst, float(rel.max()))
        failures += int(bad.sum())
        medians.append(float(np.median(rel)))
        checked += 1
    return {"models": checked, "num_params": model.num_params, "max_rel_error": worst,
            "median_rel_error": float(np.median(medians)), "tolerance": rtol,
            "failures": failures, "passed": failures == 0}


def proxcheck(num_draws=1000, seed=0, tol=1e-8):
    """Closed-form prox vs ternary-search minimization on random scalar draws."""
    rng = np.random.default_rng(seed)
    v = rng.uniform(-5, 5, num_draws)
    x0 = rng.uniform(-5, 5, num_draws)
    c = rng.uniform(0, 10, num_draws)
    gamma = rng.uniform(0.01, 2.0, num_draws)
    closed = prox_operator(v, x0, c, gamma)
    numeric = np.array([numeric_prox(v[i], x0[i], c[i], gamma[i]) for i in range(num_draws)])
    diff = np.abs(closed - numeric)
    return {"draws": num_draws, "max_abs_error": float(diff.max()),
            "median_abs_error": float(np.median(diff)), "tolerance": tol,
            "passed": bool(diff.max() < tol)}


def trained_logistic_model(dim=64, num_classes=10, per_class=40, lr=0.1, seed=0):
    """Softmax regression fit by one pass of minibatch SGD on a synthetic task."""
    data = make_synthetic(num_classes, dim, per_class, seed)
    model = init_mlp([dim, num_classes], seed)
    for start in range(0, len(data), 10):
        sl = slice(start, start + 10)
        _, g = model.loss_and_grad(Batch(data.inputs[sl], data.labels[sl]))
        model.params -= lr * g
    return model, data


def importance_audit(dim=64, num_classes=10, per_class=40, seed=0,
                     min_spearman=0.8, max_median_rel=0.5):
    """First-order importance vs exact zero-out loss change on a trained logistic model."""
    model, data = trained_logistic_model(dim, num_classes, per_class, seed=seed)
    _, g = model.loss_and_grad(Batch(data.inputs, data.labels))
    omega = importance_taylor(g, model.params)
    exact = zero_out_importance(model, dataset_loss(model), data)
    rho = float(spearmanr(omega, exact).statistic)
    rel = np.abs(omega - exact) / (np.abs(exact) + 1e-12)
    med = float(np.median(rel))
    return {"num_params": model.num_params, "spearman": rho, "median_rel_error": med,
            "max_abs_error": float(np.abs(omega - exact).max()),
            "passed": rho >= min_spearman and med < max_median_rel}
