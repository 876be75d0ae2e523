"""EMCL: meta-learning with an importance-weighted inner regularizer.

Per batch the meta-parameters ``theta0`` are adapted sample by sample with a
proximal gradient inner loop, then moved by the closed-form meta-gradient
``lam * h * (theta0 - theta_k)`` scaled by per-parameter meta learning rates.
Importance ``h`` (a moving average of first-order zero-out estimates) both
weights the inner regularizer and sets the meta learning rates.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np

from .data import TaskSequence
from .nn import MLP, Batch
from .training import TrainLog, build_model, run_online

LR_EPS = 1e-8

TAYLOR = "taylor"
SI_VARIANT = "si_variant"
RECURSIVE = "recursive"
STATELESS = "stateless"


@dataclass(frozen=True)
class EmclConfig:
    alpha0: float = 0.3
    beta: float = 0.15
    lam: float = 10.0
    gamma: float = 0.3
    eta: float = 0.9
    r: float = 1.0
    lr_bounds: Tuple[float, float] = (1e-5, 1.0)
    importance_mode: str = TAYLOR
    use_pgd: bool = True
    use_inner_reg: bool = True
    meta_lr_mode: str = RECURSIVE
    h_init: float = 1.0

    def __post_init__(self):
        lo, hi = self.lr_bounds
        if self.alpha0 <= 0 or self.beta <= 0 or self.gamma <= 0:
            raise ValueError("alpha0, beta and gamma must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.r <= 0:
            raise ValueError("r must be positive")
        if not 0 < lo <= self.alpha0 <= hi:
            raise ValueError(f"need 0 < lr_min <= alpha0 <= lr_max, got {self.lr_bounds}")
        if self.importance_mode not in (TAYLOR, SI_VARIANT):
            raise ValueError(f"unknown importance_mode {self.importance_mode!r}")
        if self.meta_lr_mode not in (RECURSIVE, STATELESS):
            raise ValueError(f"unknown meta_lr_mode {self.meta_lr_mode!r}")
        if self.h_init < 0:
            raise ValueError("h_init must be nonnegative")

    def validate_for_training(self):
        if self.lam == 0:
            raise ValueError("lam=0 makes the meta-gradient identically zero")


@dataclass
class ImportanceState:
    h: np.ndarray
    last_omega: np.ndarray
    step: int = 0


@dataclass
class MetaLRState:
    alpha: np.ndarray


@dataclass
class EmclState:
    theta0: np.ndarray
    importance: ImportanceState
    meta_lr: MetaLRState
    config: EmclConfig
    step: int = 0

    @classmethod
    def initial(cls, theta0, config: EmclConfig):
        p = len(theta0)
        return cls(
            theta0=np.array(theta0, dtype=np.float64),
            importance=ImportanceState(np.full(p, config.h_init), np.zeros(p)),
            meta_lr=MetaLRState(np.full(p, config.alpha0)),
            config=config,
        )

    def copy(self):
        return EmclState(
            self.theta0.copy(),
            ImportanceState(self.importance.h.copy(), self.importance.last_omega.copy(),
                            self.importance.step),
            MetaLRState(self.meta_lr.alpha.copy()),
            self.config,
            self.step,
        )


def inner_loss(model: MLP, theta, theta0, h, lam, batch: Batch) -> float:
    """Empirical loss at ``theta`` plus ``lam/2 * sum(h * (theta - theta0)**2)``."""
    d = theta - theta0
    return model.loss(batch, theta) + 0.5 * lam * float(np.dot(h * d, d))


def inner_grad_step(model: MLP, theta, sample: Batch, beta):
    """Plain gradient step on the empirical loss of one example."""
    _, g = model.loss_and_grad(sample, theta)
    return theta - beta * g


def prox_operator(v, x0, c, gamma):
    """Proximal map of ``c * ||x - x0||^2`` with scaling ``gamma``."""
    if np.any(np.asarray(gamma) <= 0):
        raise ValueError("gamma must be positive")
    c = np.asarray(c, dtype=np.float64)
    if np.any(c < 0):
        raise ValueError("c must be nonnegative")
    k = 2.0 * gamma * c
    return (v + k * x0) / (k + 1.0)


def prox_step(hat_theta, theta0, h, gamma, lam):
    """Closed-form prox of the importance-weighted regularizer, elementwise."""
    k = gamma * lam * h
    return (hat_theta + k * theta0) / (k + 1.0)


def inner_loop(model: MLP, theta0, batch: Batch, h, config: EmclConfig):
    """Adapt ``theta0`` to ``batch`` one example at a time; returns ``theta_k``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    beta, lam = config.beta, config.lam
    theta = theta0.copy()
    if config.use_inner_reg and config.use_pgd and lam != 0:
        k = config.gamma * lam * h
        scale = 1.0 / (k + 1.0)
        shift = k * theta0 * scale
        for i in range(len(batch)):
            _, g = model.loss_and_grad(batch[i], theta)
            theta -= beta * g
            # prox_step with the per-batch constants hoisted out of the loop
            theta *= scale
            theta += shift
    elif config.use_inner_reg and not config.use_pgd:
        lh = lam * h
        for i in range(len(batch)):
            _, g = model.loss_and_grad(batch[i], theta)
            theta -= beta * (g + lh * (theta - theta0))
    else:
        # without a regularizer (or with lam=0 the prox is the identity)
        for i in range(len(batch)):
            _, g = model.loss_and_grad(batch[i], theta)
            theta -= beta * g
    return theta


def importance_taylor(grad_at_theta0, theta0):
    return np.abs(grad_at_theta0 * theta0)


def importance_si_variant(grad, delta_theta):
    return np.abs(grad * delta_theta)


def update_importance_ma(h, omega, eta):
    return eta * h + (1.0 - eta) * omega


def update_meta_lr(alpha, h, config: EmclConfig):
    base = alpha if config.meta_lr_mode == RECURSIVE else config.alpha0
    lo, hi = config.lr_bounds
    return np.clip(base * config.r / np.maximum(h, LR_EPS), lo, hi)


def meta_gradient(theta0, theta_k, h, lam):
    return lam * h * (theta0 - theta_k)


def emcl_train_step(model: MLP, state: EmclState, batch: Batch):
    """One meta-step; returns ``(new_state, loss_at_theta0)``.

    The inner loop and meta-update use the importance and learning rates from
    before this step; importance and rates are refreshed afterwards.
    """
    cfg = state.config
    theta0 = state.theta0
    h = state.importance.h
    alpha = state.meta_lr.alpha

    loss0, g0 = model.loss_and_grad(batch, theta0)
    theta_k = inner_loop(model, theta0, batch, h, cfg)
    new_theta0 = theta0 - alpha * meta_gradient(theta0, theta_k, h, cfg.lam)

    if cfg.importance_mode == TAYLOR:
        omega = importance_taylor(g0, theta0)
    else:
        omega = importance_si_variant(g0, theta_k - theta0)
    new_h = update_importance_ma(h, omega, cfg.eta)
    new_alpha = update_meta_lr(alpha, new_h, cfg)

    new_state = EmclState(
        theta0=new_theta0,
        importance=ImportanceState(new_h, omega, state.importance.step + 1),
        meta_lr=MetaLRState(new_alpha),
        config=cfg,
        step=state.step + 1,
    )
    return new_state, loss0


def emcl_train(task_sequence: TaskSequence, config: EmclConfig,
               eval_hook: Optional[Callable] = None, hidden_sizes=(100, 100),
               batch_size=10, seed=0, model: Optional[MLP] = None):
    """Run EMCL over the task sequence in a single pass.

    ``eval_hook(model, s)`` is called after task ``s`` and returns accuracies
    for tasks ``0..s``.  Returns ``(model, AccuracyMatrix, TrainLog)``.
    """
    config.validate_for_training()
    if model is None:
        model = build_model(task_sequence, hidden_sizes, seed)
    state = EmclState.initial(model.params, config)
    log = TrainLog()

    def step(batch):
        nonlocal state
        state, loss = emcl_train_step(model, state, batch)
        model.assign(state.theta0)
        log.mean_h.append(float(state.importance.h.mean()))
        log.mean_alpha.append(float(state.meta_lr.alpha.mean()))
        log.inner_steps += len(batch)
        return loss

    matrix, log = run_online(task_sequence, model, step, eval_hook, batch_size, seed, log=log)
    return model, matrix, log


def ablation(config: EmclConfig, name: str) -> EmclConfig:
    """Named ablation variants of a base config."""
    variants = {
        "full": {},
        "no_pgd": {"use_pgd": False},
        "no_inner_reg": {"use_inner_reg": False, "use_pgd": False},
        "si": {"importance_mode": SI_VARIANT},
    }
    return replace(config, **variants[name])
