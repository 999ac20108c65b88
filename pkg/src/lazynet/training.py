"""Trainers: lazy-regime SGD and projected adversarial training.

Both train only the hidden weights; the sign top layer never moves. The
standard trainer stops the moment an update would leave the lazy ball
(the offending update is reverted, so returned weights always satisfy the
constraint). The adversarial trainer regenerates PGD examples from the
clean inputs every epoch, takes one minibatch SGD pass over them, then
projects every column back onto its ball. Inner-attack defaults are the
common PGD schedule, 100 steps of size alpha = 2.5*budget/100.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .attacks import pgd_attack_batch
from .errors import DivergenceError, EmptyDatasetError
from .network import (_check_batch, accuracy, lazy_deviation, logistic_loss,
                      project_weights)
from .numerics import make_rng


@dataclass
class TrainConfig:
    """Knobs for both trainers; unused fields are ignored by each."""

    lr: float = 0.1               # standard SGD rate
    beta: float = 0.01            # adversarial SGD rate
    batch_size: int = 128
    max_epochs: int = 50
    patience: int = 5             # epochs without improvement before stopping
    seed: int = 0
    c0: float | None = 10.0      # weight ball radius is c0/sqrt(m) ...
    radius: float | None = None  # ... unless an explicit radius is given
    pgd_budget: float = 0.1       # input ball radius R (adversarial only)
    pgd_steps: int = 100          # inner ascent steps T2
    pgd_alpha: float | None = None  # ascent step, default 2.5*pgd_budget/100


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    robust_accuracy: float        # NaN for the standard trainer
    lazy_deviation: float


@dataclass
class TrainReport:
    stop_reason: str              # "lazy-exit" | "patience" | "max-epochs"
    epochs: list = field(default_factory=list)
    steps_committed: int = 0
    config: dict = field(default_factory=dict)


def _resolve_radius(cfg, m):
    if cfg.radius is not None:
        radius = float(cfg.radius)
    elif cfg.c0 is not None:
        radius = float(cfg.c0) / np.sqrt(m)
    else:
        raise ValueError("config needs c0 or an explicit radius")
    if radius < 0:
        raise ValueError(f"weight ball radius must be >= 0, got {radius}")
    return radius


def _prepare(params, data, cfg):
    x, y = _check_batch(params, data.x, data.y)
    if x.shape[0] == 0:
        raise EmptyDatasetError("training set is empty")
    if cfg.batch_size < 1 or cfg.max_epochs < 1:
        raise ValueError("batch_size and max_epochs must be >= 1")
    return x, y


def _minibatch_pass(params, w, x, y, order, lr, batch_size, w0=None,
                    radius=None):
    """One shuffled pass of minibatch SGD on the logistic loss.

    Updates w in place and returns (committed_steps, exited). With w0 and
    radius given, an update that would push any column out of the ball is
    reverted and the pass stops (exited=True). The gradient matches
    network.weight_gradient evaluated at the current w.
    """
    a = params.a
    root_m = np.sqrt(params.m)
    committed = 0
    for start in range(0, len(order), batch_size):
        sel = order[start:start + batch_size]
        xb, yb = x[sel], y[sel]
        z = xb @ w
        f = np.maximum(z, 0.0) @ a / root_m
        loss = np.mean(np.logaddexp(0.0, -yb * f))
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss {loss}")
        coef = -yb * expit(-yb * f) / root_m
        grad = xb.T @ ((z > 0.0) * (coef[:, None] * a)) / len(sel)
        w_next = w - lr * grad
        if radius is not None:
            if np.linalg.norm(w_next - w0, axis=0).max() > radius:
                return committed, True
        w[...] = w_next
        committed += 1
    return committed, False


def sgd_lazy_train(params, data, cfg):
    """Minibatch SGD on the logistic loss, stopped at the lazy-ball edge.

    The deviation check runs after every update; the update that would
    exceed c0/sqrt(m) is rolled back and training ends with reason
    "lazy-exit". Clean accuracy drives the patience stop.
    """
    x, y = _prepare(params, data, cfg)
    radius = _resolve_radius(cfg, params.m)
    rng = make_rng(cfg.seed)
    w = params.w.copy(order="F")
    report = TrainReport(stop_reason="max-epochs",
                         config={"trainer": "sgd", "lr": cfg.lr,
                                 "batch_size": cfg.batch_size,
                                 "max_epochs": cfg.max_epochs,
                                 "patience": cfg.patience, "seed": cfg.seed,
                                 "radius": radius})
    best_acc = -np.inf
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x))
        steps, exited = _minibatch_pass(params, w, x, y, order, cfg.lr,
                                        cfg.batch_size, w0=params.w0,
                                        radius=radius)
        report.steps_committed += steps
        p_cur = replace(params, w=w)
        acc = accuracy(p_cur, x, y)
        report.epochs.append(EpochStats(epoch=epoch,
                                        loss=logistic_loss(p_cur, x, y),
                                        accuracy=acc,
                                        robust_accuracy=float("nan"),
                                        lazy_deviation=lazy_deviation(p_cur)))
        if exited:
            report.stop_reason = "lazy-exit"
            break
        if acc > best_acc:
            best_acc = acc
            stale = 0
        else:
            stale += 1
            if cfg.patience > 0 and stale >= cfg.patience:
                report.stop_reason = "patience"
                break
    return replace(params, w=w), report


def projected_adversarial_train(params, data, cfg):
    """Adversarial training with per-epoch weight projection.

    Each epoch: build PGD examples from the clean inputs against the current
    weights, run one shuffled minibatch SGD pass over them at rate beta,
    then project every column onto B(w0_s, radius). Robust training accuracy
    (on this epoch's adversarial examples, measured after the update and
    projection) drives the patience stop. Returned weights always satisfy
    the ball constraint because of the final projection.
    """
    x, y = _prepare(params, data, cfg)
    norms = np.linalg.norm(x, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-6:
        raise ValueError("adversarial training expects unit-norm inputs")
    radius = _resolve_radius(cfg, params.m)
    if cfg.pgd_budget <= 0:
        raise ValueError(f"pgd_budget must be > 0, got {cfg.pgd_budget}")
    if cfg.pgd_steps < 1:
        raise ValueError(f"pgd_steps must be >= 1, got {cfg.pgd_steps}")
    alpha = (cfg.pgd_alpha if cfg.pgd_alpha is not None
             else 2.5 * cfg.pgd_budget / 100.0)
    rng = make_rng(cfg.seed)
    w = params.w.copy(order="F")
    yf = y.astype(np.float64)
    report = TrainReport(stop_reason="max-epochs",
                         config={"trainer": "advtrain", "beta": cfg.beta,
                                 "batch_size": cfg.batch_size,
                                 "max_epochs": cfg.max_epochs,
                                 "patience": cfg.patience, "seed": cfg.seed,
                                 "radius": radius, "pgd_budget": cfg.pgd_budget,
                                 "pgd_steps": cfg.pgd_steps,
                                 "pgd_alpha": alpha})
    best_robust = -np.inf
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        p_cur = replace(params, w=w)
        x_adv, _, _ = pgd_attack_batch(p_cur, x, yf, cfg.pgd_budget,
                                       steps=cfg.pgd_steps, alpha=alpha)
        order = rng.permutation(len(x))
        steps, _ = _minibatch_pass(params, w, x_adv, y, order, cfg.beta,
                                   cfg.batch_size)
        report.steps_committed += steps
        p_cur = project_weights(replace(params, w=w), radius)
        w = p_cur.w
        robust = accuracy(p_cur, x_adv, y)
        report.epochs.append(EpochStats(epoch=epoch,
                                        loss=logistic_loss(p_cur, x_adv, y),
                                        accuracy=accuracy(p_cur, x, y),
                                        robust_accuracy=robust,
                                        lazy_deviation=lazy_deviation(p_cur)))
        if robust > best_robust:
            best_robust = robust
            stale = 0
        else:
            stale += 1
            if cfg.patience > 0 and stale >= cfg.patience:
                report.stop_reason = "patience"
                break
    return replace(params, w=w), report
