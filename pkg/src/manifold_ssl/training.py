"""Optimization drivers.

One epoch is one pass over the unlabelled set in batches of batch_unlabelled;
the labelled batch is resampled every step. Warmup epochs run the supervised
objective alone; the consistency term switches on afterwards, with targets
frozen per step (current parameters for the pi model, the exponential moving
average for the mean teacher). The averaging starts at the end of warmup,
initialized to the parameters at that point, and is updated after every
optimizer step.

The averaging coefficient is exposed directly as beta_mt; a per-step rate
alpha with coefficient (1 - alpha * eta) maps onto it via
alpha = (1 - beta_mt) / eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import network, objectives
from .manifold import AugmentationSpec, Dataset
from .network import NetworkGrads, NetworkParams, PARAM_FIELDS
from .numerics import RngState, rk4_trajectory

CSV_HEADER = ("run_id,method,seed,epoch,lambda,epsilon,k,beta_mt,"
              "train_loss,test_nll,test_acc,consistency_value")

METHODS = ("supervised", "pi_model", "mean_teacher")


@dataclass
class OptState:
    velocity: NetworkGrads
    eta: float
    momentum: float


def opt_new(params: NetworkParams, eta: float, momentum: float) -> OptState:
    if eta <= 0:
        raise ValueError(f"opt_new: eta must be positive, got {eta}")
    if not 0 <= momentum < 1:
        raise ValueError(f"opt_new: momentum must be in [0, 1), got {momentum}")
    return OptState(velocity=network.zero_grads(params), eta=eta,
                    momentum=momentum)


def sgd_momentum_step(opt: OptState, params: NetworkParams,
                      grads: NetworkGrads):
    """Heavy-ball update: v <- momentum*v + g; theta <- theta - eta*v."""
    for name in PARAM_FIELDS:
        if not np.all(np.isfinite(getattr(grads, name))):
            raise ValueError(
                f"sgd_momentum_step: non-finite gradient in parameter block {name}")
    velocity = network.grads_add(network.grads_scale(opt.velocity, opt.momentum),
                                 grads)
    new_params = network.params_axpy(params, -opt.eta, velocity)
    return OptState(velocity=velocity, eta=opt.eta, momentum=opt.momentum), new_params


@dataclass
class EmaState:
    theta_avg: NetworkParams
    beta_mt: float


def ema_update(ema: EmaState, params: NetworkParams) -> EmaState:
    """avg <- beta_mt * avg + (1 - beta_mt) * theta."""
    b = ema.beta_mt
    avg = ema.theta_avg
    new_avg = NetworkParams(W1=b * avg.W1 + (1 - b) * params.W1,
                            b1=b * avg.b1 + (1 - b) * params.b1,
                            w2=b * avg.w2 + (1 - b) * params.w2,
                            b2=float(b * avg.b2 + (1 - b) * params.b2))
    return EmaState(theta_avg=new_avg, beta_mt=b)


@dataclass
class TrainConfig:
    method: str = "pi_model"
    epochs: int = 200
    warmup_epochs: int = 25
    lam: float = 10.0
    eta: float = 0.01
    momentum: float = 0.9
    batch_labelled: int = 10
    batch_unlabelled: int = 100
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    beta_mt: float = 0.99
    draws_per_sample: int = 1
    loss: str = "logistic"
    hidden: int = 64
    seed: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"TrainConfig: unknown method {self.method!r}")
        if self.lam < 0:
            raise ValueError(f"TrainConfig: lambda must be >= 0, got {self.lam}")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError(
                f"TrainConfig: warmup_epochs must be in [0, epochs], got "
                f"{self.warmup_epochs} vs {self.epochs}")
        if not 0 <= self.beta_mt < 1:
            raise ValueError(
                f"TrainConfig: beta_mt must be in [0, 1), got {self.beta_mt}")


@dataclass
class TrainRecord:
    run_id: str
    method: str
    seed: int
    epoch: int
    lam: float
    epsilon: float
    k: int
    beta_mt: float
    train_loss: float
    test_nll: float
    test_acc: float
    consistency_value: float

    def csv_row(self) -> str:
        return ",".join([
            self.run_id, self.method, str(self.seed), str(self.epoch),
            repr(float(self.lam)), repr(float(self.epsilon)), str(self.k),
            repr(float(self.beta_mt)), repr(float(self.train_loss)),
            repr(float(self.test_nll)), repr(float(self.test_acc)),
            repr(float(self.consistency_value))])


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    lines.extend(r.csv_row() for r in records)
    return "\n".join(lines) + "\n"


def _test_metrics(params, dataset, kind):
    if dataset.x_test.shape[0] == 0:
        return math.nan, math.nan
    f = network.forward_batch(params, dataset.x_test)
    values, _ = objectives.LOSSES[kind](f, dataset.y_test)
    nll = float(values.mean())
    if kind == "logistic":
        predicted = np.where(f >= 0.0, 1.0, -1.0)  # sign(0) := +1
        acc = float(np.mean(predicted == dataset.y_test))
    else:
        acc = math.nan
    return nll, acc


def _labelled_batch(rng, n_labelled, batch_size):
    if batch_size >= n_labelled:
        return np.arange(n_labelled)
    return rng.choice(n_labelled, size=batch_size, replace=False)


def _train(config: TrainConfig, dataset: Dataset, augmenter, rng: RngState,
           params0=None, epoch_hook=None, run_id: str = "run"):
    method = config.method
    n_lab = dataset.x_labelled.shape[0]
    n_unl = dataset.x_unlabelled.shape[0]
    if n_lab == 0:
        raise ValueError("_train: labelled set is empty")
    if method != "supervised" and n_unl == 0:
        raise ValueError(f"_train: method {method} needs unlabelled samples")

    params = (network.params_copy(params0) if params0 is not None
              else network.init_network(rng, dataset.x_labelled.shape[1],
                                        config.hidden))
    opt = opt_new(params, config.eta, config.momentum)
    ema = None
    eps = config.augmentation.epsilon
    k = config.augmentation.k
    steps_per_epoch = max(1, math.ceil(n_unl / config.batch_unlabelled)) if n_unl else 1
    records = []

    for epoch in range(1, config.epochs + 1):
        # lam == 0 or eps == 0 contribute an exactly-zero consistency
        # gradient, so those steps skip the term (and its rng draws) and
        # reproduce the supervised trajectory bit for bit.
        consistency_on = (method != "supervised" and epoch > config.warmup_epochs
                          and config.lam > 0 and eps > 0)
        if method == "mean_teacher" and epoch == config.warmup_epochs + 1:
            ema = EmaState(theta_avg=network.params_copy(params),
                           beta_mt=config.beta_mt)
        perm = rng.permutation(n_unl) if consistency_on else None
        cons_values = []
        for step in range(steps_per_epoch):
            lab_idx = _labelled_batch(rng, n_lab, config.batch_labelled)
            sup = objectives.supervised_batch(
                params, dataset.x_labelled[lab_idx], dataset.y_labelled[lab_idx],
                config.loss)
            grads = sup.grads
            if consistency_on:
                unl_idx = perm[step * config.batch_unlabelled:
                               (step + 1) * config.batch_unlabelled]
                target_params = ema.theta_avg if ema is not None else params
                reg = objectives.balanced_regularizer(
                    params,
                    (dataset.z_labelled[lab_idx], dataset.x_labelled[lab_idx]),
                    (dataset.z_unlabelled[unl_idx], dataset.x_unlabelled[unl_idx]),
                    augmenter, rng, config.draws_per_sample,
                    target_params=target_params)
                grads = network.grads_add(grads,
                                          network.grads_scale(reg.grads, config.lam))
                cons_values.append(reg.value)
            opt, params = sgd_momentum_step(opt, params, grads)
            if ema is not None:
                ema = ema_update(ema, params)

        train_loss = objectives.supervised_batch(
            params, dataset.x_labelled, dataset.y_labelled, config.loss).value
        test_nll, test_acc = _test_metrics(params, dataset, config.loss)
        records.append(TrainRecord(
            run_id=run_id, method=method, seed=config.seed, epoch=epoch,
            lam=config.lam, epsilon=eps, k=k,
            beta_mt=config.beta_mt if method == "mean_teacher" else math.nan,
            train_loss=train_loss, test_nll=test_nll, test_acc=test_acc,
            consistency_value=float(np.mean(cons_values)) if cons_values else 0.0))
        if epoch_hook is not None:
            epoch_hook(epoch, params)
    return params, ema, records


def train_supervised(config: TrainConfig, dataset: Dataset, rng: RngState,
                     params0=None, epoch_hook=None, run_id: str = "run"):
    """Mini-batch SGD on the labelled loss alone; lambda is ignored."""
    cfg = replace(config, method="supervised")
    params, _, records = _train(cfg, dataset, None, rng, params0=params0,
                                epoch_hook=epoch_hook, run_id=run_id)
    return params, records


def train_pi_model(config: TrainConfig, dataset: Dataset, augmenter,
                   rng: RngState, params0=None, epoch_hook=None,
                   run_id: str = "run"):
    """Warmup, then joint supervised + lambda * consistency steps with
    per-step frozen targets from the current parameters."""
    cfg = replace(config, method="pi_model")
    params, _, records = _train(cfg, dataset, augmenter, rng, params0=params0,
                                epoch_hook=epoch_hook, run_id=run_id)
    return params, records


def train_mean_teacher(config: TrainConfig, dataset: Dataset, augmenter,
                       beta_mt: float, rng: RngState, params0=None,
                       epoch_hook=None, run_id: str = "run"):
    """Pi model with consistency targets from the parameter average."""
    cfg = replace(config, method="mean_teacher", beta_mt=beta_mt)
    params, ema, records = _train(cfg, dataset, augmenter, rng, params0=params0,
                                  epoch_hook=epoch_hook, run_id=run_id)
    ema_params = ema.theta_avg if ema is not None else network.params_copy(params)
    return params, ema_params, records


# ---------------------------------------------------------------------------
# Full-batch deterministic objective for the small-learning-rate study. The
# frozen augmentation draws are materialized once as augmented inputs, which
# makes the stochastic regularizer a fixed function of the parameters.
# ---------------------------------------------------------------------------

def frozen_objective_grads(params: NetworkParams, dataset: Dataset,
                           xs_aug_labelled: np.ndarray,
                           xs_aug_unlabelled: np.ndarray, lam: float,
                           loss: str = "logistic"):
    sup = objectives.supervised_batch(params, dataset.x_labelled,
                                      dataset.y_labelled, loss)
    value, grads = sup.value, sup.grads
    if lam > 0:
        frozen = _FrozenAugmenter(xs_aug_labelled, xs_aug_unlabelled)
        reg = objectives.balanced_regularizer(
            params, (dataset.z_labelled, dataset.x_labelled),
            (dataset.z_unlabelled, dataset.x_unlabelled), frozen, rng=None)
        value = value + lam * reg.value
        grads = network.grads_add(grads, network.grads_scale(reg.grads, lam))
    return value, grads


class _FrozenAugmenter:
    """Replays precomputed augmented inputs; full-batch calls only."""

    def __init__(self, xs_aug_labelled, xs_aug_unlabelled):
        self._by_rows = {xs_aug_labelled.shape[0]: xs_aug_labelled,
                         xs_aug_unlabelled.shape[0]: xs_aug_unlabelled}

    def __call__(self, zs, xs, rng):
        return self._by_rows[xs.shape[0]]


def gradient_flow_trajectory(config: TrainConfig, dataset: Dataset,
                             frozen_augmented, dt: float, horizon: float,
                             rng: RngState | None = None, params0=None):
    """RK4 integration of the full-batch negative-gradient field of the
    frozen-draw objective. frozen_augmented is the (labelled, unlabelled)
    pair of augmented-input arrays. Returns (times, states, template) with
    flat parameter vectors as states."""
    xs_aug_lab, xs_aug_unl = frozen_augmented
    if params0 is None:
        if rng is None:
            raise ValueError("gradient_flow_trajectory: need rng or params0")
        params0 = network.init_network(rng, dataset.x_labelled.shape[1],
                                       config.hidden)
    template = network.params_copy(params0)

    def neg_grad_field(vec):
        p = network.vector_to_params(vec, template)
        _, grads = frozen_objective_grads(p, dataset, xs_aug_lab, xs_aug_unl,
                                          config.lam, config.loss)
        return -network.grads_to_vector(grads)

    times, states = rk4_trajectory(neg_grad_field,
                                   network.params_to_vector(params0), dt, horizon)
    return times, states, template
