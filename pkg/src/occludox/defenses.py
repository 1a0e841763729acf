"""Robust training procedures and randomized smoothing.

All variants share one minibatch loop; they differ only in how a batch is
perturbed before the gradient step. Randomness comes from substreams derived
from the run seed (init / shuffle / noise), so a degenerate perturbation
(epsilon 0, sigma 0) leaves the parameter trajectory bit-identical to clean
training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .attacks.pgd import AttackBudget, pgd_l2, pgd_linf
from .attacks.roa import RoaConfig, roa_attack
from .errors import ConfigError, ContractError, NumericError
from .models import (ConvNetSpec, ModelParams, build_cnn, loss_and_param_grads,
                     predict_logits)
from .optim import OptimState, optimizer_step
from .rng import SplitMix64

log = logging.getLogger("occludox.train")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch size must be >= 1")


def _dataset_arrays(dataset):
    if hasattr(dataset, "images"):
        images, labels = dataset.images, dataset.labels
    else:
        images, labels = dataset
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if images.shape[0] != labels.shape[0]:
        raise ContractError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if images.shape[0] == 0:
        raise ContractError("cannot train on an empty dataset")
    return images, labels


def fit(spec: ConvNetSpec, dataset, cfg: TrainConfig, perturb=None,
        init: ModelParams | None = None, loss_log: list | None = None) -> ModelParams:
    """Minibatch training; ``perturb(params, x, y, epoch, batch)`` maps each
    batch to the inputs actually differentiated (identity when None)."""
    images, labels = _dataset_arrays(dataset)
    n = images.shape[0]
    params = init.copy() if init is not None else build_cnn(spec, cfg.seed)
    state = OptimState(kind=cfg.optimizer, lr=cfg.lr, momentum=cfg.momentum)
    root = SplitMix64(cfg.seed)
    for epoch in range(cfg.epochs):
        if cfg.shuffle:
            order = root.derive("shuffle", epoch).shuffled_indices(n)
        else:
            order = np.arange(n, dtype=np.int64)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb, yb = images[idx], labels[idx]
            if perturb is not None:
                xb = perturb(params, xb, yb, epoch, b)
            loss, grads = loss_and_param_grads(params, xb, yb)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {b}")
            params = ModelParams(spec, optimizer_step(params.tensors, grads, state))
            total += loss * idx.shape[0]
        epoch_mean = total / n
        log.info("epoch %d mean loss %.6f", epoch, epoch_mean)
        if loss_log is not None:
            loss_log.append(epoch_mean)
    return params


def train_clean(spec, dataset, cfg, init=None, loss_log=None) -> ModelParams:
    return fit(spec, dataset, cfg, perturb=None, init=init, loss_log=loss_log)


def adversarial_train(spec, dataset, cfg, attack, search="exhaustive",
                      init=None, loss_log=None) -> ModelParams:
    """Training on attacked minibatches; ``attack`` is a PGD budget or an
    occlusion-rectangle config."""
    if isinstance(attack, AttackBudget):
        if attack.norm == "inf":
            def perturb(params, x, y, epoch, b):
                return pgd_linf(params, x, y, attack)
        else:
            def perturb(params, x, y, epoch, b):
                return pgd_l2(params, x, y, attack)
    elif isinstance(attack, RoaConfig):
        def perturb(params, x, y, epoch, b):
            return roa_attack(params, x, y, attack, search=search)
    else:
        raise ContractError(f"unsupported attack type {type(attack).__name__}")
    return fit(spec, dataset, cfg, perturb=perturb, init=init, loss_log=loss_log)


def curriculum_stages(start_eps: float, target_eps: float) -> list:
    """Doubling schedule [start, 2*start, ..., target] on the 0-255 scale."""
    if start_eps <= 0 or target_eps < start_eps:
        raise ConfigError(f"need 0 < start <= target, got {start_eps}, {target_eps}")
    stages = [float(start_eps)]
    while stages[-1] < target_eps:
        stages.append(stages[-1] * 2.0)
    if stages[-1] != float(target_eps):
        raise ConfigError(f"target {target_eps} is not start {start_eps} times a power of 2")
    return stages


def curriculum_adversarial_train(spec, dataset, cfg, start_eps, target_eps,
                                 iterations: int = 7, init=None) -> list:
    """One adversarial-training stage per doubling of epsilon, each stage
    warm-started from the previous stage's parameters. Epsilons are on the
    0-255 scale; the step size is epsilon/4 per stage. Returns the stage-end
    parameters, in order."""
    stages = curriculum_stages(start_eps, target_eps)
    results = []
    params = init
    for eps in stages:
        budget = AttackBudget.from_255("inf", eps, eps / 4.0, iterations)
        params = adversarial_train(spec, dataset, cfg, budget, init=params)
        results.append(params)
    return results


def doa_train(spec, dataset, cfg, roa: RoaConfig, search="exhaustive",
              init=None, loss_log=None) -> ModelParams:
    """Adversarial training with the occlusion rectangle as inner maximizer.

    Typically run as a short fine-tune of an already-trained model (pass
    ``init``) with Adam at lr 1e-4 for 5 epochs.
    """
    return adversarial_train(spec, dataset, cfg, roa, search=search,
                             init=init, loss_log=loss_log)


def doa_config(seed: int = 0, epochs: int = 5, batch_size: int = 32) -> TrainConfig:
    return TrainConfig(epochs=epochs, batch_size=batch_size, optimizer="adam",
                       lr=1e-4, seed=seed)


def gaussian_noise_train(spec, dataset, cfg, sigma: float,
                         init=None, loss_log=None) -> ModelParams:
    """Clean training on inputs with seeded N(0, sigma^2) noise added and
    clipped back to [0,1]."""
    if sigma < 0:
        raise ContractError("sigma must be >= 0")
    root = SplitMix64(cfg.seed)

    def perturb(params, x, y, epoch, b):
        noise = root.derive("noise", epoch, b).normal(x.shape)
        return np.clip(x + sigma * noise, 0.0, 1.0)

    return fit(spec, dataset, cfg, perturb=perturb, init=init, loss_log=loss_log)


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float
    samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ContractError("sigma must be >= 0")
        if self.samples < 1:
            raise ContractError("sample count must be >= 1")


_SMOOTH_CHUNK = 256


def smoothed_votes(params: ModelParams, image, cfg: SmoothingConfig) -> np.ndarray:
    """Vote counts of the base classifier over ``cfg.samples`` Gaussian
    perturbations of one image; per-sample noise comes from counter-derived
    substreams so the tally is independent of evaluation order."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ContractError("smoothed prediction works on a single image")
        x = x[0]
    base = SplitMix64(cfg.seed).derive("smooth")
    votes = np.zeros(params.spec.classes, dtype=np.int64)
    for start in range(0, cfg.samples, _SMOOTH_CHUNK):
        count = min(_SMOOTH_CHUNK, cfg.samples - start)
        noisy = np.empty((count,) + x.shape, dtype=np.float64)
        for i in range(count):
            noise = base.derive("sample", start + i).normal(x.shape)
            noisy[i] = x + cfg.sigma * noise
        preds = predict_logits(params, noisy).argmax(axis=1)
        votes += np.bincount(preds, minlength=params.spec.classes)
    return votes


def smoothed_predict(params: ModelParams, image, cfg: SmoothingConfig) -> int:
    """Plurality class over Gaussian votes; ties break to the lowest index."""
    return int(np.argmax(smoothed_votes(params, image, cfg)))
