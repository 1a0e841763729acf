"""Evaluation harness: post-attack accuracy grids over defended models.

A sweep crosses a list of defended models with an attack-strength grid and
yields one report row per (defense, strength), rows ordered defense-major.
Strength 0 always routes through the plain clean-accuracy path, so the first
row of each defense bit-equals the clean measurement of that checkpoint.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .attacks.pgd import AttackBudget, pgd_l2, pgd_linf
from .attacks.physical import (PatchConfig, eyeglass_attack, patch_apply_batch,
                               patch_train, sticker_attack)
from .attacks.roa import RoaConfig, roa_attack
from .defenses import SmoothingConfig, smoothed_predict
from .errors import ConfigError, ContractError
from .models import ModelParams, accuracy

log = logging.getLogger("occludox.harness")

ATTACK_KINDS = ("pgd", "pgd-l2", "roa", "roa-grad", "eyeglass", "sticker", "patch")


@dataclass(frozen=True)
class DefenseEntry:
    """A defended model under evaluation; ``smooth`` switches prediction to
    the randomized-smoothing vote."""
    ident: str
    params: ModelParams
    smooth: SmoothingConfig | None = None


@dataclass(frozen=True)
class AttackSetup:
    kind: str
    grid: tuple  # iteration counts, or area ratios for "patch"
    epsilon: float = 8.0 / 255.0  # unit scale
    step: float = 2.0 / 255.0
    roa: RoaConfig | None = None
    mask: object = None
    patch: PatchConfig | None = None
    design_set: object = None  # patch training images
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if not self.grid:
            raise ConfigError("empty strength grid")
        if any(g < 0 for g in self.grid):
            raise ConfigError("strengths must be non-negative")


def _chunks(n: int, parts: int):
    parts = max(1, min(parts, n))
    size = (n + parts - 1) // parts
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _map_ordered(fn, spans, threads: int):
    if threads <= 1 or len(spans) <= 1:
        return [fn(span) for span in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, spans))


def _predictions(entry: DefenseEntry, images: np.ndarray) -> np.ndarray:
    if entry.smooth is None:
        from .models import predict_logits
        return predict_logits(entry.params, images).argmax(axis=1)
    return np.array([smoothed_predict(entry.params, images[i], entry.smooth)
                     for i in range(images.shape[0])], dtype=np.int64)


def clean_accuracy(entry: DefenseEntry, dataset) -> float:
    if entry.smooth is None:
        return accuracy(entry.params, dataset)
    preds = _predictions(entry, np.asarray(dataset.images, dtype=np.float64))
    return float(np.mean(preds == np.asarray(dataset.labels)))


def _attacked_images(entry, images, labels, setup: AttackSetup, strength, threads):
    """Adversarial versions of ``images`` against the entry's base model."""
    params = entry.params
    kind = setup.kind
    iters = int(strength)
    if kind in ("pgd", "pgd-l2"):
        norm = "inf" if kind == "pgd" else "two"
        budget = AttackBudget(norm, setup.epsilon, setup.step, iters)
        attack = pgd_linf if kind == "pgd" else pgd_l2

        def run(span):
            s, e = span
            return attack(params, images[s:e], labels[s:e], budget)
    elif kind in ("roa", "roa-grad"):
        if setup.roa is None:
            raise ConfigError("roa attack needs a rectangle config")
        cfg = replace(setup.roa, inner=replace(setup.roa.inner, iterations=iters))
        search = "exhaustive" if kind == "roa" else "gradient"

        def run(span):
            s, e = span
            return roa_attack(params, images[s:e], labels[s:e], cfg, search=search)
    elif kind in ("eyeglass", "sticker"):
        if setup.mask is None:
            raise ConfigError(f"{kind} attack needs a mask")

        def run(span):
            s, e = span
            out = np.empty_like(images[s:e])
            for i in range(s, e):
                if kind == "eyeglass":
                    out[i - s] = eyeglass_attack(params, images[i], int(labels[i]),
                                                 setup.mask, iters, seed=setup.seed + i)
                else:
                    out[i - s] = sticker_attack(params, images[i], int(labels[i]),
                                                setup.mask, iters, seed=setup.seed + i)
            return out
    else:
        raise ConfigError(f"unknown attack kind {kind!r}")
    parts = _map_ordered(run, _chunks(images.shape[0], threads), threads)
    return np.concatenate(parts, axis=0)


def attacked_accuracy(entry: DefenseEntry, dataset, setup: AttackSetup,
                      strength, threads: int = 1) -> float:
    """Accuracy of the defended prediction on attacked test inputs; strength 0
    is the clean measurement."""
    if strength == 0:
        return clean_accuracy(entry, dataset)
    images = np.asarray(dataset.images, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if setup.kind == "patch":
        if setup.patch is None or setup.design_set is None:
            raise ConfigError("patch attack needs a patch config and design set")
        cfg = replace(setup.patch, ratio=float(strength))
        patch = patch_train(entry.params, setup.design_set, cfg, seed=setup.seed)
        adv = patch_apply_batch(images, patch, seed=setup.seed)
    else:
        adv = _attacked_images(entry, images, labels, setup, strength, threads)
    preds = _predictions(entry, adv)
    return float(np.mean(preds == labels))


def run_sweep(entries, dataset, setup: AttackSetup, threads: int = 1,
              attack_id: str | None = None):
    """Rows for every (defense, strength) pair, defense-major order.

    Returns a list of (defense id, attack id, param name, strength, accuracy,
    seconds) tuples for the report layer.
    """
    if not entries:
        raise ContractError("no defenses to sweep")
    param_name = "ratio" if setup.kind == "patch" else "iterations"
    ident = attack_id or setup.kind
    out = []
    for entry in entries:
        for strength in setup.grid:
            t0 = time.perf_counter()
            acc = attacked_accuracy(entry, dataset, setup, strength, threads)
            dt = time.perf_counter() - t0
            log.info("%s vs %s@%s: accuracy %.4f (%.1fs)",
                     entry.ident, ident, strength, acc, dt)
            out.append((entry.ident, ident, param_name, strength, acc, dt))
    return out
