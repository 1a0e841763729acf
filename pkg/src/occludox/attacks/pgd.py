"""Projected gradient descent attacks, l-infinity and l2.

Both attacks maximize the classification loss. Budgets carry values on the
unit pixel scale; config files use the 0-255 convention and are converted
once at parse time (see AttackBudget.from_255).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, ShapeError
from ..masks import Mask
from ..models import batch_losses, losses_and_input_grad


@dataclass(frozen=True)
class AttackBudget:
    norm: str  # "inf" or "two"
    epsilon: float  # unit scale, [0, 1]
    step: float
    iterations: int
    keep_best: bool = True

    def __post_init__(self):
        if self.norm not in ("inf", "two"):
            raise ContractError(f"unknown norm {self.norm!r}")
        if self.epsilon < 0:
            raise ContractError("epsilon must be >= 0")
        if self.iterations < 0:
            raise ContractError("iterations must be >= 0")
        if self.iterations > 0 and self.step <= 0:
            raise ContractError("step must be > 0 when iterations > 0")
        if self.epsilon > 1 or self.step > 1:
            raise ContractError("internal epsilon/step must lie in [0, 1]; "
                                "divide 0-255 scale values by 255 first")

    @classmethod
    def from_255(cls, norm, epsilon, step, iterations, keep_best=True):
        return cls(norm, epsilon / 255.0, step / 255.0, iterations, keep_best)


def _as_batch(image, label):
    x = np.asarray(image, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"expected (C,H,W) or (B,C,H,W) image, got {x.shape}")
    y = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if y.shape[0] != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} images but {y.shape[0]} labels")
    return x, y, single


def _mask_multiplier(mask, batch_shape):
    """Float 0/1 multiplier broadcastable to (B,C,H,W), or None for all-ones."""
    if mask is None:
        return None
    b, _, h, w = batch_shape
    if isinstance(mask, Mask):
        mask.check_image((h, w))
        return mask.grid[None, None].astype(np.float64)
    m = np.asarray(mask)
    if m.dtype != np.bool_:
        raise ShapeError("mask array must be boolean")
    if m.shape == (h, w):
        return m[None, None].astype(np.float64)
    if m.shape == (b, h, w):
        return m[:, None].astype(np.float64)
    raise ShapeError(f"mask shape {m.shape} does not fit batch {batch_shape}")


def _update_best(best_x, best_loss, x, losses):
    # strict > keeps the earliest iterate on ties, so a zero-gradient run
    # returns its start bit-exactly
    better = losses > best_loss
    if better.any():
        best_x[better] = x[better]
    np.maximum(best_loss, losses, out=best_loss)


def pgd_linf(params, image, label, budget: AttackBudget, mask=None):
    """Sign-of-gradient ascent projected to the epsilon box and [0,1].

    Pixels where the mask is false are bit-identical to the input. With
    keep_best the highest-loss iterate seen (including the start) is returned.
    """
    if budget.norm != "inf":
        raise ContractError(f"pgd_linf needs an inf-norm budget, got {budget.norm!r}")
    x0, y, single = _as_batch(image, label)
    m = _mask_multiplier(mask, x0.shape)
    x = x0.copy()
    if budget.iterations == 0:
        return x[0] if single else x
    lo = np.maximum(x0 - budget.epsilon, 0.0)
    hi = np.minimum(x0 + budget.epsilon, 1.0)
    best_x = x0.copy()
    best_loss = np.full(x0.shape[0], -np.inf)
    for _ in range(budget.iterations):
        losses, g = losses_and_input_grad(params, x, y)
        if budget.keep_best:
            _update_best(best_x, best_loss, x, losses)
        step = budget.step * np.sign(g)
        if m is not None:
            step = step * m
        x = np.clip(x + step, lo, hi)
    if not budget.keep_best:
        return x[0] if single else x
    _update_best(best_x, best_loss, x, batch_losses(params, x, y))
    return best_x[0] if single else best_x


def pgd_l2(params, image, label, budget: AttackBudget):
    """Normalized-gradient ascent with projection onto the l2 epsilon ball."""
    if budget.norm != "two":
        raise ContractError(f"pgd_l2 needs a two-norm budget, got {budget.norm!r}")
    x0, y, single = _as_batch(image, label)
    x = x0.copy()
    if budget.iterations == 0:
        return x[0] if single else x
    best_x = x0.copy()
    best_loss = np.full(x0.shape[0], -np.inf)
    axes = (1, 2, 3)
    for _ in range(budget.iterations):
        losses, g = losses_and_input_grad(params, x, y)
        if budget.keep_best:
            _update_best(best_x, best_loss, x, losses)
        norms = np.sqrt(np.sum(g * g, axis=axes, keepdims=True))
        safe = np.where(norms == 0.0, 1.0, norms)
        x = x + np.where(norms == 0.0, 0.0, budget.step * g / safe)
        delta = x - x0
        dn = np.sqrt(np.sum(delta * delta, axis=axes, keepdims=True))
        scale = np.where(dn > budget.epsilon, budget.epsilon / np.where(dn == 0.0, 1.0, dn), 1.0)
        x = np.clip(x0 + delta * scale, 0.0, 1.0)
    if not budget.keep_best:
        return x[0] if single else x
    _update_best(best_x, best_loss, x, batch_losses(params, x, y))
    return best_x[0] if single else best_x
