"""Mask-constrained physical-attack simulations.

Three recipes: an eyeglass-frame attack (normalized-gradient ascent with
momentum, quantized to the 1/255 grid each step), a sticker attack (Adam
ascent inside the mask), and a universal adversarial patch trained across a
design set with random placement and right-angle rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BoundsError, ContractError, ShapeError
from ..masks import Mask
from ..models import batch_losses, losses_and_input_grad
from ..optim import OptimState, optimizer_step
from ..rng import SplitMix64


def _single_image(image) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected a single (C,H,W) image, got {x.shape}")
    return x


def _mask_grid(mask, image_shape) -> np.ndarray:
    if isinstance(mask, Mask):
        mask.check_image(image_shape)
        grid = mask.grid
    else:
        grid = np.asarray(mask)
        if grid.dtype != np.bool_ or grid.shape != tuple(image_shape[-2:]):
            raise ShapeError(f"mask must be bool {tuple(image_shape[-2:])}, got "
                             f"{grid.dtype} {grid.shape}")
    if not grid.any():
        raise ContractError("mask has no attackable pixels")
    return grid


def eyeglass_attack(params, image, label, mask, iterations: int,
                    lr: float = 20.0 / 255.0, momentum: float = 0.4,
                    seed: int = 0, colors: int = 5):
    """Frame-shaped ascent: pick the best of ``colors`` seeded solid-color
    starts, then take momentum steps of the max-normalized gradient,
    clipping to [0,1] and snapping to the 1/255 grid inside the mask each
    iteration. Returns the highest-loss iterate seen.

    A zero-gradient iteration takes no step (the momentum buffer still
    decays). Pixels outside the mask are bit-identical to the input.
    """
    x0 = _single_image(image)
    grid = _mask_grid(mask, x0.shape)
    m3 = grid[None]
    mf = m3.astype(np.float64)
    rng = SplitMix64(seed).derive("eyeglass")
    inits = np.empty((colors,) + x0.shape, dtype=np.float64)
    for c in range(colors):
        color = rng.derive("color", c).uniform((x0.shape[0],))
        inits[c] = np.where(m3, color[:, None, None], x0)
    labels = np.full(colors, label, dtype=np.int64)
    init_losses = batch_losses(params, inits, labels)
    pick = int(np.argmax(init_losses))
    x = inits[pick].copy()
    best_x = x.copy()
    best_loss = float(init_losses[pick])
    v = np.zeros_like(x)
    y1 = np.array([label], dtype=np.int64)
    for _ in range(iterations):
        losses, g = losses_and_input_grad(params, x[None], y1)
        if losses[0] > best_loss:
            best_loss = float(losses[0])
            best_x = x.copy()
        g = g[0] * mf
        gmax = float(np.max(np.abs(g)))
        if gmax == 0.0:
            v = momentum * v
            continue
        v = momentum * v + g / gmax
        stepped = x + lr * v
        inside = np.round(np.clip(stepped, 0.0, 1.0) * 255.0) / 255.0
        x = np.where(m3, inside, x0)
    final = batch_losses(params, x[None], y1)
    if final[0] > best_loss:
        best_x = x.copy()
    return best_x


def sticker_attack(params, image, label, mask, iterations: int,
                   lr: float = 0.1, seed: int = 0):
    """Adam ascent on the loss, restricted to the mask, from a seeded
    uniform-random fill; clipped to [0,1] each step, keep-best."""
    x0 = _single_image(image)
    grid = _mask_grid(mask, x0.shape)
    m3 = grid[None]
    mf = m3.astype(np.float64)
    rng = SplitMix64(seed).derive("sticker")
    x = np.where(m3, rng.uniform(x0.shape), x0)
    best_x = x.copy()
    best_loss = -np.inf
    state = OptimState(kind="adam", lr=lr)
    y1 = np.array([label], dtype=np.int64)
    for _ in range(iterations):
        losses, g = losses_and_input_grad(params, x[None], y1)
        if losses[0] > best_loss:
            best_loss = float(losses[0])
            best_x = x.copy()
        stepped = optimizer_step({"x": x}, {"x": g[0] * mf}, state, ascent=True)["x"]
        x = np.where(m3, np.clip(stepped, 0.0, 1.0), x0)
    final = batch_losses(params, x[None], y1)
    if final[0] > best_loss:
        best_x = x.copy()
    return best_x


@dataclass(frozen=True)
class PatchConfig:
    ratio: float  # patch area as a fraction of image area
    target: int
    lr: float = 5.0 / 255.0
    iterations: int = 100  # gradient steps per design image per epoch
    epochs: int = 1
    design_size: int | None = None  # cap on design images, None = all

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ContractError(f"ratio must lie in [0, 1], got {self.ratio}")
        if self.target < 0:
            raise ContractError("target class must be >= 0")
        if self.iterations < 0 or self.epochs < 1:
            raise ContractError("iterations must be >= 0 and epochs >= 1")


def patch_side(ratio: float, height: int, width: int) -> int:
    return int(round(np.sqrt(ratio * height * width)))


def patch_apply(image, patch, position, rotation: int):
    """Overwrite a square footprint with the patch rotated by ``rotation``
    quarter turns; every other pixel is untouched."""
    x = np.asarray(image, dtype=np.float64).copy()
    p = np.asarray(patch, dtype=np.float64)
    if p.ndim != 3 or p.shape[1] != p.shape[2]:
        raise ShapeError(f"patch must be (C, side, side), got {p.shape}")
    side = p.shape[1]
    if side == 0:
        return x
    if p.shape[0] != x.shape[0]:
        raise ShapeError(f"patch channels {p.shape[0]} != image channels {x.shape[0]}")
    top, left = position
    if top < 0 or left < 0 or top + side > x.shape[1] or left + side > x.shape[2]:
        raise BoundsError(f"patch footprint {side}x{side} at ({top},{left}) "
                          f"outside {x.shape[1]}x{x.shape[2]} image")
    x[:, top:top + side, left:left + side] = np.rot90(p, rotation, axes=(1, 2))
    return x


def _design_subset(design_set, cfg: PatchConfig):
    if hasattr(design_set, "images"):
        images, labels = design_set.images, design_set.labels
    else:
        images, labels = design_set
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    keep = labels != cfg.target  # target-class images carry no signal to flip
    images = images[keep]
    if cfg.design_size is not None:
        images = images[:cfg.design_size]
    return images


def patch_train(params, design_set, cfg: PatchConfig, seed: int = 0) -> np.ndarray:
    """Train a universal patch that pushes predictions toward ``cfg.target``.

    Plain gradient ascent on the target log-probability, one image at a
    time, with a seeded random position and rotation drawn per image per
    iteration. The patch starts grey and stays clipped to [0,1].
    """
    images = _design_subset(design_set, cfg)
    if images.ndim != 4:
        raise ShapeError(f"design set must be (N,C,H,W), got {images.shape}")
    channels, height, width = images.shape[1:]
    side = patch_side(cfg.ratio, height, width)
    if side == 0:
        return np.zeros((channels, 0, 0), dtype=np.float64)
    if side > height or side > width:
        raise ShapeError(f"patch side {side} exceeds image {height}x{width}")
    patch = np.full((channels, side, side), 0.5, dtype=np.float64)
    rng = SplitMix64(seed).derive("patch")
    y_target = np.array([cfg.target], dtype=np.int64)
    for epoch in range(cfg.epochs):
        for i in range(images.shape[0]):
            for it in range(cfg.iterations):
                pose = rng.derive("pose", epoch, i, it)
                top = pose.randint(0, height - side + 1)
                left = pose.randint(0, width - side + 1)
                rot = pose.randint(0, 4)
                x = patch_apply(images[i], patch, (top, left), rot)
                _, g = losses_and_input_grad(params, x[None], y_target)
                # ascending the target log-prob is descending its cross-entropy
                gp = np.rot90(g[0][:, top:top + side, left:left + side], -rot, axes=(1, 2))
                patch = np.clip(patch - cfg.lr * gp, 0.0, 1.0)
    return patch


def patch_apply_batch(images, patch, seed: int = 0) -> np.ndarray:
    """Apply one trained patch to every image at seeded per-image positions
    and rotations; used by evaluation sweeps."""
    x = np.asarray(images, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"expected (N,C,H,W) images, got {x.shape}")
    p = np.asarray(patch, dtype=np.float64)
    side = p.shape[-1]
    if side == 0:
        return x.copy()
    height, width = x.shape[2], x.shape[3]
    out = x.copy()
    base = SplitMix64(seed).derive("patch-eval")
    for i in range(x.shape[0]):
        pose = base.derive(i)
        top = pose.randint(0, height - side + 1)
        left = pose.randint(0, width - side + 1)
        rot = pose.randint(0, 4)
        out[i] = patch_apply(x[i], p, (top, left), rot)
    return out
