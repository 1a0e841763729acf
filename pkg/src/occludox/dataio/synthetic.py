"""Deterministic synthetic sign dataset.

Each class is a procedural glyph (horizontal bars, vertical bars, concentric
rings, or a polygon outline, with a class-indexed count/side parameter) drawn
on a jittered background with additive noise. Every draw comes from seed-
derived substreams, so a given (seed, classes, per_class, side) tuple yields
bit-identical pixels on any platform.

Images are interleaved one-per-class per round, so index-range splits stay
class-balanced whenever per_class is a multiple of 10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ContractError
from ..rng import SplitMix64

_KINDS = ("hbar", "vbar", "ring", "poly")

# Render tones. Foreground/background are kept close enough that small-budget
# pixel attacks are meaningful, but far enough apart that clean training
# separates all classes.
_BG_TONE = 0.25
_FG_TONE = 0.70
_NOISE_AMP = 0.08


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64, pixels in [0, 1]
    labels: np.ndarray  # (N,) int64
    class_names: list
    split: str = "all"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ContractError(f"{self.images.shape[0]} images but "
                                f"{self.labels.shape[0]} labels")
        if self.labels.size and int(self.labels.max()) >= len(self.class_names):
            raise ContractError("label outside the class-name table")

    def __len__(self) -> int:
        return int(self.images.shape[0])


def class_name(c: int) -> str:
    kind = _KINDS[c % 4]
    level = c // 4
    if kind == "poly":
        return f"poly{level + 3}"
    return f"{kind}{level + 1}"


def _glyph_mask(kind: str, level: int, side: int, rng: SplitMix64) -> np.ndarray:
    """Boolean glyph footprint in a unit coordinate box with seeded jitter."""
    half = side / 2.0
    shift_y = rng.randint(-2, 3) * (2.0 / side)
    shift_x = rng.randint(-2, 3) * (2.0 / side)
    yy, xx = np.mgrid[0:side, 0:side]
    uy = (yy + 0.5 - half) / half - shift_y
    ux = (xx + 0.5 - half) / half - shift_x
    if kind in ("hbar", "vbar"):
        count = level + 1
        along = ux if kind == "hbar" else uy
        across = uy if kind == "hbar" else ux
        centers = np.linspace(-0.55, 0.55, count) if count > 1 else np.array([0.0])
        thick = min(0.10, 0.45 / count)
        hit = np.zeros((side, side), dtype=bool)
        for c in centers:
            hit |= np.abs(across - c) <= thick
        return hit & (np.abs(along) <= 0.65)
    if kind == "ring":
        count = level + 1
        radii = np.linspace(0.85, 0.25, count) if count > 1 else np.array([0.85])
        jitter = (rng.uniform() - 0.5) * 0.06
        r = np.sqrt(ux * ux + uy * uy)
        hit = np.zeros((side, side), dtype=bool)
        for rad in radii:
            hit |= np.abs(r - (rad + jitter)) <= 0.065
        return hit
    # polygon outline: inradius test against every edge normal; higher levels
    # get more sides and a smaller radius so neighbouring counts stay apart
    sides = level + 3
    phi = (rng.uniform() - 0.5) * 0.25  # near-canonical orientation
    angles = phi + 2.0 * np.pi * np.arange(sides) / sides
    proj = np.max(np.cos(angles)[:, None, None] * ux[None]
                  + np.sin(angles)[:, None, None] * uy[None], axis=0)
    inradius = (0.88 - 0.09 * level) * np.cos(np.pi / sides)
    return (proj <= inradius) & (proj > inradius * 0.62)


def _render(c: int, side: int, rng: SplitMix64) -> np.ndarray:
    kind = _KINDS[c % 4]
    level = c // 4
    glyph = _glyph_mask(kind, level, side, rng.derive("shape"))
    tone = rng.derive("tone")
    bg = _BG_TONE + 0.08 * (tone.uniform() - 0.5)
    fg = _FG_TONE + 0.06 * (tone.uniform() - 0.5)
    base = np.where(glyph, fg, bg)
    tint = 1.0 + 0.06 * (tone.uniform((3,)) - 0.5)  # class-independent cast
    img = base[None] * tint[:, None, None]
    noise = (rng.derive("noise").uniform((3, side, side)) - 0.5) * _NOISE_AMP
    return np.clip(img + noise, 0.0, 1.0)


def gen_synthetic_signs(seed: int, classes: int = 16, per_class: int = 100,
                        side: int = 32) -> Dataset:
    if not 2 <= classes <= 32:
        raise ConfigError(f"classes must lie in [2, 32], got {classes}")
    if side not in (16, 32, 64):
        raise ConfigError(f"side must be one of 16/32/64, got {side}")
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    root = SplitMix64(seed).derive("signs")
    n = classes * per_class
    images = np.empty((n, 3, side, side), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    i = 0
    for rnd in range(per_class):
        for c in range(classes):
            images[i] = _render(c, side, root.derive("image", c, rnd))
            labels[i] = c
            i += 1
    return Dataset(images, labels, [class_name(c) for c in range(classes)], "all")


def split_dataset(ds: Dataset):
    """(train, val, test) as 70/20/10 index ranges of the full set."""
    n = len(ds)
    a = (n * 7) // 10
    b = (n * 9) // 10
    parts = []
    for tag, sl in (("train", slice(0, a)), ("val", slice(a, b)), ("test", slice(b, n))):
        parts.append(Dataset(ds.images[sl], ds.labels[sl], ds.class_names, tag))
    return tuple(parts)
