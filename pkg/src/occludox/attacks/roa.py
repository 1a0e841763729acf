"""Rectangular occlusion attack: placement search plus inner PGD.

The attack slides an h-by-w grey rectangle over a stride grid, keeps the
loss-maximal placement, then runs l-infinity PGD restricted to the rectangle
starting from the grey fill. Placement search comes in two flavours: scoring
every placement, or ranking placements by an input-gradient sensitivity map
and scoring only the top C.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractError, ShapeError
from ..models import batch_losses, losses_and_input_grad
from .pgd import AttackBudget, pgd_linf

GREY = 0.5  # 127.5 on the 0-255 scale


def default_inner_budget() -> AttackBudget:
    # step 8/255 pairs with 30 iterations: enough travel to cross the
    # half-range epsilon with room to refine
    return AttackBudget("inf", epsilon=0.5, step=8.0 / 255.0, iterations=30)


@dataclass(frozen=True)
class RoaConfig:
    height: int
    width: int
    stride: int = 2
    candidates: int = 10
    fill: float = GREY
    inner: AttackBudget = field(default_factory=default_inner_budget)

    def __post_init__(self):
        degenerate = self.height == 0 and self.width == 0
        if not degenerate and (self.height < 1 or self.width < 1):
            raise ContractError("rectangle sides must be >= 1 (or both 0 for a no-op)")
        if self.stride < 1:
            raise ContractError("stride must be >= 1")
        if self.candidates < 1:
            raise ContractError("candidate count must be >= 1")
        if self.inner.norm != "inf":
            raise ContractError("inner PGD budget must be inf-norm")


@dataclass(frozen=True)
class RoaPlacement:
    top: int
    left: int
    loss: float


def placement_grid(height, width, rect_h, rect_w, stride):
    """Fully-contained top-left corners (j*stride, k*stride), row-major."""
    if rect_h > height or rect_w > width:
        raise ShapeError(f"rectangle {rect_h}x{rect_w} larger than image {height}x{width}")
    tops = range(0, height - rect_h + 1, stride)
    lefts = range(0, width - rect_w + 1, stride)
    return [(t, l) for t in tops for l in lefts]


def grey_fill_losses(params, image, label, places, rect_h, rect_w, fill=GREY):
    """Loss of the model on ``image`` with the rectangle filled at each place.

    Both search flavours score through this one helper with places in the
    same order, which is what makes the saturated-candidate case bit-equal
    to the full search.
    """
    x = np.repeat(np.asarray(image, dtype=np.float64)[None], len(places), axis=0)
    for i, (t, l) in enumerate(places):
        x[i, :, t:t + rect_h, l:l + rect_w] = fill
    labels = np.full(len(places), label, dtype=np.int64)
    return batch_losses(params, x, labels)


def roa_exhaustive_position(params, image, label, cfg: RoaConfig) -> RoaPlacement:
    """Score every placement; ties break to smallest row then column."""
    image = np.asarray(image, dtype=np.float64)
    places = placement_grid(image.shape[-2], image.shape[-1],
                            cfg.height, cfg.width, cfg.stride)
    losses = grey_fill_losses(params, image, label, places, cfg.height, cfg.width, cfg.fill)
    i = int(np.argmax(losses))
    return RoaPlacement(places[i][0], places[i][1], float(losses[i]))


def roa_gradient_positions(params, image, label, cfg: RoaConfig) -> RoaPlacement:
    """Rank placements by squared-gradient mass under the rectangle, then
    score the top C by actual grey-fill loss."""
    image = np.asarray(image, dtype=np.float64)
    places = placement_grid(image.shape[-2], image.shape[-1],
                            cfg.height, cfg.width, cfg.stride)
    _, g = losses_and_input_grad(params, image[None], np.array([label], dtype=np.int64))
    sq = (g[0] ** 2).sum(axis=0)
    windows = sliding_window_view(sq, (cfg.height, cfg.width)).sum(axis=(2, 3))
    sens = windows[::cfg.stride, ::cfg.stride].ravel()
    if sens.shape[0] != len(places):
        raise ContractError("sensitivity grid does not match the placement grid")
    # stable sort keeps row-major order among equal sensitivities
    ranked = np.argsort(-sens, kind="stable")[:min(cfg.candidates, len(places))]
    chosen = np.sort(ranked)
    subset = [places[i] for i in chosen]
    losses = grey_fill_losses(params, image, label, subset, cfg.height, cfg.width, cfg.fill)
    i = int(np.argmax(losses))
    return RoaPlacement(subset[i][0], subset[i][1], float(losses[i]))


def sensitivity_candidates(gradient_map, rect_h, rect_w, stride, count):
    """Top ``count`` placements of the squared-gradient window sum.

    Exposed for direct inspection; takes a (H, W) gradient map already
    reduced over channels.
    """
    sq = np.asarray(gradient_map, dtype=np.float64) ** 2
    places = placement_grid(sq.shape[0], sq.shape[1], rect_h, rect_w, stride)
    windows = sliding_window_view(sq, (rect_h, rect_w)).sum(axis=(2, 3))
    sens = windows[::stride, ::stride].ravel()
    ranked = np.argsort(-sens, kind="stable")[:min(count, len(places))]
    return [places[i] for i in np.sort(ranked)]


_SCORE_CHUNK = 32


def _batch_grey_losses(params, images, labels, place_lists, rect_h, rect_w, fill):
    """Grey-fill losses for per-image placement lists, scored through fixed
    32-image forward chunks; returns one loss array per image."""
    pairs = [(i, t, l)
             for i, places in enumerate(place_lists) for (t, l) in places]
    flat = np.empty(len(pairs), dtype=np.float64)
    for s in range(0, len(pairs), _SCORE_CHUNK):
        block = pairs[s:s + _SCORE_CHUNK]
        xb = np.stack([images[i] for i, _, _ in block])
        for j, (_, t, l) in enumerate(block):
            xb[j, :, t:t + rect_h, l:l + rect_w] = fill
        yb = np.array([labels[i] for i, _, _ in block], dtype=np.int64)
        flat[s:s + len(block)] = batch_losses(params, xb, yb)
    out = []
    pos = 0
    for places in place_lists:
        out.append(flat[pos:pos + len(places)])
        pos += len(places)
    return out


def _batch_positions(params, images, labels, cfg: RoaConfig, search: str):
    """Chosen placement per image; the whole batch shares scoring chunks."""
    h, w = images.shape[-2], images.shape[-1]
    grid = placement_grid(h, w, cfg.height, cfg.width, cfg.stride)
    if search == "exhaustive":
        place_lists = [grid] * images.shape[0]
    else:
        _, g = losses_and_input_grad(params, images, labels)
        place_lists = []
        for i in range(images.shape[0]):
            sq = (g[i] ** 2).sum(axis=0)
            windows = sliding_window_view(sq, (cfg.height, cfg.width)).sum(axis=(2, 3))
            sens = windows[::cfg.stride, ::cfg.stride].ravel()
            ranked = np.argsort(-sens, kind="stable")[:min(cfg.candidates, len(grid))]
            place_lists.append([grid[k] for k in np.sort(ranked)])
    losses = _batch_grey_losses(params, images, labels, place_lists,
                                cfg.height, cfg.width, cfg.fill)
    picks = []
    for places, ls in zip(place_lists, losses):
        k = int(np.argmax(ls))
        picks.append(RoaPlacement(places[k][0], places[k][1], float(ls[k])))
    return picks


def roa_attack(params, image, label, cfg: RoaConfig, search="exhaustive"):
    """Full two-stage attack; accepts a single image or a batch.

    Output differs from input only inside the chosen rectangle. The inner
    PGD starts at the grey fill, so with keep_best the returned loss is at
    least the grey-fill loss of the searched placement.
    """
    if search not in ("exhaustive", "gradient"):
        raise ContractError(f"unknown search kind {search!r}")
    x = np.asarray(image, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    y = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if cfg.height == 0 and cfg.width == 0:
        out = x.copy()
        return out[0] if single else out
    placement_grid(x.shape[-2], x.shape[-1], cfg.height, cfg.width, cfg.stride)
    starts = x.copy()
    masks = np.zeros((x.shape[0], x.shape[-2], x.shape[-1]), dtype=bool)
    for i, pl in enumerate(_batch_positions(params, x, y, cfg, search)):
        starts[i, :, pl.top:pl.top + cfg.height, pl.left:pl.left + cfg.width] = cfg.fill
        masks[i, pl.top:pl.top + cfg.height, pl.left:pl.left + cfg.width] = True
    adv = pgd_linf(params, starts, y, cfg.inner, mask=masks)
    return adv[0] if single else adv
