"""Boolean spatial masks restricting where an attack may touch pixels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True, eq=False)
class Mask:
    grid: np.ndarray  # bool, (H, W), broadcast across channels

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 2 or g.dtype != np.bool_:
            raise ShapeError(f"mask grid must be 2-D bool, got {g.dtype} {g.shape}")
        object.__setattr__(self, "grid", g)

    @property
    def count(self) -> int:
        return int(self.grid.sum())

    @property
    def shape(self) -> tuple:
        return self.grid.shape

    def check_image(self, image_shape):
        if tuple(image_shape[-2:]) != self.grid.shape:
            raise ShapeError(
                f"mask {self.grid.shape} does not match image spatial dims {tuple(image_shape[-2:])}")

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def empty(cls, height: int, width: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def rect(cls, height: int, width: int, top: int, left: int,
             rect_h: int, rect_w: int) -> "Mask":
        if top < 0 or left < 0 or top + rect_h > height or left + rect_w > width:
            raise ShapeError(f"rectangle {rect_h}x{rect_w} at ({top},{left}) "
                             f"overflows {height}x{width}")
        g = np.zeros((height, width), dtype=bool)
        g[top:top + rect_h, left:left + rect_w] = True
        return cls(g)
