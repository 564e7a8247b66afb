"""Box arithmetic and pixel/grid coordinate mapping.

Boxes are ``(x1, y1, x2, y2)`` in pixel coordinates with the origin at the
top-left corner. Coordinates are real-valued; areas are computed half-open,
``(x2 - x1) * (y2 - y1)``.

Grid cells are addressed as ``(column, row)`` on the output grid of a model
with downsampling stride ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Tuple

import numpy as np


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"invalid box {self.as_tuple()}: need x1<=x2 and y1<=y2")

    def width(self) -> float:
        return self.x2 - self.x1

    def height(self) -> float:
        return self.y2 - self.y1

    def area(self) -> float:
        return self.width() * self.height()

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @classmethod
    def from_seq(cls, seq: Iterable[float]) -> "BBox":
        x1, y1, x2, y2 = (float(v) for v in seq)
        return cls(x1, y1, x2, y2)

    def clip(self, width: float, height: float) -> "BBox":
        """Clamp the box to ``[0, width] x [0, height]``."""
        x1 = min(max(self.x1, 0.0), width)
        y1 = min(max(self.y1, 0.0), height)
        x2 = min(max(self.x2, x1), width)
        y2 = min(max(self.y2, y1), height)
        return BBox(x1, y1, x2, y2)


@dataclass(frozen=True)
class GridShape:
    """Output grid of ``width x height`` cells, each ``stride`` input pixels wide."""

    width: int
    height: int
    stride: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.stride <= 0:
            raise ValueError(f"grid dimensions must be positive, got {self}")

    @classmethod
    def for_image(cls, image_width: int, image_height: int, stride: int) -> "GridShape":
        return cls(math.ceil(image_width / stride), math.ceil(image_height / stride), stride)


@dataclass(frozen=True)
class GridBox:
    """Inclusive range of grid cells ``[x0, x1] x [y0, y1]``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def width(self) -> int:
        return self.x1 - self.x0 + 1

    def height(self) -> int:
        return self.y1 - self.y0 + 1

    def center(self) -> Tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def contains(self, cell: Tuple[int, int]) -> bool:
        cx, cy = cell
        return self.x0 <= cx <= self.x1 and self.y0 <= cy <= self.y1

    def cells(self) -> Iterator[Tuple[int, int]]:
        for cy in range(self.y0, self.y1 + 1):
            for cx in range(self.x0, self.x1 + 1):
                yield (cx, cy)

    def slices(self) -> Tuple[slice, slice]:
        """Row and column slices for indexing an ``(H, W, ...)`` array."""
        return slice(self.y0, self.y1 + 1), slice(self.x0, self.x1 + 1)


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    return max(iw, 0.0) * max(ih, 0.0)


def center_area(box: BBox, ratio: float) -> BBox:
    """Shrink ``box`` about its center so each side is ``ratio`` times as long."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    cx, cy = center_point(box)
    hw = box.width() * ratio / 2.0
    hh = box.height() * ratio / 2.0
    return BBox(cx - hw, cy - hh, cx + hw, cy + hh)


def center_point(box: BBox) -> Tuple[float, float]:
    return ((box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0)


def _clamp(v: int, hi: int) -> int:
    return min(max(v, 0), hi)


def to_grid(point: Tuple[float, float], shape: GridShape) -> Tuple[int, int]:
    x, y = point
    d = shape.stride
    return (
        _clamp(math.floor(x / d), shape.width - 1),
        _clamp(math.floor(y / d), shape.height - 1),
    )


def box_to_grid(box: BBox, shape: GridShape) -> GridBox:
    """Rasterize a pixel box onto the grid; the result always covers >= 1 cell."""
    d = shape.stride
    gx0 = math.floor(box.x1 / d)
    gy0 = math.floor(box.y1 / d)
    gx1 = max(gx0, math.ceil(box.x2 / d) - 1)
    gy1 = max(gy0, math.ceil(box.y2 / d) - 1)
    wmax, hmax = shape.width - 1, shape.height - 1
    return GridBox(_clamp(gx0, wmax), _clamp(gy0, hmax), _clamp(gx1, wmax), _clamp(gy1, hmax))


def pixel_mask(box: BBox, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` raster; a pixel is set iff its center lies in ``box``."""
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    in_x = (xs >= box.x1) & (xs < box.x2)
    in_y = (ys >= box.y1) & (ys < box.y2)
    return in_y[:, None] & in_x[None, :]
