"""Network inputs, pixel-wise branch targets, and loss weight maps.

All grids are ``(H', W', C)`` float64 arrays on the model's output grid,
with ``C = K + 1``: channels ``0..K-1`` are verbs and channel ``K`` is the
w/o-interaction category.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from .geometry import BBox, GridBox, GridShape, box_to_grid, center_area, pixel_mask

# member of a verb set standing for the w/o-interaction category
WO = -1

SCALE_CAP = 10.0


def make_rgbm(image: np.ndarray, actor: BBox) -> np.ndarray:
    """Append the actor position mask to an ``(H, W, 3)`` image.

    A mask pixel is 1 iff the pixel center lies inside the actor box.
    """
    h, w = image.shape[:2]
    mask = pixel_mask(actor, w, h).astype(image.dtype)
    return np.concatenate([image, mask[..., None]], axis=-1)


def make_input(image: np.ndarray, actor: BBox, mask_mode: str = "rgbm") -> np.ndarray:
    """Build the network input for one actor under a mask-mode ablation.

    ``rgb`` drops the actor entirely; ``rgb+255`` brightens the actor box by
    the full 8-bit range (1.0 on our [0, 1] scale) instead of adding a channel.
    """
    if mask_mode == "rgbm":
        return make_rgbm(image, actor)
    if mask_mode == "rgb":
        return image.copy()
    if mask_mode == "rgb+255":
        h, w = image.shape[:2]
        mask = pixel_mask(actor, w, h)
        out = image.copy()
        out[mask] += 1.0
        return out
    raise ValueError(f"unknown mask mode {mask_mode!r}")


def check_verb_set(verbs: Iterable[int], num_verbs: int) -> FrozenSet[int]:
    verbs = frozenset(verbs)
    if WO in verbs and len(verbs) > 1:
        raise ValueError("a verb set cannot mix w/o-interaction with real verbs")
    for v in verbs:
        if v != WO and not 0 <= v < num_verbs:
            raise ValueError(f"verb id {v} outside [0, {num_verbs})")
    return verbs


def verb_channels(verbs: FrozenSet[int], num_verbs: int, include_wo: bool) -> FrozenSet[int]:
    if WO in verbs:
        return frozenset({num_verbs}) if include_wo else frozenset()
    return verbs


@dataclass(frozen=True)
class SupervisedBox:
    """A box rasterized on the grid: full extent, central area, and positive channels."""

    full: GridBox
    central: GridBox
    channels: FrozenSet[int]


def supervised_boxes(
    boxes: Sequence[Tuple[BBox, Iterable[int]]],
    shape: GridShape,
    num_verbs: int,
    ratio: float,
    include_wo: bool,
) -> List[SupervisedBox]:
    out = []
    for box, verbs in boxes:
        verbs = check_verb_set(verbs, num_verbs)
        out.append(
            SupervisedBox(
                full=box_to_grid(box, shape),
                central=box_to_grid(center_area(box, ratio), shape),
                channels=verb_channels(verbs, num_verbs, include_wo),
            )
        )
    return out


def targets_from_boxes(sboxes: Sequence[SupervisedBox], shape: GridShape, channels: int) -> np.ndarray:
    target = np.zeros((shape.height, shape.width, channels))
    for sb in sboxes:
        rows, cols = sb.central.slices()
        for c in sb.channels:
            # max-merge of binary indicators
            target[rows, cols, c] = 1.0
    return target


def branch_target(
    boxes: Sequence[Tuple[BBox, Iterable[int]]],
    shape: GridShape,
    num_verbs: int,
    ratio: float = 0.3,
    include_wo: bool = True,
) -> np.ndarray:
    """Binary target grid: 1 on each box's central area for the channels of its verbs."""
    sboxes = supervised_boxes(boxes, shape, num_verbs, ratio, include_wo)
    return targets_from_boxes(sboxes, shape, num_verbs + 1)


def hanning(x, y, w, h):
    """Separable 2-D raised-cosine window centred at the origin.

    A dimension of at most one cell contributes a factor of 1.
    Accepts scalars or broadcastable arrays.
    """
    fx = np.where(w > 1, 0.5 * (1.0 + np.cos(2.0 * np.pi * x / np.maximum(w - 1.0, 1e-300))), 1.0)
    fy = np.where(h > 1, 0.5 * (1.0 + np.cos(2.0 * np.pi * y / np.maximum(h - 1.0, 1e-300))), 1.0)
    out = fx * fy
    return float(out) if np.ndim(out) == 0 else out


def _window_over(gb: GridBox) -> np.ndarray:
    """Hanning values over the cells of ``gb``, shape ``(rows, cols)``."""
    x0, y0 = gb.center()
    xs = np.arange(gb.x0, gb.x1 + 1) - x0
    ys = np.arange(gb.y0, gb.y1 + 1) - y0
    return hanning(xs[None, :], ys[:, None], gb.width(), gb.height())


def hanning_weight_map(sboxes: Sequence[SupervisedBox], targets: np.ndarray) -> np.ndarray:
    """Per-cell, per-channel Hanning weights.

    Inside a box, positive cells take the window value of the boxes whose
    central area produced them (max over such boxes) and negative cells take
    ``1 - window`` (min over covering boxes). Cells outside every box get 1.
    """
    H, W, C = targets.shape
    pos = np.full((H, W, C), -np.inf)
    neg = np.full((H, W, C), np.inf)
    covered = np.zeros((H, W), dtype=bool)
    for sb in sboxes:
        rows, cols = sb.full.slices()
        win = _window_over(sb.full)[..., None]
        covered[rows, cols] = True
        t = targets[rows, cols, :]
        neg[rows, cols, :] = np.where(t == 0.0, np.minimum(neg[rows, cols, :], 1.0 - win), neg[rows, cols, :])
        # positive contributions only where this box's central area set the channel
        produced = np.zeros((sb.full.height(), sb.full.width(), C), dtype=bool)
        zr0, zc0 = sb.central.y0 - sb.full.y0, sb.central.x0 - sb.full.x0
        for c in sb.channels:
            produced[zr0 : zr0 + sb.central.height(), zc0 : zc0 + sb.central.width(), c] = True
        upd = produced & (t == 1.0)
        pos[rows, cols, :] = np.where(upd, np.maximum(pos[rows, cols, :], win), pos[rows, cols, :])
    out = np.ones((H, W, C))
    inside = np.broadcast_to(covered[..., None], (H, W, C))
    is_pos = targets == 1.0
    out = np.where(inside & is_pos & np.isfinite(pos), pos, out)
    out = np.where(inside & ~is_pos & np.isfinite(neg), neg, out)
    return out


def scale_weight(grid: GridShape, box: GridBox, lam: float = 0.5) -> float:
    return min(SCALE_CAP, lam * max(grid.width, grid.height) / max(box.width(), box.height()))


def scale_weight_map(
    boxes: Sequence[GridBox], shape: GridShape, channels: int, lam: float = 0.5
) -> np.ndarray:
    """Per-cell box-size weights (capped at 10), broadcast across channels."""
    out = np.ones((shape.height, shape.width))
    best = np.full((shape.height, shape.width), -np.inf)
    for gb in boxes:
        rows, cols = gb.slices()
        best[rows, cols] = np.maximum(best[rows, cols], scale_weight(shape, gb, lam))
    out = np.where(np.isfinite(best), best, out)
    return np.repeat(out[..., None], channels, axis=-1)


@dataclass
class BranchSupervision:
    target: np.ndarray
    w_han: np.ndarray
    w_scale: np.ndarray


def build_branch(
    boxes: Sequence[Tuple[BBox, Iterable[int]]],
    shape: GridShape,
    num_verbs: int,
    ratio: float = 0.3,
    include_wo: bool = True,
    use_hanning: bool = True,
    use_scale: bool = True,
    scale_lambda: float = 0.5,
) -> BranchSupervision:
    sboxes = supervised_boxes(boxes, shape, num_verbs, ratio, include_wo)
    C = num_verbs + 1
    target = targets_from_boxes(sboxes, shape, C)
    w_han = hanning_weight_map(sboxes, target) if use_hanning else np.ones_like(target)
    if use_scale:
        w_scale = scale_weight_map([sb.full for sb in sboxes], shape, C, scale_lambda)
    else:
        w_scale = np.ones_like(target)
    return BranchSupervision(target, w_han, w_scale)


def wo_flags(placement: str) -> Tuple[bool, bool]:
    """(actor branch supervises w/o, object branch supervises w/o)."""
    return {
        "none": (False, False),
        "actor": (True, False),
        "object": (False, True),
        "both": (True, True),
    }[placement]

