"""Synthetic HOI scenes, a jittering detector stub, and per-actor training examples.

Scenes are small RGB rasters containing humans and objects. Verbs are pure
functions of box geometry (see ``PREDICATE_FUNCS``), so every recorded
triplet can be read off the image. Everything is seeded per item from
``(config.seed, index)``; generation order never changes content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Sequence, Tuple

import numpy as np

from .config import SynthConfig
from .geometry import BBox, intersection_area, iou, pixel_mask

HUMAN_CATEGORY = -1

_SCENE_STREAM = 0
_DETECT_STREAM = 1


@dataclass
class SceneAnnotation:
    width: int
    height: int
    humans: List[BBox]
    objects: List[Tuple[BBox, int]]
    triplets: List[Tuple[int, int, int]]  # (human index, verb id, object index)

    def validate(self, num_verbs: int) -> None:
        for box in self.humans + [b for b, _ in self.objects]:
            if box.x1 < 0 or box.y1 < 0 or box.x2 > self.width or box.y2 > self.height:
                raise ValueError(f"box {box.as_tuple()} lies outside the image")
        for h, v, o in self.triplets:
            if not (0 <= h < len(self.humans) and 0 <= o < len(self.objects) and 0 <= v < num_verbs):
                raise ValueError(f"triplet {(h, v, o)} out of range")

    def verbs_between(self, human: int, obj: int) -> FrozenSet[int]:
        return frozenset(v for h, v, o in self.triplets if h == human and o == obj)


@dataclass(frozen=True)
class Detection:
    box: BBox
    category: int
    score: float

    @property
    def is_human(self) -> bool:
        return self.category == HUMAN_CATEGORY


@dataclass(frozen=True)
class InteractingObject:
    box: BBox
    category: int
    verbs: FrozenSet[int]


@dataclass
class ActorExample:
    actor_box: BBox
    actor_score: float
    interacting: List[InteractingObject]
    is_positive: bool
    # scene objects that do not interact with the actor; supervised as w/o-interaction
    other_objects: List[Tuple[BBox, int]] = field(default_factory=list)
    scene_index: int = -1
    detection_index: int = -1

    def actor_verbs(self) -> FrozenSet[int]:
        out: set = set()
        for obj in self.interacting:
            out |= obj.verbs
        return frozenset(out)


# ----------------------------------------------------------------------------
# geometric verb predicates


def _vertical_overlap(a: BBox, b: BBox) -> float:
    return min(a.y2, b.y2) - max(a.y1, b.y1)


def _horizontal_overlap(a: BBox, b: BBox) -> float:
    return min(a.x2, b.x2) - max(a.x1, b.x1)


def overlap(human: BBox, obj: BBox, gap: float) -> bool:
    return intersection_area(human, obj) > 0.0


def side_by_side(human: BBox, obj: BBox, gap: float) -> bool:
    if overlap(human, obj, gap) or _vertical_overlap(human, obj) <= 0.0:
        return False
    dx = max(obj.x1 - human.x2, human.x1 - obj.x2)
    return 0.0 <= dx < gap


def above(human: BBox, obj: BBox, gap: float) -> bool:
    if overlap(human, obj, gap) or _horizontal_overlap(human, obj) <= 0.0:
        return False
    return 0.0 <= human.y1 - obj.y2 < gap


def below(human: BBox, obj: BBox, gap: float) -> bool:
    if overlap(human, obj, gap) or _horizontal_overlap(human, obj) <= 0.0:
        return False
    return 0.0 <= obj.y1 - human.y2 < gap


PREDICATE_FUNCS: Dict[str, Callable[[BBox, BBox, float], bool]] = {
    "overlap": overlap,
    "side_by_side": side_by_side,
    "above": above,
    "below": below,
}


def item_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, stream]))


# ----------------------------------------------------------------------------
# scene generation


def _place_near(rng, rule: str, human: BBox, w: float, h: float, gap: float) -> BBox:
    if rule == "overlap":
        x1 = rng.uniform(human.x1 - w + 2.0, human.x2 - 2.0)
        y1 = rng.uniform(human.y1 - h + 2.0, human.y2 - 2.0)
    elif rule == "side_by_side":
        g = rng.uniform(0.0, gap * 0.9)
        x1 = human.x2 + g if rng.random() < 0.5 else human.x1 - g - w
        y1 = rng.uniform(human.y1 - h + 2.0, human.y2 - 2.0)
    else:
        g = rng.uniform(0.0, gap * 0.9)
        x1 = rng.uniform(human.x1 - w + 2.0, human.x2 - 2.0)
        y1 = human.y1 - g - h if rule == "above" else human.y2 + g
    return BBox(x1, y1, x1 + w, y1 + h)


def _inside(box: BBox, width: int, height: int) -> bool:
    return box.x1 >= 0 and box.y1 >= 0 and box.x2 <= width and box.y2 <= height


def _layout(config: SynthConfig, rng: np.random.Generator):
    W, H = config.image_width, config.image_height
    n_h = int(rng.integers(config.humans_per_image[0], config.humans_per_image[1] + 1))
    n_o = int(rng.integers(config.objects_per_image[0], config.objects_per_image[1] + 1))

    humans: List[BBox] = []
    for _ in range(n_h):
        for _attempt in range(2000):
            w = rng.uniform(*config.human_width)
            h = rng.uniform(*config.human_height)
            x1 = rng.uniform(0.0, W - w)
            y1 = rng.uniform(0.0, H - h)
            cand = BBox(x1, y1, x1 + w, y1 + h)
            # a one-pixel margin keeps neighbouring actor masks visually separate
            grown = BBox(cand.x1 - 1, cand.y1 - 1, cand.x2 + 1, cand.y2 + 1)
            if all(intersection_area(grown, other) == 0.0 for other in humans):
                humans.append(cand)
                break
        else:
            raise RuntimeError("could not place a human; image too crowded for this config")

    objects: List[Tuple[BBox, int]] = []
    modes = list(config.interaction_rules) + ["free"]
    for _ in range(n_o):
        for _attempt in range(2000):
            size = rng.uniform(*config.object_size)
            aspect = rng.uniform(0.8, 1.25)
            w, h = size * math.sqrt(aspect), size / math.sqrt(aspect)
            w, h = min(w, W), min(h, H)
            mode = modes[int(rng.integers(len(modes)))]
            anchor = humans[int(rng.integers(len(humans)))]
            category = int(rng.integers(config.num_object_categories))
            if mode == "free":
                x1 = rng.uniform(0.0, W - w)
                y1 = rng.uniform(0.0, H - h)
                cand = BBox(x1, y1, x1 + w, y1 + h)
            else:
                cand = _place_near(rng, mode, anchor, w, h, config.interaction_gap)
            if not _inside(cand, W, H):
                continue
            if any(intersection_area(cand, other) > 0.0 for other, _ in objects):
                continue
            objects.append((cand, category))
            break
        else:
            raise RuntimeError("could not place an object; image too crowded for this config")

    triplets = []
    for hi, hbox in enumerate(humans):
        for v, rule in enumerate(config.interaction_rules):
            fn = PREDICATE_FUNCS[rule]
            for oi, (obox, _) in enumerate(objects):
                if fn(hbox, obox, config.interaction_gap):
                    triplets.append((hi, v, oi))
    triplets.sort()
    return SceneAnnotation(W, H, humans, objects, triplets)


def _palette(category: int) -> np.ndarray:
    base = [
        (0.15, 0.35, 0.95),
        (0.15, 0.85, 0.25),
        (0.95, 0.85, 0.10),
        (0.80, 0.20, 0.80),
    ]
    r, g, b = base[category % len(base)]
    shade = 1.0 - 0.15 * (category // len(base))
    return np.array([r, g, b]) * shade


def render(annotation: SceneAnnotation, rng: np.random.Generator) -> np.ndarray:
    W, H = annotation.width, annotation.height
    img = 0.25 + 0.06 * rng.standard_normal((H, W, 3))
    yy, xx = np.mgrid[0:H, 0:W]

    for box in annotation.humans:
        m = pixel_mask(box, W, H)
        body = np.where(((xx // 2) % 2 == 0)[..., None], [0.92, 0.62, 0.45], [0.80, 0.52, 0.38])
        img[m] = body[m]
        head = m & (yy + 0.5 < box.y1 + 0.3 * box.height())
        img[head] = [0.35, 0.20, 0.10]

    for box, category in annotation.objects:
        m = pixel_mask(box, W, H)
        color = _palette(category)
        if category % 2 == 0:
            pattern = ((xx // 2 + yy // 2) % 2 == 0)[..., None]
        else:
            pattern = ((yy // 2) % 2 == 0)[..., None]
        tex = np.where(pattern, color, color * 0.6)
        img[m] = tex[m]

    img = np.clip(img, 0.0, 1.0)
    # quantize to 8 bits so images survive a PNG round trip bit-exactly
    return np.round(img * 255.0) / 255.0


def generate_scene(config: SynthConfig, index: int) -> Tuple[np.ndarray, SceneAnnotation]:
    """Return an ``(H, W, 3)`` float image in [0, 1] and its annotation."""
    config.validate()
    rng = item_rng(config.seed, index, _SCENE_STREAM)
    annotation = _layout(config, rng)
    annotation.validate(config.num_verbs)
    return render(annotation, rng), annotation


# ----------------------------------------------------------------------------
# detector stub


def _jitter(box: BBox, rng, jitter: float, width: int, height: int) -> BBox:
    u = rng.uniform(-1.0, 1.0, size=4) * jitter
    bw, bh = box.width(), box.height()
    out = BBox.from_seq(
        (box.x1 + u[0] * bw, box.y1 + u[1] * bh, box.x2 + u[2] * bw, box.y2 + u[3] * bh)
    )
    return out.clip(width, height)


def stub_detect(annotation: SceneAnnotation, config: SynthConfig, index: int) -> List[Detection]:
    rng = item_rng(config.seed, index, _DETECT_STREAM)
    W, H = annotation.width, annotation.height
    sources = [(b, HUMAN_CATEGORY) for b in annotation.humans] + list(annotation.objects)
    dets: List[Detection] = []
    for box, category in sources:
        jittered = _jitter(box, rng, config.jitter, W, H)
        score = float(rng.uniform(0.5, 1.0))
        dets.append(Detection(jittered, category, score))
    for _ in sources:
        # draws are consumed unconditionally so the stream does not depend on fp_rate
        fire = rng.random() < config.fp_rate
        is_human = rng.random() < 0.5
        cat = HUMAN_CATEGORY if is_human else int(rng.integers(config.num_object_categories))
        if is_human:
            w, h = rng.uniform(*config.human_width), rng.uniform(*config.human_height)
        else:
            w = h = rng.uniform(*config.object_size)
        x1, y1 = rng.uniform(0.0, W - w), rng.uniform(0.0, H - h)
        score = float(rng.uniform(1e-6, 0.5))
        if fire:
            dets.append(Detection(BBox(x1, y1, x1 + w, y1 + h), cat, score))
    dets = [d for d in dets if d.score >= config.score_threshold]
    dets.sort(key=lambda d: -d.score)
    return dets[: config.max_detections]


# ----------------------------------------------------------------------------
# annotation arrangement


def arrange_annotations(
    detections: Sequence[Detection], gt: SceneAnnotation, scene_index: int = -1
) -> List[ActorExample]:
    """One example per detected human; matched humans inherit the annotated person's triplets."""
    examples = []
    for det_idx, det in enumerate(detections):
        if not det.is_human:
            continue
        best, best_iou = None, 0.5
        for hi, hbox in enumerate(gt.humans):
            overlap_ = iou(det.box, hbox)
            if overlap_ > best_iou:
                best, best_iou = hi, overlap_
        interacting = []
        others = []
        for oi, (obox, cat) in enumerate(gt.objects):
            verbs = gt.verbs_between(best, oi) if best is not None else frozenset()
            if verbs:
                interacting.append(InteractingObject(obox, cat, verbs))
            else:
                others.append((obox, cat))
        examples.append(
            ActorExample(
                actor_box=det.box,
                actor_score=det.score,
                interacting=interacting,
                is_positive=best is not None,
                other_objects=others,
                scene_index=scene_index,
                detection_index=det_idx,
            )
        )
    return examples


def balance_examples(examples: Sequence[ActorExample], ratio: float, seed: int) -> List[ActorExample]:
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    pos = [i for i, e in enumerate(examples) if e.is_positive]
    neg = [i for i, e in enumerate(examples) if not e.is_positive]
    n_keep = math.ceil(len(pos) * ratio)
    if len(neg) > n_keep:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(neg), size=n_keep, replace=False)
        neg = [neg[i] for i in sorted(chosen)]
    keep = sorted(pos + neg)
    return [examples[i] for i in keep]


def split_indices(config: SynthConfig, split: str) -> range:
    if split == "train":
        return range(0, config.n_train)
    if split == "test":
        return range(config.n_train, config.n_train + config.n_test)
    raise ValueError(f"unknown split {split!r}")


def complexity_subset(annotation: SceneAnnotation) -> str:
    """SH/MH by annotated person count, SO/MO by annotated object count."""
    h = "SH" if len(annotation.humans) <= 1 else "MH"
    o = "SO" if len(annotation.objects) <= 1 else "MO"
    return f"{h}-{o}"

