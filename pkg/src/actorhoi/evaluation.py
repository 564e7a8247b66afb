"""HOI mAP, agent AP, and complexity-subset breakdowns.

A HOI class is a ``(verb, object category)`` pair. A predicted triplet is a
true positive when both its human and object boxes reach the IoU threshold
with a still-unmatched ground-truth pair of the same class in the same image.
Predictions of a class are processed greedily in score order across all
images; AP uses all-point interpolation.

AP values and their means are accumulated as exact fractions and rounded to
float once, so results do not depend on summation order.
"""

from __future__ import annotations

from collections import Counter
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple


from .config import EvalConfig
from .geometry import BBox, iou
from .inference import AgentPrediction, HoiPrediction
from .synth import SceneAnnotation, complexity_subset

SUBSETS = ("SH-SO", "MH-SO", "SH-MO", "MH-MO")


@dataclass(frozen=True)
class GtPair:
    human_box: BBox
    object_box: Optional[BBox]
    object_category: int
    verb: int
    image: int = 0


@dataclass(frozen=True)
class RankedPair:
    """A scored (human, object) candidate of a single class; ``object_box=None`` for agent AP."""

    image: int
    human_box: BBox
    object_box: Optional[BBox]
    score: float


def match_predictions(preds: Sequence, gts: Sequence[GtPair], iou_thr: float = 0.5) -> List[bool]:
    """Greedy TP/FP flags for score-sorted predictions of one class.

    ``preds`` items need ``human_box`` and ``object_box`` attributes and an
    optional ``image`` (default 0); a ``None`` object box matches on the human
    box alone. Among eligible ground truths the one with the largest
    min(human IoU, object IoU) wins, ties to the lower index.
    """
    matched = [False] * len(gts)
    flags = []
    for p in preds:
        image = getattr(p, "image", 0)
        best, best_q = None, -1.0
        for gi, g in enumerate(gts):
            if matched[gi] or g.image != image:
                continue
            q = iou(p.human_box, g.human_box)
            if q < iou_thr:
                continue
            if p.object_box is not None:
                qo = iou(p.object_box, g.object_box)
                if qo < iou_thr:
                    continue
                q = min(q, qo)
            if q > best_q:
                best, best_q = gi, q
        if best is None:
            flags.append(False)
        else:
            matched[best] = True
            flags.append(True)
    return flags


def exact_average_precision(flags: Sequence[bool], n_gt: int) -> Fraction:
    """All-point interpolated AP as an exact fraction."""
    if n_gt <= 0:
        return Fraction(0)
    recall, precision = [], []
    tp = 0
    for k, hit in enumerate(flags, start=1):
        tp += bool(hit)
        recall.append(Fraction(tp, n_gt))
        precision.append(Fraction(tp, k))
    # precision envelope: best precision at this recall or beyond
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    ap = Fraction(0)
    prev = Fraction(0)
    for r, p in zip(recall, precision):
        if r > prev:
            ap += (r - prev) * p
            prev = r
    return ap


def average_precision(flags: Sequence[bool], n_gt: int) -> float:
    return float(exact_average_precision(flags, n_gt))


def gt_pairs(annotation: SceneAnnotation, image: int = 0) -> List[GtPair]:
    out = []
    for h, v, o in annotation.triplets:
        box, cat = annotation.objects[o]
        out.append(GtPair(annotation.humans[h], box, cat, v, image))
    return out


def agent_gt_pairs(annotation: SceneAnnotation, image: int = 0) -> List[GtPair]:
    seen = sorted({(h, v) for h, v, _ in annotation.triplets})
    return [GtPair(annotation.humans[h], None, -1, v, image) for h, v in seen]


def class_counts(annotations: Sequence[SceneAnnotation]) -> Counter:
    """Ground-truth instances per HOI class ``(verb, category)``."""
    counts: Counter = Counter()
    for ann in annotations:
        for h, v, o in ann.triplets:
            counts[(v, ann.objects[o][1])] += 1
    return counts


@dataclass
class EvalReport:
    per_class_ap: Dict[str, float]
    mAP: float
    mAP_rare: Optional[float]
    mAP_non_rare: Optional[float]
    agent_ap: Dict[str, float]
    agent_mAP: float
    subset_mAP: Dict[str, Optional[float]]
    subset_images: Dict[str, int]
    n_images: int
    num_classes_evaluated: int
    iou_threshold: float
    known_object: bool = False

    def to_json(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = [f"{'metric':<24}{'value':>10}"]

        def row(name, value):
            shown = "n/a" if value is None else f"{100.0 * value:.2f}"
            lines.append(f"{name:<24}{shown:>10}")

        row("mAP (full)", self.mAP)
        row("mAP (rare)", self.mAP_rare)
        row("mAP (non-rare)", self.mAP_non_rare)
        row("agent mAP", self.agent_mAP)
        for name in SUBSETS:
            row(f"mAP {name} ({self.subset_images[name]} img)", self.subset_mAP[name])
        for key, ap in sorted(self.per_class_ap.items()):
            row(f"AP {key}", ap)
        for key, ap in sorted(self.agent_ap.items()):
            row(f"agent AP {key}", ap)
        return "\n".join(lines) + "\n"


def class_key(verb: int, category: int) -> str:
    return f"v{verb}_c{category}"


def _ranked(per_image: Dict[int, Sequence[RankedPair]]) -> List[RankedPair]:
    rows = []
    for image, items in per_image.items():
        for rank, p in enumerate(items):
            rows.append((-p.score, image, rank, p))
    rows.sort(key=lambda r: r[:3])
    return [r[3] for r in rows]


def _class_aps(
    preds_per_image: Sequence[Sequence[HoiPrediction]],
    annotations: Sequence[SceneAnnotation],
    images: Sequence[int],
    classes: Sequence[Tuple[int, int]],
    config: EvalConfig,
) -> Dict[Tuple[int, int], Fraction]:
    gts_by_class: Dict[Tuple[int, int], List[GtPair]] = {c: [] for c in classes}
    preds_by_class: Dict[Tuple[int, int], Dict[int, List[RankedPair]]] = {c: {} for c in classes}
    for i in images:
        ann = annotations[i]
        present = {cat for _, cat in ann.objects}
        for g in gt_pairs(ann, i):
            gts_by_class[(g.verb, g.object_category)].append(g)
        for p in preds_per_image[i]:
            key = (p.verb, p.object_category)
            if config.known_object and p.object_category not in present:
                continue
            preds_by_class[key].setdefault(i, []).append(RankedPair(i, p.human_box, p.object_box, p.score))
    aps = {}
    for c in classes:
        gts = gts_by_class[c]
        if not gts:
            continue
        ranked = _ranked(preds_by_class[c])
        aps[c] = exact_average_precision(match_predictions(ranked, gts, config.iou_threshold), len(gts))
    return aps


def _mean(values) -> Optional[float]:
    values = list(values)
    return float(sum(values, Fraction(0)) / len(values)) if values else None


def _check_vocab(preds_per_image, annotations, num_verbs, num_categories):
    for ann in annotations:
        for _, v, _ in ann.triplets:
            if not 0 <= v < num_verbs:
                raise ValueError(f"ground-truth verb {v} outside vocabulary of {num_verbs}")
        for _, cat in ann.objects:
            if not 0 <= cat < num_categories:
                raise ValueError(f"ground-truth category {cat} outside vocabulary of {num_categories}")
    for preds in preds_per_image:
        for p in preds:
            if not 0 <= p.verb < num_verbs or not 0 <= p.object_category < num_categories:
                raise ValueError(f"prediction class {(p.verb, p.object_category)} outside vocabulary")


def evaluate(
    preds_per_image: Sequence[Sequence[HoiPrediction]],
    annotations: Sequence[SceneAnnotation],
    num_verbs: int,
    num_categories: int,
    config: EvalConfig = EvalConfig(),
    agents_per_image: Optional[Sequence[Sequence[AgentPrediction]]] = None,
    train_counts: Optional[Counter] = None,
) -> EvalReport:
    if len(preds_per_image) != len(annotations):
        raise ValueError("need one prediction list per annotated image")
    _check_vocab(preds_per_image, annotations, num_verbs, num_categories)
    classes = [(v, c) for v in range(num_verbs) for c in range(num_categories)]
    all_images = list(range(len(annotations)))

    aps = _class_aps(preds_per_image, annotations, all_images, classes, config)
    mAP = _mean(aps.values()) or 0.0
    mAP_rare = mAP_non_rare = None
    if train_counts is not None:
        mAP_rare = _mean(ap for c, ap in aps.items() if train_counts.get(c, 0) < config.rare_threshold)
        mAP_non_rare = _mean(ap for c, ap in aps.items() if train_counts.get(c, 0) >= config.rare_threshold)

    agent_ap: Dict[str, Fraction] = {}
    if agents_per_image is not None:
        for v in range(num_verbs):
            gts = [g for i in all_images for g in agent_gt_pairs(annotations[i], i) if g.verb == v]
            if not gts:
                continue
            per_image = {}
            for i in all_images:
                items = [RankedPair(i, a.human_box, None, float(a.scores[v])) for a in agents_per_image[i]]
                items.sort(key=lambda r: -r.score)
                per_image[i] = items
            flags = match_predictions(_ranked(per_image), gts, config.iou_threshold)
            agent_ap[f"v{v}"] = exact_average_precision(flags, len(gts))

    subset_images = {name: [] for name in SUBSETS}
    for i in all_images:
        subset_images[complexity_subset(annotations[i])].append(i)
    subset_mAP = {}
    for name, imgs in subset_images.items():
        sub = _class_aps(preds_per_image, annotations, imgs, classes, config)
        subset_mAP[name] = _mean(sub.values())

    return EvalReport(
        per_class_ap={class_key(*c): float(ap) for c, ap in sorted(aps.items())},
        mAP=mAP,
        mAP_rare=mAP_rare,
        mAP_non_rare=mAP_non_rare,
        agent_ap={k: float(ap) for k, ap in agent_ap.items()},
        agent_mAP=_mean(agent_ap.values()) or 0.0,
        subset_mAP=subset_mAP,
        subset_images={k: len(v) for k, v in subset_images.items()},
        n_images=len(annotations),
        num_classes_evaluated=len(aps),
        iou_threshold=config.iou_threshold,
        known_object=config.known_object,
    )
