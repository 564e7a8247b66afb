"""Per-actor supervision assembly and the seeded Adam training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .inference import output_grid
from .loss import total_loss, wce_backward, wce_forward
from .model import AdamState, Parameters, adam_step, backward, forward, init_params
from .supervision import WO, BranchSupervision, build_branch, make_input, wo_flags
from .synth import ActorExample, Detection, SceneAnnotation, arrange_annotations, balance_examples

log = logging.getLogger(__name__)


@dataclass
class TrainingItem:
    x: np.ndarray
    actor: BranchSupervision
    object: BranchSupervision


def supervise(image: np.ndarray, example: ActorExample, cfg: RunConfig) -> TrainingItem:
    """Network input plus targets and weights for both branches of one actor example."""
    model, train = cfg.model, cfg.train
    grid = output_grid(model)
    K = model.num_verbs
    wo_actor, wo_object = wo_flags(train.wo_channel)
    verbs = example.actor_verbs() or frozenset({WO})
    common = dict(
        shape=grid,
        num_verbs=K,
        ratio=train.center_ratio,
        use_hanning=train.hanning,
        use_scale=train.scale_weight,
        scale_lambda=train.scale_lambda,
    )
    actor = build_branch([(example.actor_box, verbs)], include_wo=wo_actor, **common)
    obj_boxes = [(o.box, o.verbs) for o in example.interacting]
    obj_boxes += [(box, frozenset({WO})) for box, _ in example.other_objects]
    obj = build_branch(obj_boxes, include_wo=wo_object, **common)
    return TrainingItem(make_input(image, example.actor_box, model.mask_mode), actor, obj)


def _stack(items: Sequence[TrainingItem], attr: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    sups = [getattr(it, attr) for it in items]
    return (
        np.stack([s.target for s in sups]),
        np.stack([s.w_han for s in sups]),
        np.stack([s.w_scale for s in sups]),
    )


def batch_loss_and_grads(params: Parameters, items: Sequence[TrainingItem], cfg: RunConfig):
    """Summed two-branch loss over a batch and its parameter gradients."""
    x = np.stack([it.x for it in items])
    actor_map, object_map, cache = forward(params, x, cfg.model)
    ta, ha, sa = _stack(items, "actor")
    to, ho, so = _stack(items, "object")
    eps = cfg.loss.eps
    la = wce_forward(actor_map, ta, ha, sa, eps)
    lo = wce_forward(object_map, to, ho, so, eps)
    ga = cfg.loss.lambda_actor * wce_backward(actor_map, ta, ha, sa, eps)
    go = cfg.loss.lambda_object * wce_backward(object_map, to, ho, so, eps)
    grads = backward(params, cache, ga, go)
    return total_loss(la, lo, cfg.loss), grads


@dataclass
class TrainScene:
    index: int
    image: np.ndarray
    annotation: SceneAnnotation
    detections: List[Detection]


def epoch_seed(seed: int, epoch: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, epoch, stream])


def train(
    scenes: Sequence[TrainScene],
    cfg: RunConfig,
    params: Optional[Parameters] = None,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> Tuple[Parameters, AdamState, List[float]]:
    """Train from scratch (or from ``params``); returns params, optimizer state, per-epoch mean loss."""
    tc = cfg.train
    if params is None:
        params = init_params(cfg.model)
    state = AdamState.zeros_like(params, lr=tc.lr, beta1=tc.beta1, beta2=tc.beta2, eps=tc.adam_eps)

    pool: List[ActorExample] = []
    images: Dict[int, np.ndarray] = {}
    for scene in scenes:
        images[scene.index] = scene.image
        pool.extend(arrange_annotations(scene.detections, scene.annotation, scene.index))

    cache: Dict[Tuple[int, int], TrainingItem] = {}

    def item(ex: ActorExample) -> TrainingItem:
        key = (ex.scene_index, ex.detection_index)
        if key not in cache:
            cache[key] = supervise(images[ex.scene_index], ex, cfg)
        return cache[key]

    losses = []
    for epoch in range(tc.epochs):
        bal_seed = int(epoch_seed(tc.seed, epoch, 0).generate_state(1)[0])
        examples = balance_examples(pool, tc.balance_ratio, bal_seed)
        order = np.random.default_rng(epoch_seed(tc.seed, epoch, 1)).permutation(len(examples))
        total = 0.0
        for start in range(0, len(order), tc.batch_size):
            batch = [item(examples[i]) for i in order[start : start + tc.batch_size]]
            loss, grads = batch_loss_and_grads(params, batch, cfg)
            params, state = adam_step(params, grads, state)
            total += loss
        mean = total / max(len(examples), 1)
        losses.append(mean)
        log.info("epoch %d: mean loss %.4f over %d examples", epoch + 1, mean, len(examples))
        if on_epoch is not None:
            on_epoch(epoch, mean)
    return params, state, losses
