"""Per-actor inference: index both branch maps at box centers and compose HOI scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .config import InferenceConfig, ModelConfig
from .geometry import BBox, GridShape, center_point, to_grid
from .model import Parameters, forward
from .supervision import make_input
from .synth import Detection


@dataclass(frozen=True)
class HoiPrediction:
    human_box: BBox
    human_score: float
    object_box: BBox
    object_category: int
    object_score: float
    verb: int
    score: float
    human_index: int = 0
    object_index: int = 0

    def to_json(self) -> dict:
        return {
            "human_box": list(self.human_box.as_tuple()),
            "human_score": self.human_score,
            "object_box": list(self.object_box.as_tuple()),
            "object_category": self.object_category,
            "object_score": self.object_score,
            "verb": self.verb,
            "score": self.score,
            "human_index": self.human_index,
            "object_index": self.object_index,
        }

    @classmethod
    def from_json(cls, d: dict) -> "HoiPrediction":
        return cls(
            human_box=BBox.from_seq(d["human_box"]),
            human_score=float(d["human_score"]),
            object_box=BBox.from_seq(d["object_box"]),
            object_category=int(d["object_category"]),
            object_score=float(d["object_score"]),
            verb=int(d["verb"]),
            score=float(d["score"]),
            human_index=int(d.get("human_index", 0)),
            object_index=int(d.get("object_index", 0)),
        )


def index_scores(grid: np.ndarray, cell: Tuple[int, int]) -> np.ndarray:
    """Channel vector of an ``(H', W', C)`` map at grid cell ``(column, row)``."""
    cx, cy = cell
    H, W = grid.shape[:2]
    if not (0 <= cx < W and 0 <= cy < H):
        raise IndexError(f"cell {cell} outside a {W}x{H} grid")
    return grid[cy, cx, :].copy()


def compose_pair(actor_scores: np.ndarray, object_scores: np.ndarray, s_a: float, s_o: float) -> np.ndarray:
    """HOI score per verb; the trailing w/o-interaction entry is dropped."""
    K = len(actor_scores) - 1
    return actor_scores[:K] * object_scores[:K] * s_a * s_o


def output_grid(config: ModelConfig) -> GridShape:
    return GridShape.for_image(config.input_width, config.input_height, config.stride)


def split_detections(detections: Sequence[Detection]) -> Tuple[List[Detection], List[Detection]]:
    humans = [d for d in detections if d.is_human]
    objects = [d for d in detections if not d.is_human]
    return humans, objects


def _actor_maps(params, image, actor: BBox, model_config: ModelConfig):
    x = make_input(image, actor, model_config.mask_mode)
    actor_map, object_map, _ = forward(params, x, model_config)
    return actor_map, object_map


@dataclass(frozen=True)
class AgentPrediction:
    human_box: BBox
    human_index: int
    scores: np.ndarray  # (K,)


def run_actors(
    params: Parameters,
    image: np.ndarray,
    detections: Sequence[Detection],
    model_config: ModelConfig,
    config: InferenceConfig = InferenceConfig(),
) -> Tuple[List[HoiPrediction], List[AgentPrediction]]:
    """Actor Switch loop: one forward pass per detected human, with that human as the actor.

    Returns the ranked, top-k truncated HOI triplets and the per-human agent
    scores. With ``config.actor_branch`` off the actor verb scores are taken
    as 1 when composing triplets.
    """
    humans, objects = split_detections(detections)
    grid = output_grid(model_config)
    K = model_config.num_verbs
    obj_cells = [to_grid(center_point(o.box), grid) for o in objects]
    preds: List[HoiPrediction] = []
    agents: List[AgentPrediction] = []
    for hi, human in enumerate(humans):
        actor_map, object_map = _actor_maps(params, image, human.box, model_config)
        s_actor = index_scores(actor_map, to_grid(center_point(human.box), grid))
        agents.append(AgentPrediction(human.box, hi, s_actor[:K] * human.score))
        if not config.actor_branch:
            s_actor = np.ones(K + 1)
        for oi, (obj, cell) in enumerate(zip(objects, obj_cells)):
            hoi = compose_pair(s_actor, index_scores(object_map, cell), human.score, obj.score)
            for v in range(K):
                preds.append(
                    HoiPrediction(human.box, human.score, obj.box, obj.category, obj.score, v, float(hoi[v]), hi, oi)
                )
    preds.sort(key=lambda p: (-p.score, p.human_index, p.object_index, p.verb))
    return preds[: config.top_k], agents


def detect_hoi(
    params: Parameters,
    image: np.ndarray,
    detections: Sequence[Detection],
    model_config: ModelConfig,
    config: InferenceConfig = InferenceConfig(),
) -> List[HoiPrediction]:
    """Triplets sorted by score, ties by (human, object, verb) index; at most ``top_k``."""
    return run_actors(params, image, detections, model_config, config)[0]


def agent_scores(
    params: Parameters, image: np.ndarray, detections: Sequence[Detection], model_config: ModelConfig
) -> List[AgentPrediction]:
    """Per detected human: actor verb scores at its center times its detection score."""
    return run_actors(params, image, detections, model_config)[1]
