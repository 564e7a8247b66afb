"""End-to-end stages on in-memory scenes: detections, training, prediction, evaluation."""

from __future__ import annotations

import dataclasses
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig, SynthConfig
from .evaluation import EvalReport, class_counts, evaluate
from .inference import AgentPrediction, HoiPrediction, run_actors
from .model import Parameters
from .synth import SceneAnnotation, generate_scene, split_indices, stub_detect
from .training import TrainScene, train

Scene = Tuple[int, np.ndarray, SceneAnnotation]


def generate_split(config: SynthConfig, split: str) -> List[Scene]:
    out = []
    for index in split_indices(config, split):
        image, ann = generate_scene(config, index)
        out.append((index, image, ann))
    return out


def with_detections(scenes: Sequence[Scene], config: SynthConfig) -> List[TrainScene]:
    return [TrainScene(i, img, ann, stub_detect(ann, config, i)) for i, img, ann in scenes]


def detector_config(config: SynthConfig, jitter: Optional[float] = None, fp_rate: Optional[float] = None) -> SynthConfig:
    changes = {}
    if jitter is not None:
        changes["jitter"] = jitter
    if fp_rate is not None:
        changes["fp_rate"] = fp_rate
    return dataclasses.replace(config, **changes)


def train_on(scenes: Sequence[Scene], cfg: RunConfig, on_epoch=None):
    return train(with_detections(scenes, cfg.synth), cfg, on_epoch=on_epoch)


def predict(
    params: Parameters, scenes: Sequence[Scene], cfg: RunConfig, detector: Optional[SynthConfig] = None
) -> Tuple[List[List[HoiPrediction]], List[List[AgentPrediction]]]:
    detector = detector or cfg.synth
    preds, agents = [], []
    for index, image, ann in scenes:
        dets = stub_detect(ann, detector, index)
        p, a = run_actors(params, image, dets, cfg.model, cfg.inference)
        preds.append(p)
        agents.append(a)
    return preds, agents


def evaluate_on(
    params: Parameters,
    scenes: Sequence[Scene],
    cfg: RunConfig,
    detector: Optional[SynthConfig] = None,
    train_annotations: Optional[Sequence[SceneAnnotation]] = None,
) -> EvalReport:
    preds, agents = predict(params, scenes, cfg, detector)
    counts = class_counts(train_annotations) if train_annotations is not None else None
    return evaluate(
        preds,
        [ann for _, _, ann in scenes],
        cfg.synth.num_verbs,
        cfg.synth.num_object_categories,
        cfg.eval,
        agents_per_image=agents,
        train_counts=counts,
    )
