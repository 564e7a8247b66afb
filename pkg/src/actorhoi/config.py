"""Dataclass configs for every stage of the pipeline, with JSON round-tripping."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Tuple

MASK_MODES = ("rgbm", "rgb", "rgb+255")
WO_PLACEMENTS = ("none", "actor", "object", "both")
PREDICATES = ("overlap", "side_by_side", "above", "below")
VERB_NAMES = {"overlap": "hold", "side_by_side": "next_to", "above": "above", "below": "below"}


@dataclass
class SynthConfig:
    image_width: int = 64
    image_height: int = 64
    num_object_categories: int = 2
    humans_per_image: Tuple[int, int] = (1, 3)
    objects_per_image: Tuple[int, int] = (1, 3)
    human_width: Tuple[float, float] = (12.0, 16.0)
    human_height: Tuple[float, float] = (20.0, 28.0)
    object_size: Tuple[float, float] = (10.0, 14.0)
    # verb id -> geometric predicate name (see synth.PREDICATE_FUNCS)
    interaction_rules: List[str] = field(default_factory=lambda: ["overlap", "side_by_side", "above"])
    interaction_gap: float = 6.0
    jitter: float = 0.0
    fp_rate: float = 0.0
    max_detections: int = 100
    score_threshold: float = 0.05
    n_train: int = 200
    n_test: int = 50
    seed: int = 0

    @property
    def num_verbs(self) -> int:
        return len(self.interaction_rules)

    def validate(self) -> None:
        if self.num_verbs < 1:
            raise ValueError("need at least one verb")
        for name in self.interaction_rules:
            if name not in PREDICATES:
                raise ValueError(f"unknown interaction predicate {name!r}; choose from {PREDICATES}")
        if self.num_object_categories < 1:
            raise ValueError("need at least one object category")
        for label in ("humans_per_image", "objects_per_image", "human_width", "human_height", "object_size"):
            lo, hi = getattr(self, label)
            if lo > hi or lo < 0:
                raise ValueError(f"{label} range {lo, hi} is empty or negative")
        if self.humans_per_image[0] < 1:
            raise ValueError("every scene needs at least one human")
        if self.human_width[0] <= 0 or self.human_height[0] <= 0 or self.object_size[0] <= 0:
            raise ValueError("box sizes must be positive")
        if self.human_width[1] > self.image_width or self.human_height[1] > self.image_height:
            raise ValueError("human boxes cannot fit in the image")
        if self.object_size[1] > min(self.image_width, self.image_height):
            raise ValueError("object boxes cannot fit in the image")
        # humans never overlap each other, so a row of the widest must fit
        if self.humans_per_image[1] * self.human_width[1] > self.image_width:
            raise ValueError("too many humans for the image width")
        if not 0.0 <= self.jitter < 0.5:
            raise ValueError("jitter must lie in [0, 0.5)")
        if not 0.0 <= self.fp_rate <= 1.0:
            raise ValueError("fp_rate must lie in [0, 1]")
        if self.max_detections < 1:
            raise ValueError("max_detections must be positive")


@dataclass
class ConvSpec:
    kernel: int
    channels: int
    stride: int = 1
    dilation: int = 1
    activation: str = "relu"


def default_trunk() -> List[ConvSpec]:
    return [
        ConvSpec(3, 8, 2, 1),
        ConvSpec(3, 16, 2, 1),
        ConvSpec(3, 32, 1, 2),
        ConvSpec(3, 32, 1, 2),
    ]


@dataclass
class ModelConfig:
    input_width: int = 64
    input_height: int = 64
    num_verbs: int = 3
    mask_mode: str = "rgbm"
    trunk: List[ConvSpec] = field(default_factory=default_trunk)
    init: str = "lecun_uniform"
    head_bias_prob: float = 0.1
    seed: int = 0

    @property
    def in_channels(self) -> int:
        return 4 if self.mask_mode == "rgbm" else 3

    @property
    def stride(self) -> int:
        return math.prod(spec.stride for spec in self.trunk)

    @property
    def head_channels(self) -> int:
        return self.num_verbs + 1

    def validate(self) -> None:
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")
        if not self.trunk:
            raise ValueError("trunk needs at least one layer")
        for spec in self.trunk:
            if spec.kernel % 2 != 1:
                raise ValueError("only odd kernel sizes are supported")
            if spec.activation not in ("tanh", "relu"):
                raise ValueError(f"unsupported activation {spec.activation!r}")
        if self.num_verbs < 1:
            raise ValueError("need at least one verb")

    def digest(self) -> bytes:
        """SHA-256 over the canonical JSON form; guards checkpoint loading."""
        blob = json.dumps(to_dict(self), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()


@dataclass
class LossConfig:
    lambda_actor: float = 1.0
    lambda_object: float = 1.0
    eps: float = 1e-7

    def validate(self) -> None:
        if self.lambda_actor < 0 or self.lambda_object < 0:
            raise ValueError("branch weights must be non-negative")
        if not 0.0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 0.5)")


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    balance_ratio: float = 1.0
    center_ratio: float = 0.3
    wo_channel: str = "object"
    hanning: bool = True
    scale_weight: bool = True
    scale_lambda: float = 0.5
    actor_branch: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.wo_channel not in WO_PLACEMENTS:
            raise ValueError(f"wo_channel must be one of {WO_PLACEMENTS}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("bad training schedule")
        if not 0.0 < self.center_ratio <= 1.0:
            raise ValueError("center_ratio must lie in (0, 1]")


@dataclass
class InferenceConfig:
    top_k: int = 100
    actor_branch: bool = True


@dataclass
class EvalConfig:
    iou_threshold: float = 0.5
    rare_threshold: int = 10
    known_object: bool = False


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def resolve(self) -> "RunConfig":
        """Propagate shared settings between sections and validate everything."""
        self.model.num_verbs = self.synth.num_verbs
        self.model.input_width = self.synth.image_width
        self.model.input_height = self.synth.image_height
        if not self.train.actor_branch:
            self.loss.lambda_actor = 0.0
            self.inference.actor_branch = False
        self.synth.validate()
        self.model.validate()
        self.loss.validate()
        self.train.validate()
        return self


def to_dict(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


def _build(cls, data: dict):
    kwargs = {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown field {key!r} for {cls.__name__}")
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            value = _build(type(default), value)
        elif key == "trunk":
            value = [v if isinstance(v, ConvSpec) else ConvSpec(**v) for v in value]
        elif isinstance(default, tuple):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def from_dict(cls, data: dict):
    return _build(cls, data)


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return from_dict(RunConfig, json.load(fh))


def save_config(cfg: Any, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
