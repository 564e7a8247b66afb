"""On-disk formats: dataset splits, prediction dumps, evaluation reports, heatmaps.

JSON schemas for each document live in ``actorhoi/schemas``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from PIL import Image

from .config import SynthConfig, from_dict, to_dict
from .geometry import BBox
from .inference import HoiPrediction
from .synth import SceneAnnotation, generate_scene, split_indices

DATASET_FORMAT = "actorhoi-dataset"
PREDICTIONS_FORMAT = "actorhoi-predictions"
REPORT_FORMAT = "actorhoi-report"


def load_schema(name: str) -> dict:
    text = resources.files("actorhoi").joinpath("schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def _dump(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def annotation_to_json(ann: SceneAnnotation) -> dict:
    return {
        "width": ann.width,
        "height": ann.height,
        "humans": [list(b.as_tuple()) for b in ann.humans],
        "objects": [{"box": list(b.as_tuple()), "category": c} for b, c in ann.objects],
        "triplets": [{"human": h, "verb": v, "object": o} for h, v, o in ann.triplets],
    }


def annotation_from_json(d: dict) -> SceneAnnotation:
    return SceneAnnotation(
        width=int(d["width"]),
        height=int(d["height"]),
        humans=[BBox.from_seq(b) for b in d["humans"]],
        objects=[(BBox.from_seq(o["box"]), int(o["category"])) for o in d["objects"]],
        triplets=[(int(t["human"]), int(t["verb"]), int(t["object"])) for t in d["triplets"]],
    )


def save_image(image: np.ndarray, path: Path) -> None:
    Image.fromarray(np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)).save(path)


def load_image(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0


def write_split(out_dir, config: SynthConfig, split: str) -> Path:
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    scenes = []
    for index in split_indices(config, split):
        image, ann = generate_scene(config, index)
        rel = f"images/{split}_{index:05d}.png"
        save_image(image, out_dir / rel)
        scenes.append({"index": index, "image_file": rel, "annotation": annotation_to_json(ann)})
    doc = {"format": DATASET_FORMAT, "version": 1, "split": split, "config": to_dict(config), "scenes": scenes}
    path = out_dir / f"{split}.json"
    _dump(doc, path)
    return path


class Dataset:
    """A loaded split: config plus ``(index, image, annotation)`` per scene."""

    def __init__(self, path):
        path = Path(path)
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != DATASET_FORMAT:
            raise ValueError(f"{path} is not a dataset file")
        self.path = path
        self.split = doc["split"]
        self.config: SynthConfig = from_dict(SynthConfig, doc["config"])
        self.indices: List[int] = [s["index"] for s in doc["scenes"]]
        self.annotations: List[SceneAnnotation] = [annotation_from_json(s["annotation"]) for s in doc["scenes"]]
        self._files = [path.parent / s["image_file"] for s in doc["scenes"]]
        self._images = {}

    def __len__(self) -> int:
        return len(self.indices)

    def image(self, i: int) -> np.ndarray:
        if i not in self._images:
            self._images[i] = load_image(self._files[i])
        return self._images[i]

    def items(self):
        for i in range(len(self)):
            yield self.indices[i], self.image(i), self.annotations[i]


def write_predictions(path, indices: Sequence[int], preds_per_image: Sequence[Sequence[HoiPrediction]]) -> None:
    doc = {
        "format": PREDICTIONS_FORMAT,
        "version": 1,
        "images": [
            {"index": idx, "predictions": [p.to_json() for p in preds]}
            for idx, preds in zip(indices, preds_per_image)
        ],
    }
    _dump(doc, Path(path))


def read_predictions(path) -> Tuple[List[int], List[List[HoiPrediction]]]:
    with open(path) as fh:
        doc = json.load(fh)
    indices = [img["index"] for img in doc["images"]]
    preds = [[HoiPrediction.from_json(p) for p in img["predictions"]] for img in doc["images"]]
    return indices, preds


def write_report(out_dir, report) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    doc = {"format": REPORT_FORMAT, "version": 1, **report.to_json()}
    jpath, tpath = out_dir / "report.json", out_dir / "report.txt"
    _dump(doc, jpath)
    tpath.write_text(report.to_text())
    return jpath, tpath


def save_heatmap(channel: np.ndarray, path, upscale: int = 1) -> None:
    """Write a 2-D map as 8-bit grayscale (values times 255, clamped)."""
    pixels = np.clip(np.round(np.asarray(channel) * 255.0), 0, 255).astype(np.uint8)
    if upscale > 1:
        pixels = np.kron(pixels, np.ones((upscale, upscale), dtype=np.uint8))
    Image.fromarray(pixels).save(path)
