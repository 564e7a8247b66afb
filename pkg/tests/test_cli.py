import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from PIL import Image

from actorhoi.checkpoint import load_checkpoint
from actorhoi.cli import main
from actorhoi.config import RunConfig, from_dict, to_dict
from actorhoi.files import Dataset, load_schema, read_predictions
from actorhoi.pipeline import generate_split, train_on
from actorhoi.synth import complexity_subset, stub_detect
from actorhoi.inference import split_detections

SMALL = {"synth": {"n_train": 20, "n_test": 5}, "train": {"epochs": 2}}
TRAINED = {"synth": {"n_train": 120, "n_test": 20}, "train": {"epochs": 8}}


def _write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    out = json.loads(captured.out.strip().splitlines()[-1]) if code == 0 else None
    err = json.loads(captured.err.strip().splitlines()[-1]) if code != 0 else None
    return code, out, err


def _validate(path, schema):
    jsonschema.validate(json.loads(Path(path).read_text()), load_schema(schema))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("trained")
    cfg = _write(root, "cfg.json", TRAINED)
    assert main(["synth", "--config", cfg, "--out", str(root / "run")]) == 0
    assert main(["train", "--config", cfg, "--out", str(root / "run")]) == 0
    return root, cfg


def test_synth_default_config(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--out", tmp_path)
    assert code == 0
    for split, n in (("train", 200), ("test", 50)):
        path = tmp_path / "data" / f"{split}.json"
        _validate(path, "dataset")
        ds = Dataset(path)
        assert len(ds) == n and out["subsets"][split]["scenes"] == n
        assert (tmp_path / "data" / "images" / f"{split}_{ds.indices[0]:05d}.png").exists()
    _validate(tmp_path / "synth.config.json", "config")


def test_synth_same_seed_is_byte_identical(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", SMALL)
    for name in ("a", "b"):
        assert run(capsys, "synth", "--config", cfg, "--seed", 3, "--out", tmp_path / name)[0] == 0
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a" / "data").rglob("*") if p.is_file())
    assert files_a
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    run(capsys, "synth", "--config", cfg, "--seed", 4, "--out", tmp_path / "c")
    assert (tmp_path / "c/data/train.json").read_bytes() != (tmp_path / "a/data/train.json").read_bytes()


def test_synth_crowded_scenes_are_all_mh_mo(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", {"synth": {"humans_per_image": [2, 3], "objects_per_image": [2, 4], "n_train": 30, "n_test": 10}})
    code, out, _ = run(capsys, "synth", "--config", cfg, "--out", tmp_path)
    assert code == 0
    assert out["subsets"]["train"] == {"MH-MO": 30, "scenes": 30}
    ds = Dataset(tmp_path / "data" / "test.json")
    assert {complexity_subset(a) for a in ds.annotations} == {"MH-MO"}


def test_dataset_images_round_trip(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", SMALL)
    run(capsys, "synth", "--config", cfg, "--out", tmp_path)
    ds = Dataset(tmp_path / "data" / "train.json")
    scenes = generate_split(from_dict(RunConfig, SMALL).resolve().synth, "train")
    for (i, img, ann), (j, img2, ann2) in zip(ds.items(), scenes):
        assert i == j and ann == ann2
        assert np.array_equal(img, img2)


def test_train_writes_log_and_checkpoint(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", SMALL)
    run(capsys, "synth", "--config", cfg, "--out", tmp_path)
    code, out, _ = run(capsys, "train", "--config", cfg, "--out", tmp_path)
    assert code == 0
    entries = [json.loads(line) for line in (tmp_path / "loss_log.jsonl").read_text().splitlines()]
    assert [e["epoch"] for e in entries] == [1, 2]
    assert entries[1]["mean_loss"] < entries[0]["mean_loss"]
    # the CLI path trains exactly like the in-memory pipeline
    rc = from_dict(RunConfig, SMALL).resolve()
    params, _, losses = train_on(generate_split(rc.synth, "train"), rc)
    stored, _, _ = load_checkpoint(tmp_path / "model.ckpt", rc.model)
    assert losses == [e["mean_loss"] for e in entries]
    assert all(np.array_equal(stored[k], params[k]) for k in params)


def test_train_is_bit_reproducible(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", SMALL)
    run(capsys, "synth", "--config", cfg, "--out", tmp_path / "a")
    for name in ("a", "b"):
        assert run(capsys, "train", "--config", cfg, "--out", tmp_path / name, "--data", tmp_path / "a" / "data")[0] == 0
    assert (tmp_path / "a/model.ckpt").read_bytes() == (tmp_path / "b/model.ckpt").read_bytes()


def test_train_rgb_ablation_has_three_input_channels(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", SMALL)
    run(capsys, "synth", "--config", cfg, "--out", tmp_path)
    assert run(capsys, "train", "--config", cfg, "--out", tmp_path, "--mask-mode", "rgb")[0] == 0
    params, _, _ = load_checkpoint(tmp_path / "model.ckpt")
    assert params["conv0.weight"].shape[1] == 3
    snap = json.loads((tmp_path / "train.config.json").read_text())
    assert snap["model"]["mask_mode"] == "rgb"


def test_flags_override_config(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", SMALL)
    run(capsys, "synth", "--config", cfg, "--out", tmp_path, "--actor-branch", "off", "--wo-channel", "both",
        "--hanning", "off", "--scale-weight", "off", "--epochs", 7, "--lr", 0.01, "--top-k", 5)
    snap = json.loads((tmp_path / "synth.config.json").read_text())
    assert snap["train"]["actor_branch"] is False and snap["loss"]["lambda_actor"] == 0.0
    assert snap["train"]["wo_channel"] == "both" and snap["train"]["epochs"] == 7 and snap["train"]["lr"] == 0.01
    assert snap["train"]["hanning"] is False and snap["train"]["scale_weight"] is False
    assert snap["inference"]["top_k"] == 5 and snap["synth"]["n_train"] == 20


def test_eval_trained_beats_untrained(trained, tmp_path, capsys):
    root, cfg = trained
    run_dir = root / "run"
    code, out, _ = run(capsys, "eval", "--config", cfg, "--out", run_dir)
    assert code == 0
    _validate(run_dir / "report.json", "report")
    _validate(run_dir / "predictions.json", "predictions")
    assert (run_dir / "report.txt").read_text().startswith("metric")
    untrained_cfg = _write(tmp_path, "zero.json", {**TRAINED, "train": {"epochs": 0}})
    run(capsys, "train", "--config", untrained_cfg, "--out", tmp_path, "--data", run_dir / "data")
    code, base, _ = run(capsys, "eval", "--config", untrained_cfg, "--out", tmp_path, "--data", run_dir / "data")
    assert code == 0
    assert base["mAP"] < out["mAP"]


def test_eval_gt_boxes_beat_jittered(trained, tmp_path, capsys):
    root, cfg = trained
    run_dir = root / "run"
    ckpt = run_dir / "model.ckpt"
    common = ("--config", cfg, "--data", run_dir / "data", "--checkpoint", ckpt)
    _, clean, _ = run(capsys, "eval", *common, "--out", tmp_path / "clean", "--jitter", 0)
    _, noisy, _ = run(capsys, "eval", *common, "--out", tmp_path / "noisy", "--jitter", 0.1)
    assert clean["mAP"] >= noisy["mAP"]


def test_infer_writes_ranked_predictions(trained, tmp_path, capsys):
    root, cfg = trained
    code, out, _ = run(capsys, "infer", "--config", cfg, "--out", tmp_path, "--data", root / "run/data",
                       "--checkpoint", root / "run/model.ckpt", "--top-k", 3)
    assert code == 0
    _validate(tmp_path / "predictions.json", "predictions")
    indices, preds = read_predictions(tmp_path / "predictions.json")
    assert indices == list(range(120, 140))
    for ps in preds:
        assert len(ps) <= 3
        assert [p.score for p in ps] == sorted((p.score for p in ps), reverse=True)


def test_heatmap_files(trained, tmp_path, capsys):
    root, cfg = trained
    ds = Dataset(root / "run/data/test.json")
    rc = from_dict(RunConfig, TRAINED).resolve()
    # first test scene with at least two detected humans
    image_index = next(
        i for i, (idx, ann) in enumerate(zip(ds.indices, ds.annotations))
        if len(split_detections(stub_detect(ann, rc.synth, idx))[0]) >= 2
    )
    common = ("--config", cfg, "--out", tmp_path, "--data", root / "run/data", "--checkpoint", root / "run/model.ckpt",
              "--image-index", image_index)
    _, first, _ = run(capsys, "heatmap", *common, "--actor-index", 0)
    _, second, _ = run(capsys, "heatmap", *common, "--actor-index", 1)
    assert len(first["files"]) == 2 * (3 + 1) + 1
    for f in first["files"]:
        px = np.asarray(Image.open(f))
        assert px.dtype == np.uint8 and px.min() >= 0 and px.max() <= 255
    obj_a = [Path(f).read_bytes() for f in first["files"] if "object_" in f]
    obj_b = [Path(f).read_bytes() for f in second["files"] if "object_" in f]
    assert obj_a != obj_b
    mask = np.asarray(Image.open(next(f for f in first["files"] if f.endswith("mask.png"))))
    assert set(np.unique(mask)) == {0, 255}


def test_heatmap_index_out_of_range(trained, tmp_path, capsys):
    root, cfg = trained
    code, _, err = run(capsys, "heatmap", "--config", cfg, "--out", tmp_path, "--data", root / "run/data",
                       "--checkpoint", root / "run/model.ckpt", "--image-index", 999)
    assert code == 1 and err["status"] == "error" and "999" in err["message"]


def test_missing_artifacts_fail_with_json_line(tmp_path, capsys):
    code, _, err = run(capsys, "eval", "--out", tmp_path)
    assert code == 1 and err["command"] == "eval" and err["error"] == "CliError"
    cfg = _write(tmp_path, "cfg.json", SMALL)
    run(capsys, "synth", "--config", cfg, "--out", tmp_path)
    code, _, err = run(capsys, "eval", "--config", cfg, "--out", tmp_path)
    assert code == 1 and "checkpoint" in err["message"]


def test_dataset_config_mismatch(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", SMALL)
    run(capsys, "synth", "--config", cfg, "--out", tmp_path)
    code, _, err = run(capsys, "train", "--config", cfg, "--out", tmp_path, "--seed", 9)
    assert code == 1 and "different synth config" in err["message"]


def test_bad_config_file(tmp_path, capsys):
    cfg = _write(tmp_path, "cfg.json", {"synth": {"no_such_field": 1}})
    code, _, err = run(capsys, "synth", "--config", cfg, "--out", tmp_path)
    assert code == 1 and err["error"] == "ValueError"


def test_bad_flag_value_exits_nonzero(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--hanning", "maybe", "--out", str(tmp_path)])
    assert exc.value.code != 0


def test_output_root_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ACTORHOI_OUT", str(tmp_path / "envroot"))
    cfg = _write(tmp_path, "cfg.json", SMALL)
    assert run(capsys, "synth", "--config", cfg)[0] == 0
    assert (tmp_path / "envroot" / "data" / "train.json").exists()


def test_config_schema_accepts_defaults():
    jsonschema.validate(to_dict(RunConfig()), load_schema("config"))
