"""End-to-end command-line behavior: files written, exit codes, determinism."""

import json
import os

import numpy as np
import pytest

from occludox.cli import main
from occludox.dataio import (gen_synthetic_signs, load_checkpoint,
                             load_image_dir, read_ppm, read_report_csv,
                             save_checkpoint, split_dataset, write_ppm)
from occludox.models import accuracy, build_cnn, desk_spec

DATASET = {"seed": 7, "classes": 4, "per_class": 5, "side": 16}


def _cfg(tmp_path, extra, name="cfg.json"):
    cfg = {"dataset": dict(DATASET)}
    cfg.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _tiny_test_split():
    ds = gen_synthetic_signs(7, 4, 5, 16)
    return split_dataset(ds)[2]


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.ckpt"
    save_checkpoint(build_cnn(desk_spec(classes=4, side=16), 0), path)
    return str(path)


# -- gen-data ---------------------------------------------------------------

def test_gen_data_round_trip(tmp_path, capsys):
    out = tmp_path / "data"
    cfg = _cfg(tmp_path, {})
    assert main(["gen-data", "--config", cfg, "--out", str(out)]) == 0
    assert "wrote 20 images" in capsys.readouterr().out
    ds = load_image_dir(out, out / "labels.csv")
    ref = gen_synthetic_signs(7, 4, 5, 16)
    assert np.max(np.abs(ds.images - ref.images)) <= 0.5 / 255 + 1e-12
    assert np.array_equal(ds.labels, ref.labels)


def test_gen_data_force_guard(tmp_path, capsys):
    out = tmp_path / "data"
    cfg = _cfg(tmp_path, {})
    assert main(["gen-data", "--config", cfg, "--out", str(out)]) == 0
    first = (out / "img_00000.ppm").read_bytes()
    assert main(["gen-data", "--config", cfg, "--out", str(out)]) == 3
    assert "--force" in capsys.readouterr().err
    assert main(["gen-data", "--config", cfg, "--out", str(out), "--force"]) == 0
    assert (out / "img_00000.ppm").read_bytes() == first


# -- train ------------------------------------------------------------------

def test_train_clean_writes_checkpoint(tmp_path):
    cfg = _cfg(tmp_path, {"train": {"method": "clean", "epochs": 1}})
    out = tmp_path / "clean.ckpt"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    params = load_checkpoint(out, desk_spec(classes=4, side=16))
    assert "conv0.weight" in params.tensors
    log_lines = (tmp_path / "clean.ckpt.log.csv").read_text().splitlines()
    assert log_lines[0] == "epoch,mean_loss"
    assert len(log_lines) == 2


def test_train_curriculum_stage_files(tmp_path):
    cfg = _cfg(tmp_path, {"train": {"method": "cat", "epochs": 1,
                                    "start_eps": 4.0, "target_eps": 16.0,
                                    "iterations": 2}})
    out = tmp_path / "cat.ckpt"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    for eps in (4, 8, 16):
        assert (tmp_path / f"cat-eps{eps}.ckpt").exists()
    # the final stage is the model the command leaves behind
    assert (tmp_path / "cat-eps16.ckpt").read_bytes() == out.read_bytes()


def test_train_unknown_method(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"train": {"method": "banana"}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "x.ckpt")]) == 2
    assert "train.method" in capsys.readouterr().err


def test_train_determinism(tmp_path):
    cfg = _cfg(tmp_path, {"train": {"method": "clean", "epochs": 1, "seed": 3}})
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    assert main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


# -- attack -----------------------------------------------------------------

def test_attack_report_and_zero_strength(tmp_path, ckpt):
    cfg = _cfg(tmp_path, {"attack": {"kind": "pgd", "checkpoint": ckpt,
                                     "grid": [0, 2], "defense_id": "clean"}})
    out = tmp_path / "report.csv"
    assert main(["attack", "--config", cfg, "--out", str(out)]) == 0
    report = read_report_csv(out)
    assert [r.value for r in report.rows] == [0.0, 2.0]
    assert report.rows[0].param == "iterations"
    clean_acc = accuracy(load_checkpoint(ckpt, desk_spec(classes=4, side=16)),
                         _tiny_test_split())
    assert report.rows[0].accuracy == float(f"{clean_acc:.4f}")
    assert os.path.exists(str(out) + ".meta.json")


def test_attack_missing_checkpoint_key(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"attack": {"kind": "pgd"}})
    assert main(["attack", "--config", cfg]) == 2
    assert "attack.checkpoint" in capsys.readouterr().err


def test_attack_dump_images(tmp_path, ckpt):
    cfg = _cfg(tmp_path, {"attack": {"kind": "pgd", "checkpoint": ckpt,
                                     "grid": [2], "dump": True}})
    out = tmp_path / "r.csv"
    assert main(["attack", "--config", cfg, "--out", str(out)]) == 0
    dump_dir = tmp_path / "r_adv"
    names = sorted(os.listdir(dump_dir))
    assert len(names) == len(_tiny_test_split())
    img = read_ppm(dump_dir / names[0])
    assert img.shape == (3, 16, 16)


# -- sweep ------------------------------------------------------------------

def test_sweep_rows_and_plot(tmp_path, ckpt):
    cfg = _cfg(tmp_path, {"attack": {"kind": "pgd", "grid": [0, 2]},
                          "sweep": {"defenses": [
                              {"id": "modelA", "checkpoint": ckpt},
                              {"id": "modelB", "checkpoint": ckpt}]}})
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    report = read_report_csv(out)
    assert [(r.defense, r.value) for r in report.rows] == [
        ("modelA", 0.0), ("modelA", 2.0), ("modelB", 0.0), ("modelB", 2.0)]

    svg = tmp_path / "sweep.svg"
    assert main(["plot", str(out), "--out", str(svg)]) == 0
    text = svg.read_text()
    assert text.count("<polyline") == 2
    assert "modelA" in text and "modelB" in text
    again = tmp_path / "again.svg"
    assert main(["plot", str(out), "--out", str(again)]) == 0
    assert again.read_bytes() == svg.read_bytes()


def test_sweep_missing_checkpoint_aborts_early(tmp_path, ckpt, capsys):
    cfg = _cfg(tmp_path, {"attack": {"kind": "pgd", "grid": [0]},
                          "sweep": {"defenses": [
                              {"id": "good", "checkpoint": ckpt},
                              {"id": "bad", "checkpoint": str(tmp_path / "no.ckpt")}]}})
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 3
    assert "no.ckpt" in capsys.readouterr().err
    assert not out.exists()


def test_sweep_no_defenses(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"sweep": {"defenses": []}})
    assert main(["sweep", "--config", cfg]) == 2
    assert "sweep.defenses" in capsys.readouterr().err


# -- smooth-predict ---------------------------------------------------------

def test_smooth_predict(tmp_path, ckpt, capsys):
    img_path = tmp_path / "img.ppm"
    write_ppm(img_path, _tiny_test_split().images[0])
    cfg = _cfg(tmp_path, {"smooth": {"checkpoint": ckpt, "samples": 50},
                          "dataset": {"classes": 4}})
    assert main(["smooth-predict", str(img_path), "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert out.startswith("class ")
    votes = json.loads(out.split("votes ")[1])
    assert sum(votes) == 50


# -- plumbing ---------------------------------------------------------------

def test_bad_log_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("OCCLUDOX_LOG", "loud")
    assert main(["plot", str(tmp_path / "missing.csv")]) == 2
    assert "OCCLUDOX_LOG" in capsys.readouterr().err


def test_threads_must_be_positive(tmp_path, capsys):
    cfg = _cfg(tmp_path, {})
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "d"),
                 "--threads", "0"]) == 2


def test_invalid_json_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["gen-data", "--config", str(bad)]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_plot_missing_report(tmp_path, capsys):
    assert main(["plot", str(tmp_path / "none.csv")]) == 3
