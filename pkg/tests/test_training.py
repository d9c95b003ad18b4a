"""Featurization and training-loop behavior on a small rendered dataset."""

import json
import os

import numpy as np
import pytest

from seld6dof.accdoa import adpit_loss
from seld6dof.errors import DataError
from seld6dof.features import extract_features, load_features, load_wav
from seld6dof.features import standardization_stats
from seld6dof.model import AUDIO_TIME_POOL, load_model
from seld6dof.sensor import load_sensor
from seld6dof.sim import gen_split
from seld6dof.training import (SUBSETS, evaluate_model, featurize_dataset,
                               label_frame_times, load_index, scene_tensors,
                               select_scenes, train_model)


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("trainws")
    data = root / "data"
    feat = root / "feat"
    gen_split(str(data), 9, seed=11, duration=2.0)
    index = featurize_dataset(str(data / "manifest.json"), str(feat))
    return {"root": root, "data": data, "feat": str(feat), "index": index}


def test_index_schema(ws):
    index = load_index(ws["feat"])
    assert index["data_dir"] == str(ws["data"])
    assert len(index["scenes"]) == 9
    for s in index["scenes"]:
        assert set(s) == {"stem", "features", "sensor", "labels", "profile",
                          "snr_db", "split"}
        assert os.path.isfile(os.path.join(ws["feat"], s["features"]))
        assert os.path.isfile(os.path.join(ws["feat"], s["sensor"]))


def test_stats_come_from_train_split_only(ws):
    with open(os.path.join(ws["feat"], "stats.json")) as fh:
        stats = json.load(fh)
    maps = []
    for s in ws["index"]["scenes"]:
        if s["split"] != "train":
            continue
        wav, fs = load_wav(str(ws["data"] / "scenes" / (s["stem"] + ".wav")))
        maps.append(extract_features(wav, fs))
    mean, std = standardization_stats(maps)
    assert np.allclose(stats["mean"], mean, atol=1e-12)
    assert np.allclose(stats["std"], std, atol=1e-12)


def test_standardized_train_features_are_centered(ws):
    pooled = [load_features(os.path.join(ws["feat"], s["features"])).values
              for s in ws["index"]["scenes"] if s["split"] == "train"]
    stack = np.concatenate(pooled, axis=0)  # (sum T, C, F)
    per_channel = stack.transpose(1, 0, 2).reshape(stack.shape[1], -1)
    # stored features are float32, hence the loose-ish tolerances
    assert np.abs(per_channel.mean(axis=1)).max() < 1e-6
    assert np.abs(per_channel.std(axis=1) - 1.0).max() < 1e-3


def test_sensor_stream_on_label_grid(ws):
    s = ws["index"]["scenes"][0]
    frames = load_sensor(os.path.join(ws["feat"], s["sensor"]))
    fm = load_features(os.path.join(ws["feat"], s["features"]))
    want = label_frame_times(fm.frames // AUDIO_TIME_POOL)
    assert len(frames) == len(want)
    assert np.allclose([f.t for f in frames], want, atol=1e-9)


def test_scene_tensors_shapes(ws):
    index = load_index(ws["feat"])
    feats, sensor, target = scene_tensors(ws["feat"], index,
                                          index["scenes"][0])
    assert feats.shape[1:] == (7, 64)
    assert sensor.shape == (feats.shape[0] // AUDIO_TIME_POOL, 6)
    assert target.slots.shape[0] == sensor.shape[0]
    assert np.isfinite(feats).all() and np.isfinite(sensor).all()


def test_featurize_idempotent_unless_force(ws):
    marker = os.path.join(ws["feat"], "stats.json")
    before = os.path.getmtime(marker)
    featurize_dataset(str(ws["data"] / "manifest.json"), ws["feat"])
    assert os.path.getmtime(marker) == before
    featurize_dataset(str(ws["data"] / "manifest.json"), ws["feat"],
                      force=True)
    assert os.path.getmtime(marker) >= before


def test_profile_filter_limits_train_scenes(ws):
    index = load_index(ws["feat"])
    stat_only = select_scenes(index, "train", ("stat",))
    assert stat_only and all(s["profile"] == "stat" for s in stat_only)
    assert len(stat_only) < len(select_scenes(index, "train"))


def test_checkpoint_is_best_val_epoch(ws, tmp_path):
    run = str(tmp_path / "run")
    history, best, paths = train_model(ws["feat"], "B", seed=1, epochs=3,
                                       run_dir=run)
    vals = [r["val_loss"] for r in history]
    assert best == int(np.argmin(vals)) + 1
    net = load_model(paths["checkpoint"], paths["config"])
    net.eval()
    index = load_index(ws["feat"])
    total = 0.0
    val = select_scenes(index, "val")
    for s in val:
        feats, sensor, target = scene_tensors(ws["feat"], index, s)
        total += float(adpit_loss(net(feats, None), target).data)
    assert abs(total / len(val) - vals[best - 1]) < 1e-12


def test_train_errors_on_empty_selection(ws):
    with pytest.raises(DataError):
        train_model(ws["feat"], "B", seed=0, epochs=1, train_profiles=())


def test_evaluate_reports_all_subsets(ws, tmp_path):
    _, _, paths = train_model(ws["feat"], "B", seed=2, epochs=1,
                              run_dir=str(tmp_path / "r"))
    net = load_model(paths["checkpoint"], paths["config"])
    reports = evaluate_model(net, ws["feat"], split="test")
    assert set(reports) == set(SUBSETS)
    for rep in reports.values():
        assert rep.er >= 0.0 and 0.0 <= rep.lr_cd_pct <= 100.0
    with pytest.raises(DataError):
        evaluate_model(net, ws["feat"], split="nope")
