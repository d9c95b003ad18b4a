"""Featurization, sequence training, and subset evaluation.

Scenes flow from a simulator manifest to per-scene artifacts in a feature
directory: standardized acoustic features (train-split statistics only),
a 6-channel motion stream causally aligned to the 100 ms label grid, and an
index tying everything together. Training runs whole scenes as sequences
with gradient accumulation; the checkpoint kept is the best-validation one.
"""

import csv
import json
import os
import time

import numpy as np

from . import autodiff as ad
from .accdoa import adpit_loss, decode, encode_targets
from .errors import ConfigurationError, DataError, NumericError
from .features import (apply_standardization, extract_features, load_features,
                       load_wav, save_features, standardization_stats)
from .geometry import load_poses
from .labels import LABEL_FRAME_S, load_labels
from .metrics import compute_metrics
from .model import AUDIO_TIME_POOL, ModelConfig, SeldNet
from .pool import ordered_map
from .sensor import (SensorFrame, align_to_frames, derive_motion, load_sensor,
                     resample_uniform, save_sensor)
from .sim.dataset import load_manifest

SENSOR_FPS = 20.0
SUBSETS = ("all", "stat", "3dof", "6dof")


def label_frame_times(n_frames):
    """Centers of the 100 ms label frames; the grid sensor data aligns to."""
    return (np.arange(n_frames) + 0.5) * LABEL_FRAME_S


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


# ------------------------------------------------------------- featurization

def _sensor_stream(poses, n_frames):
    """Pose track -> (T', 6) causal motion stream on the label grid."""
    uniform = resample_uniform(poses, SENSOR_FPS)
    motion = derive_motion(uniform)
    return align_to_frames(motion, label_frame_times(n_frames), mode="causal")


def _featurize_job(job):
    data_dir, entry = job
    wav, fs = load_wav(os.path.join(data_dir, entry["wav"]))
    fm = extract_features(wav, fs)
    poses = load_poses(os.path.join(data_dir, entry["poses"]))
    return fm, _sensor_stream(poses, fm.frames // AUDIO_TIME_POOL)


def featurize_dataset(manifest_path, feature_dir, force=False, jobs=1,
                      progress=None):
    """Extract features and motion streams for every manifest scene.

    Standardization statistics come from the train split alone and are
    frozen into stats.json; features on disk are already standardized.
    Returns the index dict (and reuses an existing one unless force).
    """
    index_path = os.path.join(feature_dir, "index.json")
    if os.path.exists(index_path) and not force:
        return load_index(feature_dir)

    entries, data_dir = load_manifest(manifest_path)
    os.makedirs(feature_dir, exist_ok=True)
    raw, scenes = [], []
    jobs_in = [(data_dir, e) for e in entries]
    for i, (e, (fm, stream)) in enumerate(
            zip(entries, ordered_map(_featurize_job, jobs_in, jobs))):
        stem = _stem(e["wav"])
        raw.append((fm, stream))
        scenes.append({"stem": stem,
                       "features": stem + ".feat",
                       "sensor": stem + "_sensor.csv",
                       "labels": e["labels"],
                       "profile": e["profile"],
                       "snr_db": e["snr_db"],
                       "split": e["split"]})
        if progress is not None:
            progress(i + 1, len(entries))

    train_maps = [fm for (fm, _), s in zip(raw, scenes) if s["split"] == "train"]
    if not train_maps:
        raise DataError("manifest has no train-split scenes to standardize on")
    mean, std = standardization_stats(train_maps)

    for (fm, stream), s in zip(raw, scenes):
        save_features(os.path.join(feature_dir, s["features"]),
                      apply_standardization(fm, mean, std))
        times = label_frame_times(stream.shape[0])
        save_sensor(os.path.join(feature_dir, s["sensor"]),
                    [SensorFrame(t=t, nu=row[:3], omega=row[3:])
                     for t, row in zip(times, stream)])

    with open(os.path.join(feature_dir, "stats.json"), "w") as fh:
        json.dump({"mean": mean.tolist(), "std": std.tolist()}, fh, indent=1)
    index = {"data_dir": data_dir, "stats": "stats.json", "scenes": scenes}
    tmp = index_path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(index, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, index_path)
    return index


def load_index(feature_dir):
    path = os.path.join(feature_dir, "index.json")
    try:
        with open(path) as fh:
            index = json.load(fh)
    except OSError as exc:
        raise DataError("cannot read feature index %s: %s" % (path, exc)) from exc
    if "scenes" not in index:
        raise DataError("feature index %s is missing its scene list" % path)
    return index


def scene_tensors(feature_dir, index, scene, with_target=True):
    """(features (T,7,64), sensor (T',6), AccdoaTarget or None)."""
    fm = load_features(os.path.join(feature_dir, scene["features"]))
    frames = load_sensor(os.path.join(feature_dir, scene["sensor"]))
    sensor = np.array([np.concatenate([f.nu, f.omega]) for f in frames])
    target = None
    if with_target:
        labels = load_labels(os.path.join(index["data_dir"], scene["labels"]))
        target = encode_targets(labels, fm.frames // AUDIO_TIME_POOL)
    return fm.values, sensor, target


# ----------------------------------------------------------------- training

def select_scenes(index, split, profiles=None):
    out = [s for s in index["scenes"] if s["split"] == split
           and (profiles is None or s["profile"] in profiles)]
    return out


def train_model(feature_dir, variant, seed, epochs, lr=0.01, batch_size=4,
                train_profiles=None, run_dir=None, progress=None,
                model_kw=None):
    """Train one variant; returns (history, best_epoch, paths).

    history rows are dicts epoch/train_loss/val_loss/seconds. The best
    validation checkpoint lands in run_dir (model.ckpt + model.json) along
    with the training log CSV. model_kw passes extra ModelConfig fields
    (small studies shrink audio_channels/gru_hidden to fit their data).
    """
    if epochs < 1:
        raise ConfigurationError("epochs must be >= 1, got %d" % epochs)
    index = load_index(feature_dir)
    train = select_scenes(index, "train", train_profiles)
    val = select_scenes(index, "val")
    if not train:
        raise DataError("no train scenes selected (profiles=%r)" % (train_profiles,))
    if not val:
        raise DataError("no val scenes in the feature index")

    cfg = ModelConfig(variant=variant, seed=seed, **(model_kw or {}))
    net = SeldNet(cfg)
    train_data = [scene_tensors(feature_dir, index, s) for s in train]
    val_data = [scene_tensors(feature_dir, index, s) for s in val]

    params = list(net.parameters().values())
    opt = ad.Adam(params, lr=lr)
    rng = np.random.default_rng(seed)
    ckpt_path = config_path = log_path = None
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        ckpt_path = os.path.join(run_dir, "model.ckpt")
        config_path = os.path.join(run_dir, "model.json")
        log_path = os.path.join(run_dir, "train_log.csv")

    history = []
    best_val, best_epoch = np.inf, -1
    for epoch in range(1, epochs + 1):
        t0 = time.time()
        net.train()
        order = rng.permutation(len(train_data))
        total, pending = 0.0, 0
        opt.zero_grad()
        for k, i in enumerate(order):
            feats, sensor, target = train_data[i]
            loss = adpit_loss(net(feats, sensor if cfg.uses_sensor else None),
                              target)
            lv = float(loss.data)
            if not np.isfinite(lv):
                raise NumericError("non-finite training loss (epoch %d, scene %s)"
                                   % (epoch, train[i]["stem"]))
            total += lv
            ad.backward(loss)
            pending += 1
            if pending == batch_size or k == len(order) - 1:
                for p in params:
                    if p.grad is not None:
                        p.grad /= pending
                opt.step()
                opt.zero_grad()
                pending = 0

        net.eval()
        val_total = 0.0
        for feats, sensor, target in val_data:
            vl = float(adpit_loss(
                net(feats, sensor if cfg.uses_sensor else None), target).data)
            if not np.isfinite(vl):
                raise NumericError("non-finite validation loss (epoch %d)" % epoch)
            val_total += vl
        row = {"epoch": epoch,
               "train_loss": total / len(train_data),
               "val_loss": val_total / len(val_data),
               "seconds": time.time() - t0}
        history.append(row)
        if row["val_loss"] < best_val:
            best_val, best_epoch = row["val_loss"], epoch
            if ckpt_path is not None:
                net.save(ckpt_path, config_path)
        if progress is not None:
            progress(row)

    if log_path is not None:
        write_training_log(log_path, history)
    return history, best_epoch, {"checkpoint": ckpt_path, "config": config_path,
                                 "log": log_path}


def write_training_log(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
        for row in history:
            w.writerow([row["epoch"], "%.8f" % row["train_loss"],
                        "%.8f" % row["val_loss"], "%.3f" % row["seconds"]])


def read_training_log(path):
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["epoch", "train_loss", "val_loss", "seconds"]:
            raise DataError("%s: not a training log" % path)
        for row in r:
            if row:
                rows.append({"epoch": int(row[0]), "train_loss": float(row[1]),
                             "val_loss": float(row[2]), "seconds": float(row[3])})
    return rows


# --------------------------------------------------------------- evaluation

def _frame_lists(labels, estimates, n_frames):
    refs = [[] for _ in range(n_frames)]
    for lab in labels:
        for f, u in lab.doa.items():
            if f < n_frames:
                refs[f].append((lab.class_id, u))
    preds = [[] for _ in range(n_frames)]
    for est in estimates:
        if est.frame < n_frames:
            preds[est.frame].append((est.class_id, est.doa.u))
    return refs, preds


def evaluate_model(net, feature_dir, split="test", threshold=0.5,
                   metric_cfg=None, index=None):
    """Metric reports for the motion subsets all/stat/3dof/6dof."""
    if index is None:
        index = load_index(feature_dir)
    scenes = select_scenes(index, split)
    if not scenes:
        raise DataError("no scenes in split %r" % split)
    uses_sensor = net.config.uses_sensor
    net.eval()
    per_scene = []
    for s in scenes:
        feats, sensor, _ = scene_tensors(feature_dir, index, s,
                                         with_target=False)
        n_frames = feats.shape[0] // AUDIO_TIME_POOL
        out = net(feats, sensor if uses_sensor else None).data
        labels = load_labels(os.path.join(index["data_dir"], s["labels"]))
        refs, preds = _frame_lists(labels, decode(out, threshold), n_frames)
        per_scene.append((s["profile"], refs, preds))

    reports = {}
    for name in SUBSETS:
        refs, preds = [], []
        for profile, r, p in per_scene:
            if name == "all" or profile == name:
                refs.extend(r)
                preds.extend(p)
        if refs:
            reports[name] = compute_metrics(refs, preds, metric_cfg)
    return reports


def reports_to_json(reports):
    return json.dumps({name: json.loads(rep.to_json())
                       for name, rep in reports.items()}, indent=1)
