"""Dataset generation: many scenes to disk plus a manifest.

Scenes cycle deterministically through the motion profiles, SNRs and
reverberation settings, and the train/val/test split is stratified so every
(profile, split) cell is populated once there are enough scenes (3 per
profile). Identical seeds reproduce identical files.
"""

import json
import math
import os

import numpy as np

from ..errors import DataError
from ..features import save_wav
from ..geometry import save_poses
from ..labels import LABEL_FRAME_S, save_labels
from ..pool import ordered_map
from .render import SNR_CHOICES, T60_CHOICES, SceneConfig, render

SPLIT_PATTERN = ("train", "val", "test", "train", "train")
PROFILE_CYCLE = ("stat", "3dof", "6dof")


def plan_scenes(n_scenes, seed, duration=6.0, profiles=PROFILE_CYCLE,
                snrs=SNR_CHOICES, t60s=T60_CHOICES, class_count=None,
                min_events=4, max_events=6):
    """Deterministic scene configurations plus split assignment.

    Profiles rotate scene by scene; within each profile the split follows
    SPLIT_PATTERN (60/20/20) and SNR/t60/event-count cycle so each split
    sees every condition as soon as it is large enough. class_count caps
    the event vocabulary to the first classes (small training studies want
    denser per-class coverage); None keeps the full set.
    """
    if n_scenes < 1:
        raise DataError("n_scenes must be >= 1, got %d" % n_scenes)
    if max_events < min_events:
        raise DataError("max_events %d < min_events %d"
                        % (max_events, min_events))
    base = np.random.default_rng(seed)
    scene_seeds = base.integers(0, 2 ** 62, size=n_scenes)
    plan = []
    per_profile = {p: 0 for p in profiles}
    kw = {} if class_count is None else {"class_count": class_count}
    for i in range(n_scenes):
        profile = profiles[i % len(profiles)]
        j = per_profile[profile]
        per_profile[profile] += 1
        cfg = SceneConfig(duration=duration, motion_profile=profile,
                          snr_db=snrs[j % len(snrs)],
                          t60_s=t60s[j % len(t60s)],
                          n_events=min_events
                          + (j % (max_events - min_events + 1)),
                          seed=int(scene_seeds[i]), **kw)
        plan.append((cfg, SPLIT_PATTERN[j % len(SPLIT_PATTERN)]))
    return plan


def gen_split(out_dir, n_scenes, seed, duration=6.0, force=False,
              jobs=1, progress=None, class_count=None, min_events=4,
              max_events=6):
    """Render n_scenes to out_dir and write manifest.json.

    Existing manifests are reused unless force is set, which keeps repeated
    pipeline invocations cheap and idempotent. jobs > 1 renders scenes in a
    worker pool; file contents are identical either way.
    """
    manifest_path = os.path.join(out_dir, "manifest.json")
    if os.path.exists(manifest_path) and not force:
        with open(manifest_path) as fh:
            return json.load(fh)

    scene_dir = os.path.join(out_dir, "scenes")
    os.makedirs(scene_dir, exist_ok=True)
    plan = plan_scenes(n_scenes, seed, duration, class_count=class_count,
                       min_events=min_events, max_events=max_events)
    entries = []
    renders = ordered_map(render, [cfg for cfg, _ in plan], jobs)
    for i, ((cfg, split), out) in enumerate(zip(plan, renders)):
        stem = "scene_%04d" % i
        wav_rel = os.path.join("scenes", stem + ".wav")
        labels_rel = os.path.join("scenes", stem + "_labels.csv")
        poses_rel = os.path.join("scenes", stem + "_poses.csv")
        try:
            save_wav(os.path.join(out_dir, wav_rel), out.wav)
            save_labels(os.path.join(out_dir, labels_rel), out.labels)
            save_poses(os.path.join(out_dir, poses_rel), out.poses)
        except OSError as exc:
            raise DataError("failed writing scene files for %s: %s"
                            % (stem, exc)) from exc
        entries.append({"wav": wav_rel, "labels": labels_rel,
                        "poses": poses_rel, "profile": cfg.motion_profile,
                        "snr_db": int(cfg.snr_db), "t60": float(cfg.t60_s),
                        "split": split})
        if progress is not None:
            progress(i + 1, n_scenes)

    tmp = manifest_path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(entries, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, manifest_path)
    return entries


def load_manifest(path):
    """Read a manifest; returns (entries, base_dir for its relative paths)."""
    try:
        with open(path) as fh:
            entries = json.load(fh)
    except OSError as exc:
        raise DataError("cannot read manifest %s: %s" % (path, exc)) from exc
    if not isinstance(entries, list):
        raise DataError("manifest %s: expected a JSON list" % path)
    return entries, os.path.dirname(os.path.abspath(path))


def expected_label_frames(duration):
    return int(math.ceil(duration / LABEL_FRAME_S))
