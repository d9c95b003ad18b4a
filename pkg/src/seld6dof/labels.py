"""Frame-level event labels shared by the simulator, targets, and metrics.

Labels live on a 100 ms frame grid. Directions are unit vectors in the head
frame; CSV interchange uses azimuth/elevation in degrees.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

LABEL_FRAME_S = 0.1
N_CLASSES = 12


def vec_from_angles(az_deg, el_deg):
    az = np.radians(az_deg)
    el = np.radians(el_deg)
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def angles_from_vec(u):
    az = np.degrees(np.arctan2(u[1], u[0]))
    el = np.degrees(np.arcsin(np.clip(u[2], -1.0, 1.0)))
    return float(az), float(el)


@dataclass
class EventLabel:
    """One sound event: class, track slot, activity span, per-frame DOA."""

    class_id: int
    track_id: int
    onset: float
    offset: float
    doa: dict = field(default_factory=dict)  # frame index -> unit 3-vector

    def __post_init__(self):
        if not 0 <= self.class_id < N_CLASSES:
            raise DataError("class_id %r outside 0..%d" % (self.class_id, N_CLASSES - 1))
        if not self.onset < self.offset:
            raise DataError("event onset %g must precede offset %g"
                            % (self.onset, self.offset))
        self.doa = {int(k): np.asarray(v, dtype=np.float64).reshape(3)
                    for k, v in self.doa.items()}


def save_labels(path, labels):
    """Write events as CSV rows `frame,class,track,az_deg,el_deg`."""
    rows = []
    for ev in labels:
        for frame, u in ev.doa.items():
            az, el = angles_from_vec(u)
            rows.append((frame, ev.class_id, ev.track_id, az, el))
    rows.sort()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "class", "track", "az_deg", "el_deg"])
        for frame, cid, tid, az, el in rows:
            w.writerow([frame, cid, tid, "%.4f" % az, "%.4f" % el])


def load_labels(path):
    """Read a label CSV back into EventLabels (one per contiguous run)."""
    per_slot = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header] != [
                "frame", "class", "track", "az_deg", "el_deg"]:
            raise DataError("%s: expected label CSV header frame,class,track,az_deg,el_deg"
                            % path)
        for row in r:
            if not row:
                continue
            if len(row) != 5:
                raise DataError("%s: label row needs 5 fields, got %d" % (path, len(row)))
            frame, cid, tid = int(row[0]), int(row[1]), int(row[2])
            per_slot.setdefault((cid, tid), {})[frame] = vec_from_angles(
                float(row[3]), float(row[4]))

    labels = []
    for (cid, tid), doa in sorted(per_slot.items()):
        frames = sorted(doa)
        run = [frames[0]]
        for f in frames[1:]:
            if f == run[-1] + 1:
                run.append(f)
            else:
                labels.append(_label_from_run(cid, tid, run, doa))
                run = [f]
        labels.append(_label_from_run(cid, tid, run, doa))
    return labels


def _label_from_run(cid, tid, run, doa):
    return EventLabel(class_id=cid, track_id=tid,
                      onset=run[0] * LABEL_FRAME_S,
                      offset=(run[-1] + 1) * LABEL_FRAME_S,
                      doa={f: doa[f] for f in run})


def frame_activity(labels, n_frames):
    """Per-frame lists of (class_id, unit vector), the metrics-facing view."""
    frames = [[] for _ in range(n_frames)]
    for ev in labels:
        for f, u in ev.doa.items():
            if 0 <= f < n_frames:
                frames[f].append((ev.class_id, u))
    return frames
