"""Track-wise activity-coupled DOA targets, permutation-tolerant loss, decoding.

The network emits (T', 3 tracks, 12 classes, 3 components). A class active
with k sources at a frame admits several equally valid track assignments:
k=1 duplicates the vector to all tracks, k=2 uses the six two-source
surjections onto three tracks, k=3 the six permutations. The loss takes, per
(frame, class), the minimum over those patterns; decoding thresholds track
norms and merges near-duplicate directions.
"""

import csv
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DataError, NumericError
from .geometry import DoaVector
from .labels import N_CLASSES, angles_from_vec, vec_from_angles

N_TRACKS = 3

# track -> source-slot maps, grouped by active source count
_PATTERNS = {
    0: [(0, 0, 0)],  # unused slots are zero vectors
    1: [(0, 0, 0)],
    2: [p for p in permutations((0, 0, 1, 1), 3) if len(set(p)) == 2],
    3: list(permutations((0, 1, 2))),
}
_PATTERNS[2] = sorted(set(_PATTERNS[2]))


@dataclass
class AccdoaTarget:
    """Per-frame/class active DOA slots plus source counts.

    slots[t, c, j] holds the j-th active source vector (j < counts[t, c]),
    zeros elsewhere. Pattern expansion happens at loss time.
    """

    slots: np.ndarray  # (T, 12, 3, 3)
    counts: np.ndarray  # (T, 12) ints in 0..3

    @property
    def n_frames(self):
        return self.slots.shape[0]

    def dense(self):
        """One admissible (T, 3, 12, 3) assignment: slot j fills track j,
        unused tracks cycle over the active slots (duplication rule)."""
        out = np.zeros((self.n_frames, N_TRACKS, N_CLASSES, 3))
        for t, c in zip(*np.nonzero(self.counts)):
            k = self.counts[t, c]
            for track in range(N_TRACKS):
                out[t, track, c] = self.slots[t, c, track % k]
        return out


def encode_targets(labels, n_frames):
    """Collect per-frame/class active DOA vectors from event labels."""
    slots = np.zeros((n_frames, N_CLASSES, N_TRACKS, 3))
    counts = np.zeros((n_frames, N_CLASSES), dtype=np.int64)
    for ev in labels:
        for f, u in ev.doa.items():
            if not 0 <= f < n_frames:
                continue
            k = counts[f, ev.class_id]
            if k >= N_TRACKS:
                raise DataError(
                    "frame %d class %d: more than %d simultaneous sources"
                    % (f, ev.class_id, N_TRACKS))
            slots[f, ev.class_id, k] = u
            counts[f, ev.class_id] = k + 1
    return AccdoaTarget(slots=slots, counts=counts)


def _block_cost(block, cand):
    # squared error summed per track first, then smallest-to-largest: the
    # result does not depend on how the caller ordered the tracks
    rows = np.sort(((block - cand) ** 2).sum(axis=1))
    return rows[0] + rows[1] + rows[2]


def _select_assignment(pred, target):
    """Per (frame, class) argmin-pattern ground truth and canonical cost sum.

    The selection index is a function of pred values only (piecewise
    constant), so the loss gradient is that of a plain MSE against the
    selected assignment.
    """
    T = target.n_frames
    g_sel = np.zeros((T, N_TRACKS, N_CLASSES, 3))
    # inactive blocks (the vast majority) cost against all-zero targets
    rows0 = np.sort((pred ** 2).sum(axis=3).transpose(0, 2, 1), axis=2)
    costs = rows0[:, :, 0] + rows0[:, :, 1] + rows0[:, :, 2]
    for t, c in zip(*np.nonzero(target.counts)):
        block = pred[t, :, c, :]  # (3 tracks, 3 comps)
        best, best_cost = None, np.inf
        for pat in _PATTERNS[target.counts[t, c]]:
            cand = target.slots[t, c, list(pat)]
            cost = _block_cost(block, cand)
            if cost < best_cost:
                best, best_cost = cand, cost
        g_sel[t, :, c, :] = best
        costs[t, c] = best_cost
    return g_sel, costs


def adpit_loss(pred, target):
    """Permutation-tolerant MSE between predictions and encoded targets.

    pred is a Tensor (or array) of shape (T, 3, 12, 3); returns a scalar
    Tensor: the mean squared error against the per-(frame, class) best
    admissible track assignment. The value is accumulated in a track-order
    independent way, so permuting prediction tracks leaves it bit-identical.
    """
    if not isinstance(pred, ad.Tensor):
        pred = ad.Tensor(pred)
    if pred.data.shape != (target.n_frames, N_TRACKS, N_CLASSES, 3):
        raise ContractError("pred shape %s does not match target frames %d"
                            % (pred.data.shape, target.n_frames))
    nan_frames = np.nonzero(np.isnan(pred.data).any(axis=(1, 2, 3)))[0]
    if len(nan_frames):
        raise NumericError("NaN in predictions at frame %d" % nan_frames[0])
    g_sel, costs = _select_assignment(pred.data, target)
    n = pred.data.size
    value = costs.sum() / n
    diff = pred.data - g_sel

    def bwd(g):
        return ((2.0 / n) * g * diff,)

    return ad._node(np.asarray(value), (pred,), bwd)


@dataclass
class EventEstimate:
    """Decoded detection: frame, class, direction, activity score."""

    frame: int
    class_id: int
    doa: DoaVector
    score: float


def decode(pred, activity_threshold=0.5, unify_angle_deg=15.0):
    """Threshold track vectors and merge near-duplicates into estimates.

    Per frame and class, tracks whose vector norm exceeds the threshold are
    detections; detections of the same class closer than unify_angle_deg
    merge (single linkage) into their norm-weighted mean direction with the
    mean norm as score.
    """
    if not 0.0 < activity_threshold < np.sqrt(3.0):
        raise ContractError("activity_threshold must lie in (0, sqrt(3)), got %g"
                            % activity_threshold)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 4 or pred.shape[1] != N_TRACKS or pred.shape[2] != N_CLASSES:
        raise ContractError("decode expects (T, 3, 12, 3), got %s" % (pred.shape,))
    cos_unify = np.cos(np.radians(unify_angle_deg))
    out = []
    for t in range(pred.shape[0]):
        for c in range(N_CLASSES):
            vecs = pred[t, :, c, :]
            norms = np.linalg.norm(vecs, axis=1)
            active = np.nonzero(norms > activity_threshold)[0]
            if len(active) == 0:
                continue
            dirs = vecs[active] / norms[active][:, None]
            groups = _single_linkage(dirs, cos_unify)
            for members in groups:
                w = norms[active][members]
                mean_vec = (vecs[active][members]).sum(axis=0)
                n = np.linalg.norm(mean_vec)
                if n < 1e-12:  # opposing directions cancel; fall back to best track
                    best = members[int(np.argmax(w))]
                    mean_vec, n = dirs[best], 1.0
                out.append(EventEstimate(frame=t, class_id=c,
                                         doa=DoaVector(mean_vec / n),
                                         score=float(np.mean(w))))
    return out


def _single_linkage(dirs, cos_thresh):
    n = len(dirs)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if np.dot(dirs[i], dirs[j]) >= cos_thresh:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def save_estimates(path, estimates):
    """Write estimates as CSV rows `frame,class,az_deg,el_deg,score`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "class", "az_deg", "el_deg", "score"])
        for e in sorted(estimates, key=lambda e: (e.frame, e.class_id)):
            az, el = e.doa.az_deg, e.doa.el_deg
            w.writerow([e.frame, e.class_id, "%.4f" % az, "%.4f" % el,
                        "%.6f" % e.score])


def load_estimates(path):
    """Read an estimates CSV written by save_estimates."""
    out = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header] != [
                "frame", "class", "az_deg", "el_deg", "score"]:
            raise DataError("%s: expected estimates CSV header frame,class,az_deg,el_deg,score"
                            % path)
        for row in r:
            if not row:
                continue
            out.append(EventEstimate(
                frame=int(row[0]), class_id=int(row[1]),
                doa=DoaVector(vec_from_angles(float(row[2]), float(row[3]))),
                score=float(row[4])))
    return out
