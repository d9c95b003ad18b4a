"""Location-dependent detection metrics and class-dependent localization metrics.

Frame-wise matching pairs references and predictions of the same class by
minimum total angular distance. A matched pair is a true positive only when
its angular error is within theta; otherwise it counts as both a missed
detection and a false alarm. Error rate aggregates substitutions, deletions
and insertions over 1 s segments (micro), F1 is micro over frames, while
localization error and recall are class-macro and ignore theta.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError, ContractError, DataError
from .labels import N_CLASSES


@dataclass
class MetricConfig:
    theta_deg: float = 20.0
    segment_s: float = 1.0
    frame_s: float = 0.1

    def __post_init__(self):
        if self.theta_deg <= 0:
            raise ConfigurationError("theta_deg must be positive, got %g"
                                     % self.theta_deg)
        if self.segment_s <= 0 or self.frame_s <= 0:
            raise ConfigurationError("segment_s and frame_s must be positive")


@dataclass
class ClassMetrics:
    class_id: int
    n_refs: int = 0
    n_matched: int = 0
    le_deg: float = 180.0  # sentinel when the class never matches
    lr_pct: float = 0.0


@dataclass
class MetricReport:
    er: float
    f1_pct: float
    le_cd_deg: float
    lr_cd_pct: float
    per_class: list = field(default_factory=list)
    config: MetricConfig = field(default_factory=MetricConfig)

    def to_json(self):
        return json.dumps({
            "er": self.er,
            "f1": self.f1_pct,
            "le_cd": self.le_cd_deg,
            "lr_cd": self.lr_cd_pct,
            "per_class": [{
                "class": c.class_id, "n_refs": c.n_refs,
                "n_matched": c.n_matched, "le_deg": c.le_deg,
                "lr_pct": c.lr_pct,
            } for c in self.per_class],
            "config": {"theta_deg": self.config.theta_deg,
                       "segment_s": self.config.segment_s,
                       "frame_s": self.config.frame_s},
        }, indent=2)

    def table(self):
        lines = [
            "metric            value",
            "----------------  ---------",
            "ER_<=%-4g         %.3f" % (self.config.theta_deg, self.er),
            "F1_<=%-4g         %.1f %%" % (self.config.theta_deg, self.f1_pct),
            "LE_CD             %.1f deg" % self.le_cd_deg,
            "LR_CD             %.1f %%" % self.lr_cd_pct,
            "",
            "class  refs  matched  LE(deg)  LR(%)",
        ]
        for c in self.per_class:
            lines.append("%5d  %4d  %7d  %7.1f  %5.1f"
                         % (c.class_id, c.n_refs, c.n_matched, c.le_deg, c.lr_pct))
        return "\n".join(lines)


def _check_unit(vecs, who):
    for v in vecs:
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ContractError("%s DOA must be unit length, |v|=%g"
                                % (who, np.linalg.norm(v)))


def angular_error_deg(u, v):
    # chord-based form: well conditioned at both 0 and 180 degrees, and
    # bit-identical vectors give exactly 0
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return float(np.degrees(2.0 * np.arctan2(np.linalg.norm(u - v),
                                             np.linalg.norm(u + v))))


def match_frame(refs, preds):
    """Min-total-angle one-to-one matching within one frame and class.

    refs and preds are lists of unit vectors. Returns (pairs, unmatched_ref
    indices, unmatched_pred indices) where each pair is (ref_idx, pred_idx,
    angular_error_deg).
    """
    _check_unit(refs, "reference")
    _check_unit(preds, "prediction")
    if not refs or not preds:
        return [], list(range(len(refs))), list(range(len(preds)))
    cost = np.array([[angular_error_deg(r, p) for p in preds] for r in refs])
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(i), int(j), float(cost[i, j])) for i, j in zip(rows, cols)]
    matched_r = {i for i, _, _ in pairs}
    matched_p = {j for _, j, _ in pairs}
    return (pairs,
            [i for i in range(len(refs)) if i not in matched_r],
            [j for j in range(len(preds)) if j not in matched_p])


def compute_metrics(refs, preds, cfg=None):
    """Score prediction frames against reference frames.

    Both inputs are per-frame lists of (class_id, unit_vector) on the same
    100 ms grid (equal length). Returns a MetricReport.
    """
    if cfg is None:
        cfg = MetricConfig()
    if len(refs) != len(preds):
        raise DataError("frame grids differ: %d reference vs %d prediction frames"
                        % (len(refs), len(preds)))
    n_frames = len(refs)
    frames_per_seg = max(1, int(round(cfg.segment_s / cfg.frame_s)))

    tp = fp = fn = 0
    seg_counts = {}  # segment -> [fn, fp, n_refs]
    cls = {c: ClassMetrics(class_id=c) for c in range(N_CLASSES)}
    cls_err = {c: [] for c in range(N_CLASSES)}

    for f in range(n_frames):
        seg = f // frames_per_seg
        counters = seg_counts.setdefault(seg, [0, 0, 0])
        by_class_r = {}
        by_class_p = {}
        for c, v in refs[f]:
            by_class_r.setdefault(c, []).append(v)
        for c, v in preds[f]:
            by_class_p.setdefault(c, []).append(v)
        counters[2] += len(refs[f])
        for c in set(by_class_r) | set(by_class_p):
            r_list = by_class_r.get(c, [])
            p_list = by_class_p.get(c, [])
            pairs, un_r, un_p = match_frame(r_list, p_list)
            cls[c].n_refs += len(r_list)
            cls[c].n_matched += len(pairs)
            for _, _, ang in pairs:
                cls_err[c].append(ang)
                if ang <= cfg.theta_deg:
                    tp += 1
                else:  # class right, location wrong: miss and false alarm both
                    fn += 1
                    fp += 1
                    counters[0] += 1
                    counters[1] += 1
            fn += len(un_r)
            fp += len(un_p)
            counters[0] += len(un_r)
            counters[1] += len(un_p)

    sdi = 0
    n_total = 0
    for cnt_fn, cnt_fp, n_seg in seg_counts.values():
        s = min(cnt_fn, cnt_fp)
        d = max(0, cnt_fn - cnt_fp)
        i = max(0, cnt_fp - cnt_fn)
        sdi += s + d + i
        n_total += n_seg
    er = sdi / max(n_total, 1)
    f1 = 100.0 * 2 * tp / max(2 * tp + fp + fn, 1)

    le_vals = []
    lr_vals = []
    for c in range(N_CLASSES):
        if cls_err[c]:
            cls[c].le_deg = float(np.mean(cls_err[c]))
            le_vals.append(cls[c].le_deg)
        if cls[c].n_refs > 0:
            cls[c].lr_pct = 100.0 * cls[c].n_matched / cls[c].n_refs
            lr_vals.append(cls[c].lr_pct)
    le_cd = float(np.mean(le_vals)) if le_vals else 180.0
    lr_cd = float(np.mean(lr_vals)) if lr_vals else 0.0

    return MetricReport(er=er, f1_pct=f1, le_cd_deg=le_cd, lr_cd_pct=lr_cd,
                        per_class=[cls[c] for c in range(N_CLASSES)], config=cfg)
