"""Quaternion and pose algebra for head-relative sound localization.

Conventions used throughout the package:

* quaternions are scalar-first ``[w, x, y, z]`` unit quaternions giving the
  head attitude, i.e. ``rotate(q, v_head)`` maps head-frame vectors into the
  room frame;
* head axes are x forward, y left, z up (right handed);
* ``q`` and ``-q`` encode the same rotation and are canonicalized to a
  non-negative scalar part.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, DegenerateGeometryError


def q_normalize(q):
    """Return q scaled to unit norm with a non-negative scalar part."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ContractError("cannot normalize a near-zero quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def q_mul(a, b):
    """Hamilton product a ⊗ b (scalar-first)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def q_conj(q):
    q = np.asarray(q, dtype=np.float64)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def q_from_axis_angle(axis, angle):
    """Unit quaternion rotating by `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise ContractError("rotation axis must be nonzero")
    half = 0.5 * angle
    return q_normalize(np.concatenate(([np.cos(half)], np.sin(half) * axis / n)))


def q_slerp(q0, q1, alpha):
    """Spherical interpolation from q0 (alpha=0) to q1 (alpha=1).

    Takes the short arc; near-parallel quaternions fall back to normalized
    linear interpolation, which is exact in that limit.
    """
    q0 = q_normalize(q0)
    q1 = q_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1, dot = -q1, -dot
    if dot > 1.0 - 1e-10:
        return q_normalize((1.0 - alpha) * q0 + alpha * q1)
    theta = np.arccos(min(dot, 1.0))
    s = np.sin(theta)
    return q_normalize((np.sin((1.0 - alpha) * theta) / s) * q0
                       + (np.sin(alpha * theta) / s) * q1)


def q_from_matrix(m):
    """Quaternion from a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    return q_normalize(q)


def rotate(q, v):
    """Rotate 3-vector v by unit quaternion q."""
    q = np.asarray(q, dtype=np.float64)
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise ContractError("rotate requires a unit quaternion, |q|=%g" % np.linalg.norm(q))
    v = np.asarray(v, dtype=np.float64)
    qv = q[1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[0] * t + np.cross(qv, t)


@dataclass
class Pose:
    """Head pose sample: time, room-frame position, attitude quaternion."""

    t: float
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64).reshape(3)
        self.q = q_normalize(np.asarray(self.q, dtype=np.float64).reshape(4))


@dataclass
class DoaVector:
    """Unit direction-of-arrival vector in the head frame."""

    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64).reshape(3)
        n = np.linalg.norm(self.u)
        if abs(n - 1.0) > 1e-9:
            raise ContractError("DoaVector must be unit length, got |u|=%g" % n)

    @property
    def az_deg(self):
        return float(np.degrees(np.arctan2(self.u[1], self.u[0])))

    @property
    def el_deg(self):
        return float(np.degrees(np.arcsin(np.clip(self.u[2], -1.0, 1.0))))


def to_head_frame(source_pos, head):
    """Direction from the head to a room-frame point, seen from the head.

    Translates by -head.p, rotates by the inverse attitude, and normalizes.
    A source within 1e-6 m of the head has no direction and is rejected.
    """
    source_pos = np.asarray(source_pos, dtype=np.float64)
    d = source_pos - head.p
    r = np.linalg.norm(d)
    if r <= 1e-6:
        raise DegenerateGeometryError(
            "source coincides with head position (distance %g m)" % r)
    return DoaVector(rotate(q_conj(head.q), d) / r)


def default_tracker_layout(side=0.10):
    """Equilateral tracker triangle in the head frame, centroid at origin.

    Vertex order: front (on +x), rear-left, rear-right; the triangle lies in
    the z=0 plane so its normal is head-up.
    """
    r = side / np.sqrt(3.0)  # circumradius
    return np.array([
        [r, 0.0, 0.0],
        [-0.5 * r, 0.5 * np.sqrt(3.0) * r, 0.0],
        [-0.5 * r, -0.5 * np.sqrt(3.0) * r, 0.0],
    ])


def _triangle_frame(a, b, c):
    # orthonormal frame: first edge direction, in-plane normal-completed axis,
    # and the triangle normal
    e1 = b - a
    n = np.cross(e1, c - a)
    area = 0.5 * np.linalg.norm(n)
    if area <= 1e-8:
        raise DegenerateGeometryError(
            "tracker triangle is degenerate (area %g m^2)" % area)
    e1 = e1 / np.linalg.norm(e1)
    n = n / np.linalg.norm(n)
    return np.column_stack([e1, np.cross(n, e1), n])


def pose_from_trackers(a, b, c, reference_layout=None, t=0.0):
    """Recover a head pose from three rigidly attached tracker positions.

    The reference layout gives the tracker positions in the head frame; the
    returned pose maps that layout onto the observed points (centroid as
    position, frame-aligning rotation as attitude).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if reference_layout is None:
        reference_layout = default_tracker_layout()
    ref = np.asarray(reference_layout, dtype=np.float64)
    if ref.shape != (3, 3):
        raise ContractError("reference_layout must be 3 points x 3 coords")
    frame_obs = _triangle_frame(a, b, c)
    frame_ref = _triangle_frame(ref[0], ref[1], ref[2])
    rot = frame_obs @ frame_ref.T  # head frame -> room frame
    centroid = (a + b + c) / 3.0 - rot @ (ref.sum(axis=0) / 3.0)
    return Pose(t=t, p=centroid, q=q_from_matrix(rot))


def angular_velocity(q_prev, q_next, dt):
    """Body-frame angular rate taking q_prev to q_next over dt seconds.

    Axis-angle of the relative rotation q_prev^-1 ⊗ q_next divided by dt, so
    |ω| equals the relative rotation angle over dt exactly.
    """
    if dt <= 0.0:
        raise ContractError("angular_velocity requires dt > 0, got %g" % dt)
    r = q_mul(q_conj(q_normalize(q_prev)), q_normalize(q_next))
    if r[0] < 0.0:  # short way around
        r = -r
    vec = r[1:]
    s = np.linalg.norm(vec)
    if s < 1e-15:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(s, r[0])
    return (angle / s / dt) * vec


def interp_pose(poses, t):
    """Pose at time t from a time-ordered track: positions interpolate
    linearly, attitudes along the short arc. Clamps outside the track."""
    if not poses:
        raise ContractError("interp_pose needs a non-empty track")
    times = np.array([p.t for p in poses])
    if t <= times[0]:
        src = poses[0]
        return Pose(t=t, p=src.p.copy(), q=src.q.copy())
    if t >= times[-1]:
        src = poses[-1]
        return Pose(t=t, p=src.p.copy(), q=src.q.copy())
    j = int(np.searchsorted(times, t, side="right")) - 1
    a, b = poses[j], poses[j + 1]
    alpha = (t - a.t) / (b.t - a.t)
    return Pose(t=t, p=(1.0 - alpha) * a.p + alpha * b.p,
                q=q_slerp(a.q, b.q, alpha))


def save_poses(path, poses):
    """Write a pose track as CSV rows `t,px,py,pz,qw,qx,qy,qz`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "px", "py", "pz", "qw", "qx", "qy", "qz"])
        for pose in poses:
            w.writerow(["%.9f" % pose.t]
                       + ["%.9f" % v for v in pose.p]
                       + ["%.9f" % v for v in pose.q])


def load_poses(path):
    """Read a pose track CSV written by save_poses."""
    poses = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header] != [
                "t", "px", "py", "pz", "qw", "qx", "qy", "qz"]:
            raise DataError("%s: expected pose CSV header t,px,py,pz,qw,...,qz" % path)
        for row in r:
            if not row:
                continue
            if len(row) != 8:
                raise DataError("%s: pose row needs 8 fields, got %d" % (path, len(row)))
            vals = [float(x) for x in row]
            poses.append(Pose(t=vals[0], p=vals[1:4], q=vals[4:8]))
    return poses
