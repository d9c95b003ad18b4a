"""Synthetic listener trajectories for the three motion regimes.

stat: subject seated, pose essentially frozen apart from millimetre-scale
sway. 3dof: standing, position fixed, head/body rotating with peaks up to
180 deg/s. 6dof: the rotation process plus a smooth walk confined to a
0.75 m circle around the starting point at up to 1.5 m/s.

Tracks come out at a nominal 40 fps with jittered timestamps, the way an
optical tracker delivers them.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import ConfigurationError
from ..geometry import Pose, angular_velocity, q_from_axis_angle, q_mul

PROFILES = ("stat", "3dof", "6dof")

TRACKER_FPS = 40.0
MOVE_RADIUS = 0.75
PEAK_SPEED = 1.5          # m/s, walking cap
PEAK_ANG_SPEED = np.pi    # rad/s, i.e. 180 deg/s


def _sample_times(duration, rng):
    """Jittered ~40 fps grid from 0 to exactly `duration`."""
    dt = 1.0 / TRACKER_FPS
    ts = [0.0]
    while ts[-1] + 0.5 * dt < duration:
        ts.append(ts[-1] + dt * rng.uniform(0.8, 1.2))
    ts[-1] = duration
    return np.array(ts)


def _waypoint_times(duration, seg):
    seg = min(seg, duration / 4.0)
    n = max(5, int(np.ceil(duration / seg)) + 1)
    return np.linspace(0.0, duration, n)


def _quat_ypr(yaw, pitch, roll):
    """Intrinsic z-y-x composition: yaw about up, then pitch, then roll."""
    q = q_from_axis_angle((0.0, 0.0, 1.0), yaw)
    q = q_mul(q, q_from_axis_angle((0.0, 1.0, 0.0), pitch))
    return q_mul(q, q_from_axis_angle((1.0, 0.0, 0.0), roll))


def _rotation_curves(duration, ts, rng):
    """Smooth yaw/pitch/roll deviations with peak |omega| <= 180 deg/s.

    Waypoint random walks are splined, then the whole deviation is rescaled
    against the measured peak rate; yaw dominates so the rescale is close to
    exact and two passes are plenty.
    """
    tw = _waypoint_times(duration, 0.8)
    yaw = np.cumsum(rng.normal(0.0, np.radians(55.0), tw.size))
    pitch = np.clip(np.cumsum(rng.normal(0.0, np.radians(12.0), tw.size)),
                    -0.55, 0.55)
    roll = np.clip(np.cumsum(rng.normal(0.0, np.radians(8.0), tw.size)),
                   -0.35, 0.35)
    dev = np.stack([c - c[0] for c in (yaw, pitch, roll)], axis=1)
    curves = CubicSpline(tw, dev, bc_type="natural")(ts)
    for _ in range(4):
        peak = _peak_rate(curves, ts)
        if peak <= PEAK_ANG_SPEED:
            break
        curves = curves * (PEAK_ANG_SPEED / peak * 0.999)
    return curves


def _peak_rate(curves, ts):
    qs = [_quat_ypr(*row) for row in curves]
    peak = 0.0
    for i in range(1, len(qs)):
        w = angular_velocity(qs[i - 1], qs[i], ts[i] - ts[i - 1])
        peak = max(peak, float(np.linalg.norm(w)))
    return peak


def _walk_curve(duration, ts, rng, radius):
    """Waypoint walk splined and rescaled so every point stays within
    `radius` of the start and the speed never exceeds PEAK_SPEED."""
    tw = _waypoint_times(duration, 0.9)
    xy = np.zeros((tw.size, 2))
    for i in range(1, tw.size):
        step = xy[i - 1] * 0.7 + rng.normal(0.0, 0.35, 2)
        r = np.linalg.norm(step)
        lim = 0.68 * radius
        xy[i] = step if r <= lim else step * (lim / r)
    z = np.clip(np.cumsum(rng.normal(0.0, 0.04, tw.size)), -0.12, 0.12)
    way = np.column_stack([xy, z])
    way -= way[0]
    path = CubicSpline(tw, way, bc_type="natural")(ts)

    dist = np.linalg.norm(path, axis=1)
    speed = np.linalg.norm(np.diff(path, axis=0), axis=1) / np.diff(ts)
    s = min(1.0,
            radius / max(dist.max(), 1e-9),
            PEAK_SPEED / max(speed.max(), 1e-9))
    return path * s


def gen_trajectory(profile, duration, seed, move_radius=MOVE_RADIUS):
    """Listener pose track for one scene.

    Returns a list of Pose at jittered ~40 fps covering [0, duration].
    """
    if profile not in PROFILES:
        raise ConfigurationError("unknown motion profile %r (expected %s)"
                                 % (profile, "/".join(PROFILES)))
    if duration <= 0:
        raise ConfigurationError("duration must be positive, got %g" % duration)
    rng = np.random.default_rng(seed)
    ts = _sample_times(duration, rng)
    base_yaw = rng.uniform(-np.pi, np.pi)
    height = rng.uniform(1.1, 1.3) if profile == "stat" else rng.uniform(1.4, 1.6)
    base_p = np.array([0.0, 0.0, height])

    if profile == "stat":
        # millimetre sway: slow waypoint jitter keeps |v| well under 2 cm/s
        tw = _waypoint_times(duration, 1.2)
        pos_w = rng.normal(0.0, 0.002, (tw.size, 3))
        ang_w = rng.normal(0.0, np.radians(0.2), (tw.size, 3))
        pos = CubicSpline(tw, pos_w - pos_w[0], bc_type="natural")(ts)
        ang = CubicSpline(tw, ang_w - ang_w[0], bc_type="natural")(ts)
    else:
        ang = _rotation_curves(duration, ts, rng)
        if profile == "3dof":
            pos = np.zeros((ts.size, 3))
        else:
            pos = _walk_curve(duration, ts, rng, move_radius)

    poses = []
    for t, dp, da in zip(ts, pos, ang):
        q = q_mul(q_from_axis_angle((0.0, 0.0, 1.0), base_yaw),
                  _quat_ypr(*da))
        poses.append(Pose(t=float(t), p=base_p + dp, q=q))
    return poses
