"""Pose track to motion-feature stream.

Turns a (possibly nonuniform) head pose track into the 6-channel
velocity/angular-velocity stream the network consumes: uniform resampling,
Savitzky-Golay smoothing and differentiation, then alignment onto the audio
feature frame grid. Channel order is fixed: (vx, vy, vz, wx, wy, wz) with
velocity in the room frame and angular velocity in the head frame.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, DataError, RangeError
from .geometry import Pose, angular_velocity, q_normalize, q_slerp


@dataclass
class SensorFrame:
    """One motion sample: time, velocity (m/s), angular velocity (rad/s)."""

    t: float
    nu: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.nu = np.asarray(self.nu, dtype=np.float64).reshape(3)
        self.omega = np.asarray(self.omega, dtype=np.float64).reshape(3)


def resample_uniform(poses, target_fps, t_start=None, t_end=None):
    """Resample a pose track onto a uniform grid at target_fps.

    Positions interpolate linearly, orientations by slerp between the
    bracketing samples. The grid spans [t_start, t_end] (defaults to the
    input span) and must lie inside the input span; extrapolation is refused.
    """
    if len(poses) < 2:
        raise DataError("resample_uniform needs at least 2 poses, got %d" % len(poses))
    ts = np.array([p.t for p in poses])
    if np.any(np.diff(ts) <= 0):
        raise DataError("pose timestamps must be strictly increasing")
    if target_fps <= 0:
        raise ConfigurationError("target_fps must be positive, got %g" % target_fps)
    t0 = ts[0] if t_start is None else float(t_start)
    t1 = ts[-1] if t_end is None else float(t_end)
    if t0 < ts[0] - 1e-12 or t1 > ts[-1] + 1e-12:
        raise RangeError("grid [%g, %g] extends outside pose span [%g, %g]"
                         % (t0, t1, ts[0], ts[-1]))
    dt = 1.0 / target_fps
    n = int(np.floor((t1 - t0) / dt + 1e-9)) + 1
    grid = t0 + dt * np.arange(n)
    grid = grid[grid <= ts[-1] + 1e-12]

    pos = np.array([p.p for p in poses])
    # canonicalize quaternion signs along the track so slerp never takes the
    # long way around at a double-cover flip
    quats = np.array([p.q for p in poses])
    for i in range(1, len(quats)):
        if np.dot(quats[i - 1], quats[i]) < 0.0:
            quats[i] = -quats[i]

    out = []
    idx = np.clip(np.searchsorted(ts, grid, side="right") - 1, 0, len(ts) - 2)
    for t, i in zip(grid, idx):
        span = ts[i + 1] - ts[i]
        alpha = np.clip((t - ts[i]) / span, 0.0, 1.0)
        p = (1.0 - alpha) * pos[i] + alpha * pos[i + 1]
        q = q_slerp(quats[i], quats[i + 1], alpha)
        out.append(Pose(t=float(t), p=p, q=q))
    return out


def _savgol_weights(window, order, deriv):
    # least-squares polynomial fit over integer offsets; the fit is linear in
    # the samples, so row `deriv` of the pseudoinverse gives fixed filter taps
    half = window // 2
    j = np.arange(-half, half + 1, dtype=np.float64)
    design = np.vander(j, order + 1, increasing=True)
    return np.linalg.pinv(design)[deriv]


def savgol(signal, window=9, order=2, deriv=0, dt=1.0):
    """Savitzky-Golay smoothing (deriv=0) or first derivative (deriv=1).

    Each output sample is the value (or slope, scaled by 1/dt) at the center
    of a least-squares polynomial fit over the surrounding window. Edges are
    mirror padded.
    """
    if window % 2 == 0 or window <= order:
        raise ConfigurationError(
            "window must be odd and greater than order (window=%d, order=%d)"
            % (window, order))
    if deriv not in (0, 1):
        raise ConfigurationError("deriv must be 0 or 1, got %r" % (deriv,))
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError("savgol expects a 1-D signal")
    if len(x) < window:
        raise DataError("signal length %d shorter than window %d" % (len(x), window))
    half = window // 2
    padded = np.pad(x, half, mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, window)
    out = windows @ _savgol_weights(window, order, deriv)
    if deriv == 1:
        out = out / dt
    return out


def derive_motion(poses, window=9, order=2):
    """Differentiate a uniform pose track into SensorFrames.

    Velocity is the Savitzky-Golay first derivative of each position
    component. Angular velocity comes from the smoothed, renormalized
    quaternion track via the axis-angle rate between the neighbors of each
    frame (one-sided at the ends). Output length equals input length.
    """
    n = len(poses)
    if n < window:
        raise DataError("derive_motion needs at least window=%d poses, got %d"
                        % (window, n))
    ts = np.array([p.t for p in poses])
    steps = np.diff(ts)
    dt = float(np.mean(steps))
    if np.max(np.abs(steps - dt)) > 1e-6 * max(dt, 1.0):
        raise DataError("derive_motion requires uniform spacing")

    pos = np.array([p.p for p in poses])
    nu = np.column_stack([savgol(pos[:, k], window, order, deriv=1, dt=dt)
                          for k in range(3)])

    quats = np.array([p.q for p in poses])
    for i in range(1, n):
        if np.dot(quats[i - 1], quats[i]) < 0.0:
            quats[i] = -quats[i]
    sm = np.column_stack([savgol(quats[:, k], window, order, deriv=0)
                          for k in range(4)])
    sm = np.array([q_normalize(q) for q in sm])

    omega = np.zeros((n, 3))
    for i in range(n):
        lo, hi = max(i - 1, 0), min(i + 1, n - 1)
        if hi == lo:
            continue
        omega[i] = angular_velocity(sm[lo], sm[hi], (hi - lo) * dt)
    return [SensorFrame(t=float(ts[i]), nu=nu[i], omega=omega[i])
            for i in range(n)]


def align_to_frames(frames, audio_frame_times, mode="causal"):
    """Sample a SensorFrame stream at audio feature frame times.

    mode="causal" holds the most recent sensor sample (zero-order hold, past
    data only); mode="linear" interpolates between neighbors. Frame times
    outside the sensor span clamp to the nearest sample. Returns a (T, 6)
    array ordered (vx, vy, vz, wx, wy, wz).
    """
    if len(frames) == 0 or len(audio_frame_times) == 0:
        raise DataError("align_to_frames requires nonempty inputs")
    if mode not in ("causal", "linear"):
        raise ConfigurationError("mode must be 'causal' or 'linear', got %r" % mode)
    ts = np.array([f.t for f in frames])
    vals = np.array([np.concatenate([f.nu, f.omega]) for f in frames])
    query = np.asarray(audio_frame_times, dtype=np.float64)
    if mode == "linear":
        out = np.column_stack([np.interp(query, ts, vals[:, k]) for k in range(6)])
    else:
        idx = np.clip(np.searchsorted(ts, query + 1e-12, side="right") - 1,
                      0, len(ts) - 1)
        out = vals[idx]
    return out


def save_sensor(path, frames):
    """Write SensorFrames as CSV rows `t,vx,vy,vz,wx,wy,wz`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "vx", "vy", "vz", "wx", "wy", "wz"])
        for f in frames:
            w.writerow(["%.9f" % f.t]
                       + ["%.9f" % v for v in f.nu]
                       + ["%.9f" % v for v in f.omega])


def load_sensor(path):
    """Read a SensorFrame CSV written by save_sensor."""
    frames = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header] != [
                "t", "vx", "vy", "vz", "wx", "wy", "wz"]:
            raise DataError("%s: expected sensor CSV header t,vx,...,wz" % path)
        for row in r:
            if not row:
                continue
            if len(row) != 7:
                raise DataError("%s: sensor row needs 7 fields, got %d"
                                % (path, len(row)))
            vals = [float(x) for x in row]
            frames.append(SensorFrame(t=vals[0], nu=vals[1:4], omega=vals[4:7]))
    return frames
