"""Free-field scene renderer.

Each event is a fixed point source played through a per-sample
fractional-delay line (linear interpolation) to the four head-mounted mics,
with 1/r gain, optional first-order wall echoes whose level follows the
configured reverberation time, and diffuse noise scaled to an exact SNR at
channel 0 over the event-active frames. Ground-truth labels come from the
same pose track the mics move on.

Known simplifications: linear-interp delays smear phase above ~10 kHz, and
there is no head shadowing; both are acceptable at the feature level.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..features import SAMPLE_RATE, SPEED_OF_SOUND
from ..geometry import interp_pose, rotate, to_head_frame
from ..labels import LABEL_FRAME_S, N_CLASSES, EventLabel
from .clips import synth_event_clip
from .trajectory import MOVE_RADIUS, PROFILES, gen_trajectory

SNR_CHOICES = (6, 10, 20)
T60_CHOICES = (0.12, 0.30, 0.41)

# head-frame capsule offsets (x forward, y left, z up): front/back pairs on
# each ear pod; channel order LF, LB, RF, RB
MIC_LAYOUT = np.array([
    [0.04, 0.09, 0.0],
    [-0.04, 0.09, 0.0],
    [0.04, -0.09, 0.0],
    [-0.04, -0.09, 0.0],
])

# implied room for the image sources, centered on the listener start
ROOM_HALF_X = 3.5
ROOM_HALF_Y = 4.0
ROOM_HEIGHT = 3.0

DENSE_FPS = 200.0  # mic-path sampling before per-sample interpolation
MIN_RANGE = 0.1


@dataclass
class SceneConfig:
    duration: float = 6.0
    motion_profile: str = "stat"
    snr_db: int = 20
    t60_s: float = 0.12
    n_events: int = 5
    class_count: int = N_CLASSES
    seed: int = 0
    mic_layout: np.ndarray = field(default_factory=lambda: MIC_LAYOUT.copy())
    move_radius: float = MOVE_RADIUS

    def __post_init__(self):
        if self.motion_profile not in PROFILES:
            raise ConfigurationError("unknown motion profile %r"
                                     % (self.motion_profile,))
        if int(self.snr_db) not in SNR_CHOICES:
            raise ConfigurationError("snr_db must be one of %s, got %r"
                                     % (SNR_CHOICES, self.snr_db))
        if not any(abs(self.t60_s - t) < 1e-9 for t in T60_CHOICES):
            raise ConfigurationError("t60_s must be one of %s, got %r"
                                     % (T60_CHOICES, self.t60_s))
        if self.duration <= 0:
            raise ConfigurationError("duration must be positive")
        if self.n_events < 1:
            raise ConfigurationError("n_events must be >= 1")
        if not 1 <= self.class_count <= N_CLASSES:
            raise ConfigurationError("class_count must be 1..%d" % N_CLASSES)
        self.mic_layout = np.asarray(self.mic_layout, dtype=np.float64)
        if self.mic_layout.shape != (4, 3):
            raise ConfigurationError("mic_layout must be (4, 3) offsets")

    @property
    def n_frames(self):
        return int(math.ceil(self.duration / LABEL_FRAME_S))


@dataclass
class _PlacedEvent:
    class_id: int
    track_id: int
    onset: float
    length: float
    position: np.ndarray
    clip_seed: int

    @property
    def offset(self):
        return self.onset + self.length


@dataclass
class SceneRender:
    """wav = clean + noise, all (4, N) float64 at 48 kHz."""

    wav: np.ndarray
    clean: np.ndarray
    noise: np.ndarray
    labels: list
    poses: list
    source_positions: list
    n_frames: int
    config: SceneConfig


# ----------------------------------------------------------------- geometry

def _dense_mic_paths(poses, mic_layout, duration):
    """Room-frame mic positions on a uniform grid, ready for np.interp."""
    n = int(np.ceil(duration * DENSE_FPS)) + 1
    td = np.linspace(0.0, duration, n)
    mics = np.empty((len(mic_layout), n, 3))
    for k, t in enumerate(td):
        pose = interp_pose(poses, t)
        for m, off in enumerate(mic_layout):
            mics[m, k] = pose.p + rotate(pose.q, off)
    return td, mics


def _image_sources(src, center):
    out = []
    for axis, plane in ((0, center[0] - ROOM_HALF_X),
                        (0, center[0] + ROOM_HALF_X),
                        (1, center[1] - ROOM_HALF_Y),
                        (1, center[1] + ROOM_HALF_Y),
                        (2, 0.0), (2, ROOM_HEIGHT)):
        img = src.copy()
        img[axis] = 2.0 * plane - src[axis]
        out.append(img)
    return out


def _add_path(out, clip, onset, src, td, micpath, direct_dense=None,
              t60=None, fs=SAMPLE_RATE):
    """Accumulate one propagation path into one channel.

    With `direct_dense` and `t60` given, `src` is an image source and the
    path gets the echo attenuation 10^(-3*dt/t60), dt being its extra flight
    time over the direct path.
    """
    c = SPEED_OF_SOUND
    r_dense = np.linalg.norm(src[None, :] - micpath, axis=1)
    n0 = max(0, int((onset + r_dense.min() / c) * fs) - 2)
    n1 = min(out.size,
             int(np.ceil((onset + clip.size / fs + r_dense.max() / c) * fs)) + 2)
    if n1 <= n0:
        return
    tn = np.arange(n0, n1) / fs
    r = np.interp(tn, td, r_dense)
    gain = 1.0 / np.maximum(r, MIN_RANGE)
    if t60 is not None:
        dt = (r - np.interp(tn, td, direct_dense)) / c
        gain *= 10.0 ** (-3.0 * dt / t60)
    pos = (tn - onset - r / c) * fs
    out[n0:n1] += gain * np.interp(pos, np.arange(clip.size), clip,
                                   left=0.0, right=0.0)


def render_point_source(clip, onset, source_pos, poses, duration,
                        mic_layout=None, fs=SAMPLE_RATE):
    """Direct-path render of one fixed source; no echoes, no noise."""
    layout = MIC_LAYOUT if mic_layout is None else np.asarray(mic_layout)
    source_pos = np.asarray(source_pos, dtype=np.float64)
    td, mics = _dense_mic_paths(poses, layout, duration)
    out = np.zeros((len(layout), int(round(duration * fs))))
    for m in range(len(layout)):
        _add_path(out[m], np.asarray(clip, dtype=np.float64), onset,
                  source_pos, td, mics[m], fs=fs)
    return out


# ---------------------------------------------------------------- placement

def _place_events(cfg, rng, start):
    """Draw event spans/classes/positions; at most 3 may overlap in time.

    Track slots are handed out greedily by onset so concurrent events never
    share one. Placement redraws everything on a concurrency violation.
    Length bounds shrink with scene capacity (duration per event) so dense
    short scenes stay placeable; a config whose total event time cannot fit
    under 3 concurrent tracks fails all retries.
    """
    d = cfg.duration
    n = cfg.n_events
    lo = min(max(0.3, min(0.8, 0.45 * d, 1.2 * d / n)), 0.85 * d)
    hi = max(lo + 0.01, min(2.2, 0.9 * d, 2.6 * d / n))
    for _ in range(100):
        lens = rng.uniform(lo, hi, cfg.n_events)
        onsets = rng.uniform(0.0, d - lens)
        classes = rng.integers(0, cfg.class_count, cfg.n_events)
        ring_ang = rng.uniform(0.0, 2.0 * np.pi, cfg.n_events)
        ring_rad = rng.uniform(1.0, 2.0, cfg.n_events)
        dz = rng.uniform(-0.5, 1.0, cfg.n_events)
        clip_seeds = rng.integers(0, 2 ** 62, cfg.n_events)

        events = []
        active = []  # (offset, track) of running events
        ok = True
        for i in np.argsort(onsets):
            active = [(off, trk) for off, trk in active if off > onsets[i]]
            if len(active) >= 3:
                ok = False
                break
            track = min({0, 1, 2} - {trk for _, trk in active})
            pos = start + np.array([ring_rad[i] * np.cos(ring_ang[i]),
                                    ring_rad[i] * np.sin(ring_ang[i]),
                                    dz[i]])
            events.append(_PlacedEvent(int(classes[i]), track,
                                       float(onsets[i]), float(lens[i]),
                                       pos, int(clip_seeds[i])))
            active.append((onsets[i] + lens[i], track))
        if ok:
            return events
    raise ConfigurationError(
        "could not place %d events with <= 3 overlapping after 100 tries; "
        "reduce n_events or extend duration" % cfg.n_events)


# ------------------------------------------------------------------- labels

def _frame_centers(n_frames):
    return (np.arange(n_frames) + 0.5) * LABEL_FRAME_S


def labels_for_source(position, class_id, track_id, onset, offset, poses,
                      n_frames):
    """Head-relative label for one fixed source: a frame is active when its
    center lies in [onset, offset), the DOA is the head-frame direction at
    that center. None when no frame center falls inside the span."""
    centers = _frame_centers(n_frames)
    doa = {}
    for f in np.nonzero((centers >= onset) & (centers < offset))[0]:
        head = interp_pose(poses, centers[f])
        doa[int(f)] = to_head_frame(position, head).u
    if not doa:
        return None
    return EventLabel(class_id=class_id, track_id=track_id,
                      onset=onset, offset=offset, doa=doa)


def _compute_labels(events, poses, n_frames):
    """Per-event labels plus the matching source positions (events whose
    span misses every frame center are dropped from both)."""
    labels, positions = [], []
    for ev in events:
        lab = labels_for_source(ev.position, ev.class_id, ev.track_id,
                                ev.onset, ev.offset, poses, n_frames)
        if lab is not None:
            labels.append(lab)
            positions.append(ev.position.copy())
    return labels, positions


def _active_sample_mask(labels, n_frames, n_samples):
    frame = np.zeros(n_frames, dtype=bool)
    for ev in labels:
        frame[list(ev.doa)] = True
    per = int(round(LABEL_FRAME_S * SAMPLE_RATE))
    mask = np.repeat(frame, per)[:n_samples]
    if mask.size < n_samples:
        mask = np.concatenate([mask, np.zeros(n_samples - mask.size, bool)])
    if not mask.any():  # degenerate sub-frame scene; fall back to everything
        mask[:] = True
    return mask


# ------------------------------------------------------------------- render

def _make_noise(rng, n):
    """Per-channel white noise plus a common low-passed bed."""
    white = rng.normal(size=(4, n))
    common = rng.normal(size=n)
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    lp = np.fft.irfft(np.fft.rfft(common) / (1.0 + (freqs / 400.0) ** 2), n)
    lp /= max(np.sqrt(np.mean(lp * lp)), 1e-12)
    return 0.7 * white + 0.7 * lp[None, :]


def render(config, with_echoes=True):
    """Render one scene deterministically from its config."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    traj_seed = int(rng.integers(0, 2 ** 62))
    poses = gen_trajectory(cfg.motion_profile, cfg.duration, traj_seed,
                           cfg.move_radius)
    start = poses[0].p.copy()
    events = _place_events(cfg, rng, start)

    n = int(round(cfg.duration * SAMPLE_RATE))
    td, mics = _dense_mic_paths(poses, cfg.mic_layout, cfg.duration)
    clean = np.zeros((4, n))
    for ev in events:
        clip = synth_event_clip(ev.class_id, ev.length, ev.clip_seed)
        images = _image_sources(ev.position, start) if with_echoes else []
        for m in range(4):
            direct_dense = np.linalg.norm(ev.position[None, :] - mics[m], axis=1)
            _add_path(clean[m], clip, ev.onset, ev.position, td, mics[m])
            for img in images:
                _add_path(clean[m], clip, ev.onset, img, td, mics[m],
                          direct_dense=direct_dense, t60=cfg.t60_s)

    labels, positions = _compute_labels(events, poses, cfg.n_frames)
    mask = _active_sample_mask(labels, cfg.n_frames, n)
    noise = _make_noise(rng, n)
    rms_c = np.sqrt(np.mean(clean[0, mask] ** 2))
    rms_n = np.sqrt(np.mean(noise[0, mask] ** 2))
    noise *= rms_c / (rms_n * 10.0 ** (cfg.snr_db / 20.0))

    return SceneRender(wav=clean + noise, clean=clean, noise=noise,
                       labels=labels, poses=poses, source_positions=positions,
                       n_frames=cfg.n_frames, config=cfg)
