"""Class-distinctive source clips.

Each of the 12 classes is band-limited noise around a class-specific center
frequency with a class-specific amplitude-modulation rate, so classes are
separable by spectral envelope alone while sharing no structure with the
localization cues. Clips are deterministic in (class, seed, duration) and
normalized to unit RMS.
"""

import numpy as np

from ..errors import ConfigurationError
from ..features import SAMPLE_RATE
from ..labels import N_CLASSES

# centers 400..4250 Hz in 350 Hz steps: pairwise centroid spacing stays
# comfortably above the 300 Hz separability target
CENTER_HZ = 400.0 + 350.0 * np.arange(N_CLASSES)
BANDWIDTH_HZ = 220.0
AM_RATE_HZ = 0.8 + 0.5 * np.arange(N_CLASSES)
EDGE_S = 0.01  # raised-cosine onset/offset ramps


def synth_event_clip(class_id, duration, seed, sample_rate=SAMPLE_RATE):
    """Mono unit-RMS clip for one event."""
    if not 0 <= class_id < N_CLASSES:
        raise ConfigurationError("class_id %r outside 0..%d"
                                 % (class_id, N_CLASSES - 1))
    if duration <= 0:
        raise ConfigurationError("clip duration must be positive, got %g"
                                 % duration)
    rng = np.random.default_rng([int(seed) & (2 ** 63 - 1), class_id])
    n = int(round(duration * sample_rate))
    x = rng.normal(size=n)

    # exact band limitation: zero the spectrum outside the class band, with
    # raised-cosine skirts so the clip has no ringing edges
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    lo = CENTER_HZ[class_id] - 0.5 * BANDWIDTH_HZ
    hi = CENTER_HZ[class_id] + 0.5 * BANDWIDTH_HZ
    skirt = 60.0
    gain = np.zeros_like(freqs)
    core = (freqs >= lo) & (freqs <= hi)
    gain[core] = 1.0
    left = (freqs >= lo - skirt) & (freqs < lo)
    gain[left] = 0.5 - 0.5 * np.cos(np.pi * (freqs[left] - (lo - skirt)) / skirt)
    right = (freqs > hi) & (freqs <= hi + skirt)
    gain[right] = 0.5 + 0.5 * np.cos(np.pi * (freqs[right] - hi) / skirt)
    x = np.fft.irfft(spec * gain, n)

    t = np.arange(n) / sample_rate
    phase = rng.uniform(0.0, 2.0 * np.pi)
    x *= 0.55 + 0.45 * np.sin(2.0 * np.pi * AM_RATE_HZ[class_id] * t + phase)

    edge = min(int(EDGE_S * sample_rate), n // 2)
    if edge > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(edge) / edge)
        x[:edge] *= ramp
        x[-edge:] *= ramp[::-1]

    rms = np.sqrt(np.mean(x * x))
    if rms < 1e-12:
        raise ConfigurationError("degenerate clip: zero energy")
    return x / rms


def spectral_centroid(x, sample_rate=SAMPLE_RATE):
    """Power-weighted mean frequency of a mono signal."""
    spec = np.abs(np.fft.rfft(np.asarray(x, dtype=np.float64))) ** 2
    freqs = np.fft.rfftfreq(len(x), 1.0 / sample_rate)
    return float((freqs * spec).sum() / spec.sum())
