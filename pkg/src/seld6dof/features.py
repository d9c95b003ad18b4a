"""Acoustic feature extraction for the 4-microphone binaural-style array.

Produces the 7-channel network input: log-amplitude spectrograms of the four
microphones plus three normalized inter-channel phase-difference channels
(path differences in meters against reference channel 0), reduced to 64
frequency bins.
"""

import struct
from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile

from .errors import ConfigurationError, ContractError, DataError

SAMPLE_RATE = 48000
N_FFT = 1024
HOP = 1200  # 0.025 s at 48 kHz
N_BINS = N_FFT // 2 + 1
FRAME_DT = HOP / SAMPLE_RATE
BIN_HZ = SAMPLE_RATE / N_FFT
SPEED_OF_SOUND = 343.0

# 50-9050 Hz band: onesided bins 2..193 (centers 93.75-9046.875 Hz), whose
# 192 bins reduce to 64 by non-overlapping 3-bin averages
BAND_LO, BAND_HI = 2, 194
N_REDUCED = 64

_WINDOW = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(N_FFT) / N_FFT)  # periodic Hann


@dataclass
class FeatureMap:
    """Network-ready acoustic features: (T, channels, freq) plus frame timing."""

    values: np.ndarray
    frame_dt: float = FRAME_DT

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ContractError("FeatureMap values must be (T, C, F)")

    @property
    def frames(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[1]

    @property
    def freq_bins(self):
        return self.values.shape[2]

    @property
    def frame_times(self):
        return np.arange(self.frames) * self.frame_dt


def stft(x, n_fft=N_FFT, hop=HOP):
    """Onesided STFT with a periodic Hann window; full frames only.

    Frame k covers samples [k*hop, k*hop + n_fft). Returns (T, n_fft//2+1)
    complex; a signal shorter than one window is refused rather than padded.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError("stft expects a mono signal")
    if len(x) == 0:
        raise DataError("stft of empty signal")
    if len(x) < n_fft:
        raise DataError("signal length %d shorter than one %d-sample window"
                        % (len(x), n_fft))
    n_frames = (len(x) - n_fft) // hop + 1
    idx = hop * np.arange(n_frames)[:, None] + np.arange(n_fft)[None, :]
    if n_fft == N_FFT:
        win = _WINDOW
    else:
        win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)
    return np.fft.rfft(x[idx] * win, axis=1)


def salsa_lite(X, mic_positions=None, ref_channel=0):
    """Normalized inter-channel phase differences in meters of path length.

    For each non-reference channel i: -(c / 2 pi f) * arg(X_ref * conj(X_i)),
    i.e. positive delays on mic i (later arrival) map to negative values. The
    DC bin and bins with near-zero cross-power are set to 0. X is (4, T, F);
    returns (T, 3, F).
    """
    X = np.asarray(X)
    if X.ndim != 3 or X.shape[0] != 4:
        raise ConfigurationError("salsa_lite expects 4 channel spectrograms, got %s"
                                 % (X.shape,))
    n_bins = X.shape[2]
    freqs = BIN_HZ * np.arange(n_bins)
    scale = np.zeros(n_bins)
    scale[1:] = -SPEED_OF_SOUND / (2.0 * np.pi * freqs[1:])
    ref = X[ref_channel]
    out = np.zeros((X.shape[1], 3, n_bins))
    k = 0
    for i in range(4):
        if i == ref_channel:
            continue
        # cross-power ref * conj(X_i) in real arithmetic so the imaginary
        # part of a channel against itself cancels exactly
        re = ref.real * X[i].real + ref.imag * X[i].imag
        im = ref.imag * X[i].real - ref.real * X[i].imag
        lam = scale[None, :] * np.arctan2(im, re)
        lam[re * re + im * im < 1e-24] = 0.0
        out[:, k, :] = lam
        k += 1
    return out


def frequency_window(full):
    """Reduce onesided 513-bin features to the 64-bin network band.

    Keeps bins 2..193 (roughly 50-9050 Hz) and averages non-overlapping
    groups of 3. Applied identically to every channel.
    """
    full = np.asarray(full, dtype=np.float64)
    if full.ndim != 3 or full.shape[2] != N_BINS:
        raise ConfigurationError("frequency_window expects (T, C, %d), got %s"
                                 % (N_BINS, (full.shape,)))
    band = full[:, :, BAND_LO:BAND_HI]
    return band.reshape(full.shape[0], full.shape[1], N_REDUCED, 3).mean(axis=3)


def extract_features(wav, sample_rate=SAMPLE_RATE):
    """4-channel waveform -> FeatureMap of shape (T, 7, 64).

    Channels 0-3 are log(1+amplitude) spectrograms, channels 4-6 the phase
    path-difference features, both frequency-windowed to 64 bins.
    """
    wav = np.asarray(wav, dtype=np.float64)
    if wav.ndim != 2 or wav.shape[0] != 4:
        raise ConfigurationError("extract_features expects (4, N) audio, got %s"
                                 % (wav.shape,))
    if sample_rate != SAMPLE_RATE:
        raise DataError("expected %d Hz audio, got %g" % (SAMPLE_RATE, sample_rate))
    specs = np.stack([stft(wav[ch]) for ch in range(4)])  # (4, T, 513)
    amp = np.abs(specs).transpose(1, 0, 2)  # (T, 4, 513)
    phase = salsa_lite(specs)  # (T, 3, 513)
    stacked = np.concatenate([amp, phase], axis=1)  # (T, 7, 513)
    reduced = frequency_window(stacked)
    reduced[:, :4, :] = np.log1p(reduced[:, :4, :])
    return FeatureMap(values=reduced)


def standardization_stats(feature_maps):
    """Per-channel mean/std over a collection of FeatureMaps (training split)."""
    if not feature_maps:
        raise DataError("standardization over an empty collection")
    stacked = np.concatenate([fm.values for fm in feature_maps], axis=0)
    mean = stacked.mean(axis=(0, 2))
    std = stacked.std(axis=(0, 2))
    std = np.where(std < 1e-8, 1.0, std)
    return mean, std


def apply_standardization(fm, mean, std):
    """Return a standardized copy of fm using stored per-channel stats."""
    vals = (fm.values - np.asarray(mean)[None, :, None]) \
        / np.asarray(std)[None, :, None]
    return FeatureMap(values=vals, frame_dt=fm.frame_dt)


MAGIC_FEATURES = b"S6FT"


def save_features(path, fm):
    """Write a FeatureMap: magic, T/C/F u32, frame_dt f64, f32 row-major."""
    vals = np.ascontiguousarray(fm.values, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(MAGIC_FEATURES)
        fh.write(struct.pack("<IIId", *vals.shape, fm.frame_dt))
        fh.write(vals.tobytes())


def load_features(path):
    """Read a FeatureMap written by save_features."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC_FEATURES:
            raise DataError("%s: bad feature-file magic %r" % (path, magic))
        t, c, f, frame_dt = struct.unpack("<IIId", fh.read(20))
        raw = fh.read(4 * t * c * f)
        if len(raw) != 4 * t * c * f:
            raise DataError("%s: truncated feature file" % path)
        vals = np.frombuffer(raw, dtype="<f4").reshape(t, c, f)
    return FeatureMap(values=vals.astype(np.float64), frame_dt=frame_dt)


def load_wav(path):
    """Read a multichannel WAV as ((channels, N) float64 in [-1, 1], fs)."""
    fs, data = scipy.io.wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    else:
        data = data.astype(np.float64)
    return data.T.copy(), fs


def save_wav(path, data, sample_rate=SAMPLE_RATE):
    """Write (channels, N) float audio as IEEE float32 WAV."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ContractError("save_wav expects (channels, N)")
    scipy.io.wavfile.write(path, sample_rate, data.T.copy())
