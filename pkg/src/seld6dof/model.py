"""Causal localization network with optional motion-sensor fusion.

Audio branch: three blocks of causal 3x3 conv + batch norm + ReLU + pooling
that reduce (T, 7, 64) to (T/4, 64, 2), flattened to (T', 128). Sensor
branch: three causal 1-D ResNet blocks taking (T', 6) through channel widths
(64, 32, 16). Variants wire them differently:

  A_baseline_stat  audio only (same net as B; the A/B distinction is which
                   training data it sees)
  B_baseline       audio only
  C_audio_senet    audio with per-block squeeze-excitation self-gating
  D_sensor_concat  audio and sensor features concatenated before the GRU
  E_sensor_mmtm    multimodal transfer gating after every block pair, then
                   concatenation

A two-layer uni-directional GRU and a tanh linear head produce per-frame
(3 tracks, 12 classes, 3 components) vectors.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError

VARIANTS = ("A_baseline_stat", "B_baseline", "C_audio_senet",
            "D_sensor_concat", "E_sensor_mmtm")


def normalize_variant(name):
    name = str(name)
    for v in VARIANTS:
        if name == v or name.upper() == v[0]:
            return v
    raise ConfigurationError("unknown variant %r (expected one of %s or A..E)"
                             % (name, ", ".join(VARIANTS)))


@dataclass
class ModelConfig:
    variant: str = "B_baseline"
    n_classes: int = 12
    n_tracks: int = 3
    audio_channels: int = 64
    n_audio_feat_channels: int = 7
    n_freq_bins: int = 64
    sensor_channels: int = 6
    sensor_filters: tuple = (64, 32, 16)
    sensor_kernel: int = 5
    gru_layers: int = 2
    gru_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        self.variant = normalize_variant(self.variant)
        self.sensor_filters = tuple(self.sensor_filters)

    @property
    def uses_sensor(self):
        return self.variant in ("D_sensor_concat", "E_sensor_mmtm")

    def to_json(self):
        d = self.__dict__.copy()
        d["sensor_filters"] = list(self.sensor_filters)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


# ------------------------------------------------------------------- layers

class CausalConv2d:
    """3x3 (by default) conv over (T, C, F): left-only time padding keeps
    output frame t a function of input frames <= t; frequency padding is
    symmetric."""

    def __init__(self, c_in, c_out, kt=3, kf=3, rng=None):
        scale = np.sqrt(2.0 / (c_in * kt * kf))
        self.w = Tensor(rng.normal(0.0, scale, size=(c_out, c_in, kt, kf)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.kt, self.kf = kt, kf

    def __call__(self, x):
        return ad.conv2d(x, self.w, self.b, self.kt - 1, (self.kf - 1) // 2)

    def params(self, prefix):
        return {prefix + ".w": self.w, prefix + ".b": self.b}


class CausalConv1d:
    """k-tap conv over (T, C) with k-1 left zeros (length preserving)."""

    def __init__(self, c_in, c_out, k=5, rng=None):
        scale = np.sqrt(2.0 / (c_in * k))
        self.w = Tensor(rng.normal(0.0, scale, size=(c_out, c_in, k)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.k = k

    def __call__(self, x):
        return ad.conv1d(x, self.w, self.b, self.k - 1)

    def params(self, prefix):
        return {prefix + ".w": self.w, prefix + ".b": self.b}


class BatchNorm:
    """Per-channel batch norm; running statistics drive eval mode."""

    def __init__(self, c, momentum=0.1):
        self.gamma = Tensor(np.ones(c), requires_grad=True)
        self.beta = Tensor(np.zeros(c), requires_grad=True)
        self.running_mean = np.zeros(c)
        self.running_var = np.ones(c)
        self.momentum = momentum

    def __call__(self, x, training):
        if training:
            y, mean, var = ad.batchnorm_train(x, self.gamma, self.beta)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mean
            self.running_var = (1 - m) * self.running_var + m * var
            return y
        return ad.batchnorm_eval(x, self.gamma, self.beta,
                                 self.running_mean, self.running_var)

    def params(self, prefix):
        return {prefix + ".gamma": self.gamma, prefix + ".beta": self.beta}

    def state(self, prefix):
        return {prefix + ".running_mean": self.running_mean,
                prefix + ".running_var": self.running_var}

    def load_state(self, prefix, arrays):
        self.running_mean = arrays[prefix + ".running_mean"].copy()
        self.running_var = arrays[prefix + ".running_var"].copy()


class Linear:
    def __init__(self, n_in, n_out, rng=None):
        k = 1.0 / np.sqrt(n_in)
        self.w = Tensor(rng.uniform(-k, k, size=(n_in, n_out)), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x):
        return ad.matmul(x, self.w) + self.b

    def params(self, prefix):
        return {prefix + ".w": self.w, prefix + ".b": self.b}


class Gru:
    """Uni-directional multi-layer GRU over (T, n_in) -> (T, hidden).

    Gate layout per layer: reset, update, candidate stacked in that order in
    the (3H, n) input/hidden maps.
    """

    def __init__(self, n_in, hidden, layers, rng=None):
        self.hidden = hidden
        self.layers = []
        for l in range(layers):
            size_in = n_in if l == 0 else hidden
            k = 1.0 / np.sqrt(hidden)
            self.layers.append({
                "w_ih": Tensor(rng.uniform(-k, k, (size_in, 3 * hidden)),
                               requires_grad=True),
                "w_hh": Tensor(rng.uniform(-k, k, (hidden, 3 * hidden)),
                               requires_grad=True),
                "b_ih": Tensor(np.zeros(3 * hidden), requires_grad=True),
                "b_hh": Tensor(np.zeros(3 * hidden), requires_grad=True),
            })

    def __call__(self, x):
        H = self.hidden
        for layer in self.layers:
            gi_all = ad.matmul(x, layer["w_ih"]) + layer["b_ih"]  # (T, 3H)
            h = Tensor(np.zeros((1, H)))
            outs = []
            T = gi_all.shape[0]
            for t in range(T):
                gi = gi_all[t:t + 1, :]
                gh = ad.matmul(h, layer["w_hh"]) + layer["b_hh"]
                r = ad.sigmoid(gi[:, :H] + gh[:, :H])
                z = ad.sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
                n = ad.tanh(gi[:, 2 * H:] + r * gh[:, 2 * H:])
                h = (1.0 - z) * n + z * h
                outs.append(h)
            x = ad.concat(outs, axis=0)
        return x

    def params(self, prefix):
        out = {}
        for l, layer in enumerate(self.layers):
            for name, tensor in layer.items():
                out["%s.l%d.%s" % (prefix, l, name)] = tensor
        return out


class MmtmFuse:
    """Per-frame multimodal gating between (T, C_A, F) audio and (T, C_S)
    sensor activations.

    Audio squeezes over frequency, both modalities project into a joint
    embedding, and each is rescaled channel-wise by gains 2*sigmoid(.) in
    (0, 2). Excitation maps start at zero so the block is initially the
    identity on both inputs.
    """

    def __init__(self, c_a, c_s, rng=None):
        d_z = max(4, (c_a + c_s) // 4)
        self.d_z = d_z
        self.w_a = Tensor(rng.normal(0.0, np.sqrt(2.0 / c_a), (c_a, d_z)),
                          requires_grad=True)
        self.w_s = Tensor(rng.normal(0.0, np.sqrt(2.0 / c_s), (c_s, d_z)),
                          requires_grad=True)
        self.b = Tensor(np.zeros(d_z), requires_grad=True)
        self.u_a = Tensor(np.zeros((d_z, c_a)), requires_grad=True)
        self.ub_a = Tensor(np.zeros(c_a), requires_grad=True)
        self.u_s = Tensor(np.zeros((d_z, c_s)), requires_grad=True)
        self.ub_s = Tensor(np.zeros(c_s), requires_grad=True)

    def __call__(self, a, s):
        if a.shape[0] != s.shape[0]:
            raise DimensionError("mmtm frame counts differ: audio %d vs sensor %d"
                                 % (a.shape[0], s.shape[0]))
        squeeze = ad.tmean(a, axis=2)  # (T, C_A)
        z = ad.relu(ad.matmul(squeeze, self.w_a) + ad.matmul(s, self.w_s) + self.b)
        g_a = ad.scale(ad.sigmoid(ad.matmul(z, self.u_a) + self.ub_a), 2.0)
        g_s = ad.scale(ad.sigmoid(ad.matmul(z, self.u_s) + self.ub_s), 2.0)
        a_out = a * ad.reshape(g_a, (a.shape[0], a.shape[1], 1))
        s_out = s * g_s
        return a_out, s_out

    def params(self, prefix):
        return {prefix + ".w_a": self.w_a, prefix + ".w_s": self.w_s,
                prefix + ".b": self.b, prefix + ".u_a": self.u_a,
                prefix + ".ub_a": self.ub_a, prefix + ".u_s": self.u_s,
                prefix + ".ub_s": self.ub_s}


class SqueezeExcite:
    """Sensor-free reduction of the fusion block: frequency squeeze, joint
    embedding from the audio channels alone, 2*sigmoid self-gating."""

    def __init__(self, c_a, rng=None):
        d_z = max(4, c_a // 4)
        self.w = Tensor(rng.normal(0.0, np.sqrt(2.0 / c_a), (c_a, d_z)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(d_z), requires_grad=True)
        self.u = Tensor(np.zeros((d_z, c_a)), requires_grad=True)
        self.ub = Tensor(np.zeros(c_a), requires_grad=True)

    def __call__(self, a):
        squeeze = ad.tmean(a, axis=2)
        z = ad.relu(ad.matmul(squeeze, self.w) + self.b)
        g = ad.scale(ad.sigmoid(ad.matmul(z, self.u) + self.ub), 2.0)
        return a * ad.reshape(g, (a.shape[0], a.shape[1], 1))

    def params(self, prefix):
        return {prefix + ".w": self.w, prefix + ".b": self.b,
                prefix + ".u": self.u, prefix + ".ub": self.ub}


class _SensorResBlock:
    def __init__(self, c_in, c_out, k, rng):
        self.conv1 = CausalConv1d(c_in, c_out, k, rng)
        self.bn1 = BatchNorm(c_out)
        self.conv2 = CausalConv1d(c_out, c_out, k, rng)
        self.bn2 = BatchNorm(c_out)
        self.proj = CausalConv1d(c_in, c_out, 1, rng) if c_in != c_out else None

    def __call__(self, x, training):
        y = ad.relu(self.bn1(self.conv1(x), training))
        y = self.bn2(self.conv2(y), training)
        skip = self.proj(x) if self.proj is not None else x
        return ad.relu(y + skip)

    def params(self, prefix):
        out = {}
        out.update(self.conv1.params(prefix + ".conv1"))
        out.update(self.bn1.params(prefix + ".bn1"))
        out.update(self.conv2.params(prefix + ".conv2"))
        out.update(self.bn2.params(prefix + ".bn2"))
        if self.proj is not None:
            out.update(self.proj.params(prefix + ".proj"))
        return out

    def state(self, prefix):
        out = {}
        out.update(self.bn1.state(prefix + ".bn1"))
        out.update(self.bn2.state(prefix + ".bn2"))
        return out

    def load_state(self, prefix, arrays):
        self.bn1.load_state(prefix + ".bn1", arrays)
        self.bn2.load_state(prefix + ".bn2", arrays)


# -------------------------------------------------------------------- model

AUDIO_TIME_POOL = 4  # block 1 only: 25 ms feature frames -> 100 ms label frames
AUDIO_FREQ_POOLS = (4, 4, 2)


class SeldNet:
    """The full network; variant wiring per ModelConfig."""

    def __init__(self, config=None, seed=None):
        self.config = config or ModelConfig()
        if seed is not None:
            self.config.seed = seed
        rng = np.random.default_rng(self.config.seed)
        cfg = self.config
        self.training = False

        ca = cfg.audio_channels
        c_in = cfg.n_audio_feat_channels
        self.audio_convs = []
        self.audio_bns = []
        for i in range(3):
            self.audio_convs.append(CausalConv2d(c_in, ca, 3, 3, rng))
            self.audio_bns.append(BatchNorm(ca))
            c_in = ca
        freq_out = cfg.n_freq_bins
        for p in AUDIO_FREQ_POOLS:
            freq_out //= p
        self.audio_flat = ca * freq_out  # 64 ch x 2 bins = 128

        self.se_blocks = None
        self.mmtm_blocks = None
        self.sensor_blocks = None
        gru_in = self.audio_flat
        if cfg.variant == "C_audio_senet":
            self.se_blocks = [SqueezeExcite(ca, rng) for _ in range(3)]
        if cfg.uses_sensor:
            self.sensor_blocks = []
            c_in = cfg.sensor_channels
            for c_out in cfg.sensor_filters:
                self.sensor_blocks.append(
                    _SensorResBlock(c_in, c_out, cfg.sensor_kernel, rng))
                c_in = c_out
            gru_in += cfg.sensor_filters[-1]
        if cfg.variant == "E_sensor_mmtm":
            self.mmtm_blocks = [MmtmFuse(ca, cs, rng)
                                for cs in cfg.sensor_filters]

        self.gru = Gru(gru_in, cfg.gru_hidden, cfg.gru_layers, rng)
        self.head = Linear(cfg.gru_hidden,
                           cfg.n_tracks * cfg.n_classes * 3, rng)

    # -- mode -----------------------------------------------------------------

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    # -- forward ---------------------------------------------------------------

    def forward(self, features, sensor=None):
        cfg = self.config
        if cfg.uses_sensor and sensor is None:
            raise ConfigurationError("variant %s requires a sensor stream"
                                     % cfg.variant)
        if not cfg.uses_sensor and sensor is not None:
            raise ConfigurationError("variant %s is audio-only; got a sensor stream"
                                     % cfg.variant)
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.data.ndim != 3 or x.shape[1] != cfg.n_audio_feat_channels \
                or x.shape[2] != cfg.n_freq_bins:
            raise DimensionError("features must be (T, %d, %d), got %s"
                                 % (cfg.n_audio_feat_channels, cfg.n_freq_bins,
                                    x.shape))
        t_out = x.shape[0] // AUDIO_TIME_POOL
        s = None
        if sensor is not None:
            s = sensor if isinstance(sensor, Tensor) else Tensor(sensor)
            if s.data.ndim != 2 or s.shape[1] != cfg.sensor_channels:
                raise DimensionError("sensor stream must be (T', %d), got %s"
                                     % (cfg.sensor_channels, s.shape))
            if s.shape[0] != t_out:
                raise DimensionError(
                    "sensor frames (%d) must match pooled audio frames (%d)"
                    % (s.shape[0], t_out))

        for i in range(3):
            x = ad.relu(self.audio_bns[i](self.audio_convs[i](x), self.training))
            x = ad.maxpool2d(x, AUDIO_TIME_POOL if i == 0 else 1,
                             AUDIO_FREQ_POOLS[i])
            if self.se_blocks is not None:
                x = self.se_blocks[i](x)
            if self.sensor_blocks is not None:
                s = self.sensor_blocks[i](s, self.training)
            if self.mmtm_blocks is not None:
                x, s = self.mmtm_blocks[i](x, s)

        x = ad.reshape(ad.transpose(x, (0, 2, 1)), (t_out, self.audio_flat))
        if s is not None:
            x = ad.concat([x, s], axis=1)
        h = self.gru(x)
        out = ad.tanh(self.head(h))
        return ad.reshape(out, (t_out, cfg.n_tracks, cfg.n_classes, 3))

    __call__ = forward

    # -- parameter access --------------------------------------------------------

    def parameters(self):
        """Ordered name -> Tensor map of all trainable parameters."""
        out = {}
        for i in range(3):
            out.update(self.audio_convs[i].params("audio.block%d.conv" % i))
            out.update(self.audio_bns[i].params("audio.block%d.bn" % i))
        if self.se_blocks is not None:
            for i, blk in enumerate(self.se_blocks):
                out.update(blk.params("se.block%d" % i))
        if self.sensor_blocks is not None:
            for i, blk in enumerate(self.sensor_blocks):
                out.update(blk.params("sensor.block%d" % i))
        if self.mmtm_blocks is not None:
            for i, blk in enumerate(self.mmtm_blocks):
                out.update(blk.params("mmtm.block%d" % i))
        out.update(self.gru.params("gru"))
        out.update(self.head.params("head"))
        return out

    def param_count(self):
        return sum(t.data.size for t in self.parameters().values())

    # -- persistence ---------------------------------------------------------------

    def state_arrays(self):
        out = {name: t.data for name, t in self.parameters().items()}
        for i in range(3):
            out.update(self.audio_bns[i].state("audio.block%d.bn" % i))
        if self.sensor_blocks is not None:
            for i, blk in enumerate(self.sensor_blocks):
                out.update(blk.state("sensor.block%d" % i))
        return out

    def save(self, path, config_path=None):
        ad.save_checkpoint(path, self.state_arrays())
        if config_path is not None:
            with open(config_path, "w") as fh:
                fh.write(self.config.to_json())

    def load(self, path):
        arrays = ad.load_checkpoint(path)
        params = self.parameters()
        for name, tensor in params.items():
            if name not in arrays:
                raise ConfigurationError("checkpoint is missing parameter %s" % name)
            if arrays[name].shape != tensor.data.shape:
                raise ConfigurationError(
                    "checkpoint parameter %s has shape %s, expected %s"
                    % (name, arrays[name].shape, tensor.data.shape))
            tensor.data = arrays[name].copy()
        for i in range(3):
            self.audio_bns[i].load_state("audio.block%d.bn" % i, arrays)
        if self.sensor_blocks is not None:
            for i, blk in enumerate(self.sensor_blocks):
                blk.load_state("sensor.block%d" % i, arrays)
        return self


def load_model(checkpoint_path, config_path):
    """Rebuild a SeldNet from its config JSON and checkpoint pair."""
    with open(config_path) as fh:
        cfg = ModelConfig.from_json(fh.read())
    return SeldNet(cfg).load(checkpoint_path)
