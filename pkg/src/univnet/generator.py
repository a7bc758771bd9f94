"""Noise-driven, mel-conditioned waveform generator.

The main stream carries a 64-channel Gaussian noise sequence at frame rate
and is upsampled x8, x8, x4 by transposed convolutions. After each upsample a
residual stack of location-variable convolutions (LVC) refines the signal;
the LVC kernels for every layer of the stack come from one kernel predictor
that reads the log-mel condition.
"""

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from univnet import dsp
from univnet import tensor as T
from univnet.errors import AlignmentError, DimensionError
from univnet.nn import Conv1d, ConvTranspose1d, Module
from univnet.tensor import Tensor

LRELU_SLOPE = 0.2


@dataclass
class GeneratorConfig:
    channels: int = 16
    noise_dim: int = 64
    n_mels: int = dsp.N_MELS
    upsample_factors: tuple = (8, 8, 4)
    lvc_kernel_size: int = 3
    dilations: tuple = (1, 3, 9, 27)
    kp_hidden: int = 64
    kp_kernel_size: int = 3
    kp_input_kernel_size: int = 5
    kp_res_blocks: int = 3
    pre_kernel_size: int = 7
    post_kernel_size: int = 7
    use_lvc: bool = True
    use_gau: bool = True
    # main-stream widths (input layer, then each stack) when use_lvc is False
    no_lvc_channels: tuple = field(default=(512, 256, 128, 64))

    def __post_init__(self):
        self.upsample_factors = tuple(self.upsample_factors)
        self.dilations = tuple(self.dilations)
        self.no_lvc_channels = tuple(self.no_lvc_channels)
        if int(np.prod(self.upsample_factors)) != dsp.HOP_LENGTH:
            raise ValueError(f"upsample factors {self.upsample_factors} must multiply to {dsp.HOP_LENGTH}")
        if self.noise_dim != 64:
            raise ValueError("noise_dim is fixed at 64")
        if self.lvc_kernel_size % 2 != 1:
            raise ValueError("lvc_kernel_size must be odd")
        if len(self.no_lvc_channels) != len(self.upsample_factors) + 1:
            raise ValueError("no_lvc_channels needs one width per stack plus the input layer")

    @property
    def layers_per_stack(self):
        return len(self.dilations)

    @property
    def hop_length(self):
        return int(np.prod(self.upsample_factors))

    def to_dict(self):
        return asdict(self)


class KernelPredictorOutput(NamedTuple):
    kernels: Tensor  # [B, F, layers, out, in, k]
    biases: Tensor  # [B, F, layers, out]


def sample_noise(n_frames, seed=None, batch=None, noise_dim=64, rng=None):
    """Standard-normal noise ``[noise_dim, n_frames]`` (``[batch, ...]`` if ``batch``)."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    shape = (noise_dim, n_frames) if batch is None else (batch, noise_dim, n_frames)
    return Tensor(rng.standard_normal(shape).astype(T.get_default_dtype()))


def gau(h):
    """Gated activation: ``tanh(a) * sigmoid(b)`` for ``h`` split into halves ``a, b`` on the channel axis."""
    h = T.as_tensor(h)
    n = h.shape[-2]
    if n % 2:
        raise DimensionError(f"gated activation needs an even channel count, got {n}")
    c = n // 2
    return T.tanh(h[..., :c, :]) * T.sigmoid(h[..., c:, :])


def lvc_forward(x, kp, layer, dilation, hop):
    """Apply layer ``layer`` of a kernel-predictor output to ``x[B, c, T]``."""
    return T.location_variable_conv(x, kp.kernels[:, :, layer], kp.biases[:, :, layer], dilation, hop)


class KernelPredictor(Module):
    """Predicts per-frame kernels and biases for every LVC layer of one stack.

    Convolutions replicate edge frames rather than zero padding, so a
    frame-constant condition yields frame-constant kernels.
    """

    def __init__(self, cfg, c_in, c_out, rng):
        self.n_layers = cfg.layers_per_stack
        self.c_in = c_in
        self.c_out = c_out
        self.k = cfg.lvc_kernel_size
        self.n_kernel = self.n_layers * c_out * c_in * self.k
        self.n_bias = self.n_layers * c_out
        h = cfg.kp_hidden
        self.input_conv = Conv1d(cfg.n_mels, h, cfg.kp_input_kernel_size, rng, pad_mode="edge")
        self.res_convs = [
            (Conv1d(h, h, cfg.kp_kernel_size, rng, pad_mode="edge"),
             Conv1d(h, h, cfg.kp_kernel_size, rng, pad_mode="edge"))
            for _ in range(cfg.kp_res_blocks)
        ]
        self.res_convs = [m for pair in self.res_convs for m in pair]
        self.output_conv = Conv1d(h, self.n_kernel + self.n_bias, cfg.kp_kernel_size, rng, pad_mode="edge")

    def forward(self, c):
        if c.shape[1] != self.input_conv.v.shape[1]:
            raise DimensionError(f"condition has {c.shape[1]} bands, expected {self.input_conv.v.shape[1]}")
        h = T.leaky_relu(self.input_conv(c), LRELU_SLOPE)
        for i in range(0, len(self.res_convs), 2):
            r = T.leaky_relu(self.res_convs[i](h), LRELU_SLOPE)
            h = h + T.leaky_relu(self.res_convs[i + 1](r), LRELU_SLOPE)
        out = self.output_conv(h)
        bsz, _, n_frames = out.shape
        kernels = out[:, :self.n_kernel].reshape(bsz, self.n_layers, self.c_out, self.c_in, self.k, n_frames)
        biases = out[:, self.n_kernel:].reshape(bsz, self.n_layers, self.c_out, n_frames)
        return KernelPredictorOutput(kernels.transpose(0, 5, 1, 2, 3, 4), biases.transpose(0, 3, 1, 2))


class LVCStack(Module):
    """Upsample, then residual LVC layers gated by GAU (or LReLU without GAU)."""

    def __init__(self, cfg, channels, stride, hop, rng):
        self.hop = hop
        self.dilations = cfg.dilations
        self.use_gau = cfg.use_gau
        self.upsample = ConvTranspose1d(channels, channels, 2 * stride, rng, stride=stride, padding=stride // 2)
        lvc_out = 2 * channels if cfg.use_gau else channels
        self.kernel_predictor = KernelPredictor(cfg, channels, lvc_out, rng)

    def forward(self, x, c):
        x = self.upsample(T.leaky_relu(x, LRELU_SLOPE))
        kp = self.kernel_predictor(c)
        for i, d in enumerate(self.dilations):
            h = lvc_forward(T.leaky_relu(x, LRELU_SLOPE), kp, i, d, self.hop)
            h = gau(h) if self.use_gau else T.leaky_relu(h, LRELU_SLOPE)
            x = x + h
        return x


class LocalConditioningStack(Module):
    """Stack used when LVC is ablated: dilated convs plus an upsampled 1x1 condition projection."""

    def __init__(self, cfg, c_in, channels, stride, hop, rng):
        self.hop = hop
        self.use_gau = cfg.use_gau
        self.upsample = ConvTranspose1d(c_in, channels, 2 * stride, rng, stride=stride, padding=stride // 2)
        width = 2 * channels if cfg.use_gau else channels
        self.convs = [Conv1d(channels, width, cfg.lvc_kernel_size, rng, dilation=d) for d in cfg.dilations]
        self.cond_convs = [Conv1d(cfg.n_mels, width, 1, rng) for _ in cfg.dilations]

    def forward(self, x, c):
        x = self.upsample(T.leaky_relu(x, LRELU_SLOPE))
        for conv, cond in zip(self.convs, self.cond_convs):
            h = conv(T.leaky_relu(x, LRELU_SLOPE)) + T.repeat_frames(cond(c), self.hop)
            h = gau(h) if self.use_gau else T.leaky_relu(h, LRELU_SLOPE)
            x = x + h
        return x


class Generator(Module):
    def __init__(self, cfg=None, rng=None, seed=0):
        cfg = cfg if cfg is not None else GeneratorConfig()
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.cfg = cfg
        if cfg.use_lvc:
            widths = [cfg.channels] * (len(cfg.upsample_factors) + 1)
        else:
            widths = list(cfg.no_lvc_channels)
        self.conv_pre = Conv1d(cfg.noise_dim, widths[0], cfg.pre_kernel_size, rng)
        self.stacks = []
        hop = 1
        for i, stride in enumerate(cfg.upsample_factors):
            hop *= stride
            if cfg.use_lvc:
                self.stacks.append(LVCStack(cfg, widths[i + 1], stride, hop, rng))
            else:
                self.stacks.append(LocalConditioningStack(cfg, widths[i], widths[i + 1], stride, hop, rng))
        self.conv_post = Conv1d(widths[-1], 1, cfg.post_kernel_size, rng)

    def forward(self, z, c):
        """Map noise ``z[B, 64, F]`` and condition ``c[B, n_mels, F]`` to audio ``[B, F*256]``."""
        z, c = T.as_tensor(z), T.as_tensor(c)
        if z.ndim == 2:
            z = z.reshape(1, *z.shape)
        if c.ndim == 2:
            c = c.reshape(1, *c.shape)
        if z.shape[-1] != c.shape[-1]:
            raise AlignmentError(f"noise has {z.shape[-1]} frames, condition {c.shape[-1]}")
        if z.shape[1] != self.cfg.noise_dim:
            raise DimensionError(f"noise has {z.shape[1]} channels, expected {self.cfg.noise_dim}")
        x = self.conv_pre(z)
        for stack in self.stacks:
            x = stack(x, c)
        x = T.tanh(self.conv_post(T.leaky_relu(x, LRELU_SLOPE)))
        return x.reshape(x.shape[0], x.shape[2])

    def synthesize(self, mel, seed=0):
        """Vocode a (normalised) :class:`~univnet.dsp.MelSpectrogram` to an :class:`~univnet.dsp.AudioBuffer`."""
        data = mel.data if isinstance(mel, dsp.MelSpectrogram) else np.asarray(mel)
        if data.shape[1] != self.cfg.n_mels:
            raise DimensionError(f"mel has {data.shape[1]} bands, expected {self.cfg.n_mels}")
        dtype = self.conv_pre.v.dtype
        z = sample_noise(data.shape[0], seed=seed, batch=1).data.astype(dtype)
        c = np.ascontiguousarray(data.T[None].astype(dtype))
        with T.no_grad():
            audio = self.forward(Tensor(z), Tensor(c)).data[0]
        return dsp.AudioBuffer(audio.astype(np.float32), dsp.SAMPLE_RATE)
