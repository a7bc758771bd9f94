"""Multi-resolution spectrogram and multi-period waveform discriminators."""

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from univnet import dsp
from univnet import tensor as T
from univnet.errors import DimensionError
from univnet.nn import Conv2d, Module
from univnet.tensor import Tensor

LRELU_SLOPE = 0.2


def _is_prime(n):
    return n >= 2 and all(n % d for d in range(2, int(n ** 0.5) + 1))


@dataclass
class DiscriminatorConfig:
    stft_sets: tuple = dsp.RESOLUTION_STFTS
    periods: tuple = (2, 3, 5, 7, 11)
    mrsd_channels: int = 32
    mrsd_strided_layers: int = 3
    mpwd_channels: tuple = (32, 128, 512, 1024)
    mpwd_final_channels: int = 1024
    use_mrsd: bool = True
    use_mpwd: bool = True

    def __post_init__(self):
        self.stft_sets = tuple(s if isinstance(s, dsp.StftParams) else dsp.StftParams(*s) for s in self.stft_sets)
        self.periods = tuple(int(p) for p in self.periods)
        self.mpwd_channels = tuple(self.mpwd_channels)
        if len(set(self.periods)) != len(self.periods) or not all(_is_prime(p) for p in self.periods):
            raise ValueError(f"periods must be distinct primes, got {self.periods}")
        if not self.use_mrsd and not self.use_mpwd:
            raise ValueError("at least one discriminator family is required")

    @property
    def n_resolutions(self):
        return len(self.stft_sets)

    @property
    def n_sub(self):
        return self.use_mrsd * len(self.stft_sets) + self.use_mpwd * len(self.periods)

    def to_dict(self):
        d = asdict(self)
        d["stft_sets"] = [[s.n_fft, s.hop, s.win_length] for s in self.stft_sets]
        return d


class SubScore(NamedTuple):
    map: Tensor
    source: str
    features: list


def reshape2d(x, period):
    """``x[(B,) T]`` -> ``[(B,) ceil(T/p), p]``, reflect-padding the tail to a multiple of ``p``."""
    x = T.as_tensor(x)
    if x.shape[-1] == 0:
        raise DimensionError("cannot reshape an empty signal")
    n = x.shape[-1]
    if n < period:
        raise DimensionError(f"signal of {n} samples shorter than period {period}")
    rem = n % period
    if rem:
        x = T.pad_last(x, 0, period - rem, mode="reflect")
    return x.reshape(*x.shape[:-1], x.shape[-1] // period, period)


class SpectrogramSubDiscriminator(Module):
    """Strided 2-D convs over a ``[frames, bins]`` linear magnitude image."""

    def __init__(self, cfg, rng):
        ch = cfg.mrsd_channels
        self.convs = [Conv2d(1, ch, (3, 9), rng, padding=(1, 4))]
        for _ in range(cfg.mrsd_strided_layers):
            self.convs.append(Conv2d(ch, ch, (3, 9), rng, stride=(1, 2), padding=(1, 4)))
        self.convs.append(Conv2d(ch, ch, (3, 3), rng, padding=(1, 1)))
        self.conv_post = Conv2d(ch, 1, (3, 3), rng, padding=(1, 1))

    def forward(self, mag):
        x = mag.reshape(mag.shape[0], 1, mag.shape[1], mag.shape[2])
        features = []
        for conv in self.convs:
            x = T.leaky_relu(conv(x), LRELU_SLOPE)
            features.append(x)
        x = self.conv_post(x)
        features.append(x)
        return x, features


class PeriodSubDiscriminator(Module):
    """2-D convs along the time axis of a period-folded waveform."""

    def __init__(self, cfg, period, rng):
        self.period = period
        chans = (1,) + cfg.mpwd_channels
        self.convs = [Conv2d(chans[i], chans[i + 1], (5, 1), rng, stride=(3, 1), padding=(2, 0))
                      for i in range(len(cfg.mpwd_channels))]
        self.convs.append(Conv2d(chans[-1], cfg.mpwd_final_channels, (5, 1), rng, padding=(2, 0)))
        self.conv_post = Conv2d(cfg.mpwd_final_channels, 1, (3, 1), rng, padding=(1, 0))

    def forward(self, x):
        x = reshape2d(x, self.period)
        x = x.reshape(x.shape[0], 1, x.shape[1], x.shape[2])
        features = []
        for conv in self.convs:
            x = T.leaky_relu(conv(x), LRELU_SLOPE)
            features.append(x)
        x = self.conv_post(x)
        features.append(x)
        return x, features


class MRSD(Module):
    def __init__(self, cfg, rng):
        self.stft_sets = cfg.stft_sets
        self.subs = [SpectrogramSubDiscriminator(cfg, rng) for _ in cfg.stft_sets]

    def spectrograms(self, x):
        return multi_resolution_magnitudes(x, self.stft_sets)

    def forward(self, x=None, specs=None):
        """Score waveform ``x[B, T]``, or precomputed magnitudes ``specs`` (one per STFT set)."""
        if specs is None:
            specs = self.spectrograms(x)
        if len(specs) != len(self.subs):
            raise DimensionError(f"{len(specs)} spectrograms for {len(self.subs)} sub-discriminators")
        scores = []
        for i, (sub, mag) in enumerate(zip(self.subs, specs)):
            out, feats = sub(mag)
            p = self.stft_sets[i]
            scores.append(SubScore(out, f"mrsd[{p.n_fft},{p.hop},{p.win_length}]", feats))
        return scores


class MPWD(Module):
    def __init__(self, cfg, rng):
        self.periods = cfg.periods
        self.subs = [PeriodSubDiscriminator(cfg, p, rng) for p in cfg.periods]

    def forward(self, x):
        x = T.as_tensor(x)
        if x.shape[-1] < max(self.periods):
            raise DimensionError(f"signal of {x.shape[-1]} samples shorter than period {max(self.periods)}")
        scores = []
        for sub in self.subs:
            out, feats = sub(x)
            scores.append(SubScore(out, f"mpwd[{sub.period}]", feats))
        return scores


def multi_resolution_magnitudes(x, stft_sets):
    """Linear magnitudes ``[B, frames, bins]`` of ``x[B, T]`` for each STFT set."""
    x = T.as_tensor(x)
    longest = max(p.win_length for p in stft_sets)
    if x.shape[-1] < longest:
        raise DimensionError(f"signal of {x.shape[-1]} samples shorter than window {longest}")
    return [dsp.stft_magnitude_tensor(x, p) for p in stft_sets]


class Discriminator(Module):
    """All sub-discriminators; ``forward`` returns ``K`` :class:`SubScore` entries (MRSD first)."""

    def __init__(self, cfg=None, rng=None, seed=1):
        cfg = cfg if cfg is not None else DiscriminatorConfig()
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.cfg = cfg
        self.mrsd = MRSD(cfg, rng) if cfg.use_mrsd else None
        self.mpwd = MPWD(cfg, rng) if cfg.use_mpwd else None

    def spectrograms(self, x):
        return multi_resolution_magnitudes(x, self.cfg.stft_sets)

    def forward(self, x, specs=None):
        x = T.as_tensor(x)
        if x.ndim == 1:
            x = x.reshape(1, x.shape[0])
        scores = []
        if self.mrsd is not None:
            scores.extend(self.mrsd(x, specs=specs))
        if self.mpwd is not None:
            scores.extend(self.mpwd(x))
        return scores
