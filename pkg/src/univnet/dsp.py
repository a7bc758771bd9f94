"""Audio I/O and spectral features.

All pipeline audio is 24 kHz mono. Log-mel features use a 1024-point FFT,
256-sample hop, 1024-sample Hann window and 100 Slaney mel bands spanning
0-12 kHz, with natural log over a 1e-5 floor.
"""

import math
import struct
import wave
from dataclasses import dataclass

import numpy as np

from univnet import tensor as T
from univnet.errors import DimensionError, FormatError, SampleRateError, UnsupportedFormatError

SAMPLE_RATE = 24000
HOP_LENGTH = 256
N_MELS = 100
MEL_FMIN = 0.0
MEL_FMAX = 12000.0
LOG_FLOOR = 1e-5
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class StftParams:
    n_fft: int
    hop: int
    win_length: int

    def __post_init__(self):
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.win_length > self.n_fft:
            raise ValueError(f"win_length {self.win_length} exceeds n_fft {self.n_fft}")
        if self.win_length < 2:
            raise ValueError("win_length must be >= 2")

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1

    def n_frames(self, n_samples):
        return n_samples // self.hop + 1


FEATURE_STFT = StftParams(1024, 256, 1024)
RESOLUTION_STFTS = (
    StftParams(1024, 120, 600),
    StftParams(2048, 240, 1200),
    StftParams(512, 50, 240),
)


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    mag: np.ndarray
    params: StftParams


@dataclass
class MelSpectrogram:
    data: np.ndarray
    normalized: bool = False

    @property
    def n_frames(self):
        return self.data.shape[0]


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float32)
        self.std = np.asarray(self.std, dtype=np.float32)
        if self.mean.shape != self.std.shape:
            raise DimensionError("mean and std shapes differ")
        if np.any(self.std <= 0):
            raise ValueError("std must be strictly positive")


# -- WAV --------------------------------------------------------------------

def load_wav(path, expected_rate=SAMPLE_RATE):
    """Read a 16-bit PCM mono WAV, scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            frames = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormatError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise FormatError(f"{path}: truncated WAV") from exc
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, need 16-bit PCM")
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels} channels, need mono")
    if expected_rate is not None and rate != expected_rate:
        raise SampleRateError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    pcm = np.frombuffer(frames, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float32) / 32768.0, rate)


def write_wav(path, audio):
    pcm = np.clip(np.round(audio.samples.astype(np.float64) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())


def check_rate(audio):
    if audio.sample_rate != SAMPLE_RATE:
        raise SampleRateError(f"sample rate {audio.sample_rate} Hz, expected {SAMPLE_RATE} Hz")


# -- STFT -------------------------------------------------------------------

def hann(win_length):
    """Periodic Hann window."""
    if win_length < 2:
        raise ValueError("win_length must be >= 2")
    n = np.arange(win_length)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / win_length))


def padded_window(params):
    """Hann window of ``win_length`` centred inside ``n_fft`` zeros."""
    window = np.zeros(params.n_fft)
    left = (params.n_fft - params.win_length) // 2
    window[left:left + params.win_length] = hann(params.win_length)
    return window


def stft_magnitude_tensor(x, params):
    """Differentiable ``|STFT|`` of ``x[B, T]`` -> ``[B, frames, bins]``.

    Frames are centred: the signal is reflect-padded by ``n_fft // 2`` on each
    side, so frame ``t`` is centred on sample ``t * hop``.
    """
    x = T.as_tensor(x)
    if x.shape[-1] < params.win_length:
        raise DimensionError(f"signal of {x.shape[-1]} samples shorter than window {params.win_length}")
    half = params.n_fft // 2
    xp = T.pad_last(x, half, half, mode="reflect")
    return T.stft_frames_magnitude(xp, params.n_fft, params.hop, padded_window(params))


def stft_magnitude(audio, params):
    samples = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio)
    with T.no_grad():
        mag = stft_magnitude_tensor(T.Tensor(samples[None]), params).data[0]
    return Spectrogram(mag, params)


# -- mel --------------------------------------------------------------------

_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def hz_to_mel(freq):
    freq = np.asarray(freq, dtype=np.float64)
    linear = freq / _F_SP
    log_part = _MIN_LOG_MEL + np.log(np.maximum(freq, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOGSTEP
    return np.where(freq >= _MIN_LOG_HZ, log_part, linear)


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    linear = mel * _F_SP
    log_part = _MIN_LOG_HZ * np.exp(_LOGSTEP * (mel - _MIN_LOG_MEL))
    return np.where(mel >= _MIN_LOG_MEL, log_part, linear)


def mel_band_edges(n_mels, f_min, f_max):
    """``n_mels + 2`` frequencies; band ``i`` spans edges ``i`` to ``i + 2``, peaking at ``i + 1``."""
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))


def mel_filterbank(n_fft=1024, sr=SAMPLE_RATE, n_mels=N_MELS, f_min=MEL_FMIN, f_max=MEL_FMAX):
    """Area-normalised triangular filters on the Slaney mel scale, ``[n_mels, n_fft//2 + 1]``."""
    if f_max > sr / 2:
        raise ValueError(f"f_max {f_max} Hz above Nyquist {sr / 2} Hz")
    if not f_min < f_max:
        raise ValueError("f_min must be below f_max")
    fft_freqs = np.linspace(0.0, sr / 2, n_fft // 2 + 1)
    edges = mel_band_edges(n_mels, f_min, f_max)
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    return weights


_FILTERBANK_CACHE = {}


def _feature_filterbank():
    key = (FEATURE_STFT.n_fft, SAMPLE_RATE, N_MELS, MEL_FMIN, MEL_FMAX)
    if key not in _FILTERBANK_CACHE:
        _FILTERBANK_CACHE[key] = mel_filterbank(*key).astype(np.float32)
    return _FILTERBANK_CACHE[key]


def log_mel(audio, stats=None):
    """100-band log-mel features ``[frames, 100]``, optionally normalised by ``stats``."""
    check_rate(audio)
    mag = stft_magnitude(audio, FEATURE_STFT).mag
    mel = mag @ _feature_filterbank().T
    data = np.log(np.maximum(mel, LOG_FLOOR)).astype(np.float32)
    result = MelSpectrogram(data)
    return normalize(result, stats) if stats is not None else result


def normalize(mel, stats):
    if mel.normalized:
        raise ValueError("mel is already normalised")
    return MelSpectrogram(((mel.data - stats.mean) / stats.std).astype(np.float32), True)


def denormalize(mel, stats):
    if not mel.normalized:
        raise ValueError("mel is not normalised")
    return MelSpectrogram((mel.data * stats.std + stats.mean).astype(np.float32), False)


def compute_norm_stats(mels):
    """Per-band mean and standard deviation pooled over all frames of all inputs."""
    mels = list(mels)
    if not mels:
        raise ValueError("cannot compute statistics of an empty collection")
    stacked = np.concatenate([np.asarray(m.data if isinstance(m, MelSpectrogram) else m, dtype=np.float64)
                              for m in mels], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return NormStats(mean, std)


# -- feature / stats files ----------------------------------------------------

_FEATURE_MAGIC = b"UVF1"
_STATS_MAGIC = b"UVS1"


def save_features(path, mel):
    data = np.ascontiguousarray(mel.data, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_FEATURE_MAGIC)
        f.write(struct.pack("<II", data.shape[0], data.shape[1]))
        f.write(data.tobytes())


def load_features(path, normalized=True):
    """Read a UVF1 file. Features written by ``extract`` are normalised."""
    blob = open(path, "rb").read()
    if blob[:4] != _FEATURE_MAGIC:
        raise FormatError(f"{path}: not a UVF1 feature file")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    n_frames, n_mels = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * n_frames * n_mels
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=12).reshape(n_frames, n_mels).astype(np.float32)
    return MelSpectrogram(data, normalized)


def save_stats(path, stats):
    with open(path, "wb") as f:
        f.write(_STATS_MAGIC)
        f.write(struct.pack("<I", stats.mean.shape[0]))
        f.write(np.ascontiguousarray(stats.mean, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(stats.std, dtype="<f4").tobytes())


def load_stats(path):
    blob = open(path, "rb").read()
    if blob[:4] != _STATS_MAGIC:
        raise FormatError(f"{path}: not a UVS1 stats file")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header")
    (n_mels,) = struct.unpack_from("<I", blob, 4)
    if len(blob) != 8 + 8 * n_mels:
        raise FormatError(f"{path}: expected {8 + 8 * n_mels} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=8)
    return NormStats(values[:n_mels].copy(), values[n_mels:].copy())
