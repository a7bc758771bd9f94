"""Spectral RMSE and generation-speed benchmark."""

import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from univnet import dsp
from univnet import tensor as T
from univnet.generator import sample_noise


@dataclass
class EvalReport:
    rmse: float  # mean of per-pair RMSE
    n_pairs: int
    per_pair: list = field(default_factory=list)
    pooled_rmse: float = 0.0  # RMSE over all cells of all pairs

    def to_dict(self):
        return asdict(self)


@dataclass
class BenchReport:
    samples_per_second: float
    realtime_factor: float
    params: int
    median_seconds: float
    mad_seconds: float
    unstable: bool
    samples: int
    runs: int
    threads: int
    kernel_backend: str

    def to_dict(self):
        d = asdict(self)
        d["samples_per_sec"] = d.pop("samples_per_second")
        return d


def _pair_cells(x, x_hat):
    x = x.samples if isinstance(x, dsp.AudioBuffer) else np.asarray(x, dtype=np.float32)
    x_hat = x_hat.samples if isinstance(x_hat, dsp.AudioBuffer) else np.asarray(x_hat, dtype=np.float32)
    n = min(len(x), len(x_hat))
    if n == 0:
        raise ValueError("no overlapping samples")
    a = dsp.stft_magnitude(x[:n], dsp.FEATURE_STFT).mag.astype(np.float64)
    b = dsp.stft_magnitude(x_hat[:n], dsp.FEATURE_STFT).mag.astype(np.float64)
    return (a - b) ** 2


def spectral_rmse(x, x_hat):
    """RMS difference of linear STFT magnitudes (1024/256/1024), after truncating to the shorter signal."""
    for a in (x, x_hat):
        if isinstance(a, dsp.AudioBuffer):
            dsp.check_rate(a)
    return float(np.sqrt(_pair_cells(x, x_hat).mean()))


def evaluate_pairs(pairs):
    """Per-pair RMSE averaged over pairs, plus the pooled-cell RMSE."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs to evaluate")
    per_pair, total, count = [], 0.0, 0
    for x, x_hat in pairs:
        sq = _pair_cells(x, x_hat)
        per_pair.append(float(np.sqrt(sq.mean())))
        total += float(sq.sum())
        count += sq.size
    return EvalReport(float(np.mean(per_pair)), len(pairs), per_pair, float(np.sqrt(total / count)))


def thread_count():
    try:
        from threadpoolctl import threadpool_info

        counts = [info.get("num_threads", 1) for info in threadpool_info()]
        return max(counts) if counts else 1
    except ImportError:
        return int(os.environ.get("OMP_NUM_THREADS", "1"))


def benchmark(generator, seconds_of_audio=1.0, runs=10, warmup=2, seed=0):
    """Time ``generator.forward`` on random conditions; median over ``runs`` after ``warmup`` runs."""
    from univnet import kernels

    if runs < 1:
        raise ValueError("runs must be >= 1")
    n_frames = max(1, int(np.ceil(seconds_of_audio * dsp.SAMPLE_RATE / dsp.HOP_LENGTH)))
    rng = np.random.default_rng(seed)
    dtype = generator.conv_pre.v.dtype
    z = T.Tensor(sample_noise(n_frames, batch=1, rng=rng).data.astype(dtype))
    c = T.Tensor(rng.standard_normal((1, generator.cfg.n_mels, n_frames)).astype(dtype))
    times = []
    with T.no_grad():
        for i in range(warmup + runs):
            start = time.perf_counter()
            out = generator(z, c)
            elapsed = time.perf_counter() - start
            if i >= warmup:
                times.append(elapsed)
    samples = out.shape[-1]
    median = float(np.median(times))
    mad = float(np.median(np.abs(np.asarray(times) - median)))
    sps = samples / median
    return BenchReport(
        samples_per_second=sps,
        realtime_factor=sps / dsp.SAMPLE_RATE,
        params=generator.num_parameters(),
        median_seconds=median,
        mad_seconds=mad,
        unstable=mad > 0.2 * median,
        samples=samples,
        runs=runs,
        threads=thread_count(),
        kernel_backend=kernels.backend,
    )
