import numpy as np
import pytest

from univnet import dsp
from univnet.errors import SampleRateError
from univnet.generator import Generator, GeneratorConfig
from univnet.metrics import benchmark, evaluate_pairs, spectral_rmse


def test_identical_is_zero(rng):
    x = rng.uniform(-0.5, 0.5, 4800).astype(np.float32)
    assert spectral_rmse(x, x) == 0.0


def test_silence_oracle(rng, f64):
    x = rng.uniform(-0.5, 0.5, 6000)
    padded = np.pad(x, 512, mode="reflect")
    frames = np.lib.stride_tricks.sliding_window_view(padded, 1024)[::256]
    mag = np.abs(np.fft.rfft(frames * np.hanning(1025)[:-1], axis=-1))
    assert spectral_rmse(x, np.zeros_like(x)) == pytest.approx(np.sqrt(np.mean(mag ** 2)), rel=1e-6)


def test_truncates_to_shorter(rng):
    x = rng.uniform(-0.5, 0.5, 5000).astype(np.float32)
    assert spectral_rmse(x, np.concatenate([x, np.ones(300, np.float32)])) == 0.0


def test_nonnegative_and_symmetric(rng):
    x, y = rng.uniform(-0.5, 0.5, (2, 3000)).astype(np.float32)
    assert spectral_rmse(x, y) == pytest.approx(spectral_rmse(y, x)) and spectral_rmse(x, y) > 0


def test_rate_checked():
    a = dsp.AudioBuffer(np.zeros(3000, np.float32), 16000)
    with pytest.raises(SampleRateError):
        spectral_rmse(a, a)


def test_evaluate_pairs(rng):
    x, y = rng.uniform(-0.5, 0.5, (2, 3000)).astype(np.float32)
    report = evaluate_pairs([(x, x), (x, y)])
    assert report.n_pairs == 2
    assert report.per_pair[0] == 0.0
    assert report.rmse == pytest.approx(report.per_pair[1] / 2)
    assert report.pooled_rmse == pytest.approx(report.per_pair[1] / np.sqrt(2))


def test_evaluate_nothing():
    with pytest.raises(ValueError):
        evaluate_pairs([])


def test_benchmark_arithmetic():
    gen = Generator(GeneratorConfig(channels=4, kp_hidden=8), seed=0)
    report = benchmark(gen, seconds_of_audio=0.1, runs=3, warmup=1)
    assert report.samples == 10 * 256
    assert report.realtime_factor == pytest.approx(report.samples / (24000 * report.median_seconds))
    assert report.samples_per_second == pytest.approx(report.samples / report.median_seconds)
    assert report.params == gen.num_parameters()
    d = report.to_dict()
    assert d["samples_per_sec"] == report.samples_per_second and "realtime_factor" in d


def test_benchmark_needs_runs():
    with pytest.raises(ValueError):
        benchmark(Generator(GeneratorConfig(channels=2, kp_hidden=4)), runs=0)
