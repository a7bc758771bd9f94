import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from univnet import dsp
from univnet import tensor as T
from univnet.errors import AlignmentError, DimensionError
from univnet.generator import Generator, GeneratorConfig, KernelPredictor, gau, sample_noise
from univnet.tensor import Tensor


@pytest.fixture(scope="module")
def small_gen():
    return Generator(GeneratorConfig(channels=4, kp_hidden=8), seed=0)


class TestConfig:
    def test_upsampling_must_match_hop(self):
        with pytest.raises(ValueError):
            GeneratorConfig(upsample_factors=(8, 8, 2))

    def test_noise_dim_fixed(self):
        with pytest.raises(ValueError):
            GeneratorConfig(noise_dim=32)

    def test_defaults(self):
        cfg = GeneratorConfig()
        assert cfg.hop_length == 256
        assert cfg.noise_dim == 64
        assert cfg.layers_per_stack == 4


class TestNoise:
    def test_shape(self):
        assert sample_noise(20, seed=0).shape == (64, 20)

    def test_reproducible(self):
        np.testing.assert_array_equal(sample_noise(5, seed=7).data, sample_noise(5, seed=7).data)

    def test_mean(self):
        z = sample_noise(1_000_000 // 64 + 1, seed=1).data
        assert -0.01 < z.mean() < 0.01


class TestKernelPredictor:
    def test_shapes(self, rng):
        kp = KernelPredictor(GeneratorConfig(), 16, 32, rng)
        out = kp(Tensor(rng.standard_normal((1, 100, 20)).astype(np.float32)))
        assert out.kernels.shape == (1, 20, 4, 32, 16, 3)
        assert out.biases.shape == (1, 20, 4, 32)
        assert kp.n_kernel == 4 * 32 * 16 * 3
        assert kp.n_bias == 4 * 32

    def test_constant_condition_gives_identical_kernels(self, rng):
        kp = KernelPredictor(GeneratorConfig(), 16, 32, rng)
        c = np.repeat(rng.standard_normal((1, 100, 1)), 6, axis=2).astype(np.float32)
        out = kp(Tensor(c))
        for f in range(1, 6):
            np.testing.assert_allclose(out.kernels.data[:, f], out.kernels.data[:, 0], atol=1e-6)
            np.testing.assert_allclose(out.biases.data[:, f], out.biases.data[:, 0], atol=1e-6)

    def test_gradient_reaches_predictor(self, rng):
        kp = KernelPredictor(GeneratorConfig(kp_hidden=8), 2, 4, rng)
        out = kp(Tensor(rng.standard_normal((1, 100, 3)).astype(np.float32)))
        T.tsum(out.kernels * Tensor(rng.standard_normal(out.kernels.shape).astype(np.float32))).backward()
        for _, p in kp.named_parameters():
            assert p.grad is not None and np.any(p.grad != 0)


class TestLocationVariableConv:
    def test_constant_kernels_equal_dilated_conv(self, rng, f64):
        c, o, k, d, hop, frames = 3, 4, 3, 2, 8, 5
        x = rng.standard_normal((1, c, hop * frames))
        w = rng.standard_normal((o, c, k))
        b = rng.standard_normal(o)
        kernels = np.broadcast_to(w, (1, frames, o, c, k)).copy()
        biases = np.broadcast_to(b, (1, frames, o)).copy()
        got = T.location_variable_conv(Tensor(x), Tensor(kernels), Tensor(biases), dilation=d, hop=hop).data
        want = T.conv1d(Tensor(x), Tensor(w), Tensor(b), dilation=d, padding="same").data
        assert np.max(np.abs(got - want)) < 1e-5

    def test_zero_kernels_give_frame_bias(self, rng):
        biases = rng.standard_normal((1, 3, 2)).astype(np.float32)
        out = T.location_variable_conv(Tensor(rng.standard_normal((1, 2, 12)).astype(np.float32)),
                                       Tensor(np.zeros((1, 3, 2, 2, 3), np.float32)), Tensor(biases), 1, 4).data
        np.testing.assert_array_equal(out, np.repeat(biases.transpose(0, 2, 1), 4, axis=2))

    def test_frame_locality(self, rng, f64):
        hop = 8
        x = rng.standard_normal((1, 2, 2 * hop))
        kernels = rng.standard_normal((1, 2, 3, 2, 3))
        biases = rng.standard_normal((1, 2, 3))
        base = T.location_variable_conv(Tensor(x), Tensor(kernels), Tensor(biases), 1, hop).data
        bumped = kernels.copy()
        bumped[:, 0] += 1.0
        moved = T.location_variable_conv(Tensor(x), Tensor(bumped), Tensor(biases), 1, hop).data
        changed = np.any(moved != base, axis=(0, 1))
        assert changed.shape == (16,)
        assert changed[:hop].all() and not changed[hop:].any()

    def test_misaligned(self):
        with pytest.raises(AlignmentError):
            T.location_variable_conv(Tensor(np.ones((1, 2, 10))), Tensor(np.ones((1, 2, 1, 2, 3))),
                                     Tensor(np.ones((1, 2, 1))), 1, 4)

    def test_even_kernel_rejected(self):
        with pytest.raises((DimensionError, ValueError)):
            T.location_variable_conv(Tensor(np.ones((1, 2, 8))), Tensor(np.ones((1, 2, 1, 2, 2))),
                                     Tensor(np.ones((1, 2, 1))), 1, 4)


class TestGau:
    def test_zero_first_half(self, rng):
        h = np.concatenate([np.zeros((1, 3, 5)), rng.standard_normal((1, 3, 5))], axis=1)
        np.testing.assert_array_equal(gau(Tensor(h)).data, 0.0)

    def test_saturated_gate(self, rng):
        a = rng.standard_normal((1, 3, 5))
        out = gau(Tensor(np.concatenate([a, np.full((1, 3, 5), 50.0)], axis=1))).data
        np.testing.assert_allclose(out, np.tanh(a), atol=1e-12)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20).filter(lambda v: len(v) % 2 == 0))
    def test_bounded(self, values):
        out = gau(Tensor(np.array(values).reshape(1, -1, 1))).data
        assert np.all(np.abs(out) <= 1.0)

    def test_odd_channels(self):
        with pytest.raises(DimensionError):
            gau(Tensor(np.ones((1, 3, 2))))


class TestGenerator:
    @pytest.mark.parametrize("frames", [1, 7, 20])
    def test_length_contract(self, small_gen, frames, rng):
        out = small_gen(sample_noise(frames, seed=0, batch=1), rng.standard_normal((1, 100, frames)).astype(np.float32))
        assert out.shape == (1, frames * 256)

    def test_untrained_output_bounded(self, small_gen, rng):
        out = small_gen(sample_noise(4, seed=0, batch=1), rng.standard_normal((1, 100, 4)).astype(np.float32)).data
        assert np.all(np.isfinite(out)) and np.all(np.abs(out) < 1)

    def test_frame_mismatch(self, small_gen):
        with pytest.raises(AlignmentError):
            small_gen(sample_noise(4, seed=0, batch=1), np.zeros((1, 100, 5), np.float32))

    def test_wrong_band_count(self, small_gen):
        with pytest.raises(DimensionError):
            small_gen.synthesize(dsp.MelSpectrogram(np.zeros((3, 80), np.float32), True))

    def test_synthesize_deterministic(self, small_gen, rng):
        mel = dsp.MelSpectrogram(rng.standard_normal((5, 100)).astype(np.float32), True)
        a, b = small_gen.synthesize(mel, seed=3), small_gen.synthesize(mel, seed=3)
        assert len(a) == 5 * 256 and a.sample_rate == 24000
        np.testing.assert_array_equal(a.samples, b.samples)

    @pytest.mark.parametrize("channels,target", [(16, 4.00e6), (32, 14.86e6)])
    def test_parameter_count(self, channels, target):
        n = Generator(GeneratorConfig(channels=channels), seed=0).num_parameters()
        assert abs(n - target) / target < 0.2

    @pytest.mark.parametrize("flag", ["use_lvc", "use_gau"])
    def test_ablations_keep_length(self, flag, rng):
        cfg = GeneratorConfig(channels=4, kp_hidden=8, no_lvc_channels=(16, 8, 8, 4), **{flag: False})
        gen = Generator(cfg, seed=0)
        out = gen(sample_noise(3, seed=0, batch=1), rng.standard_normal((1, 100, 3)).astype(np.float32))
        assert out.shape == (1, 768)

    def test_state_dict_round_trip(self, small_gen, rng):
        other = Generator(small_gen.cfg, seed=99)
        other.load_state_dict(small_gen.state_dict())
        z = sample_noise(2, seed=0, batch=1)
        c = rng.standard_normal((1, 100, 2)).astype(np.float32)
        np.testing.assert_array_equal(other(z, c).data, small_gen(z, c).data)
