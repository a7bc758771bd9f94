import csv

import numpy as np
import pytest

from univnet import dsp, synth
from univnet.checkpoint import load_checkpoint
from univnet.errors import AlignmentError, FormatError, NumericError
from univnet.training import (
    Adam,
    AdamState,
    Dataset,
    TrainConfig,
    adam_step,
    discriminator_from_checkpoint,
    generator_from_checkpoint,
    stats_from_checkpoint,
    train,
)

TINY = dict(channels=4, batch_size=1, segment_frames=8, mrsd_channels=4, mpwd_channels=[4, 8, 8],
            checkpoint_interval=3)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    dsp.write_wav(d / "a.wav", synth.synthetic_voice(0.4, seed=1))
    dsp.write_wav(d / "b.wav", synth.synthetic_voice(0.3, seed=2))
    return d


class TestAdam:
    def test_first_step_is_signed_lr(self, rng):
        p = rng.standard_normal(50)
        g = rng.standard_normal(50)
        before = p.copy()
        adam_step({"p": p}, {"p": g}, AdamState(), lr=1e-4)
        np.testing.assert_allclose(p - before, -1e-4 * np.sign(g), rtol=1e-3)

    def test_zero_gradient_leaves_params(self, rng):
        p = rng.standard_normal(5)
        before = p.copy()
        adam_step({"p": p}, {"p": np.zeros(5)}, AdamState())
        np.testing.assert_array_equal(p, before)

    def test_nan_aborts_without_changes(self):
        p, q = np.ones(3), np.ones(3)
        state = AdamState()
        with pytest.raises(NumericError):
            adam_step({"p": p, "q": q}, {"p": np.ones(3), "q": np.array([1.0, np.nan, 0.0])}, state)
        np.testing.assert_array_equal(p, 1.0)
        assert state.t == 0 and not state.m

    def test_quadratic_descent(self):
        x = np.array([1.0])
        state = AdamState()
        trace = []
        for _ in range(100):
            adam_step({"x": x}, {"x": 2 * x}, state, lr=1e-2)
            trace.append(abs(x[0]))
        assert trace[-1] < 0.5
        assert np.all(np.diff(trace[5:]) < 0)

    def test_state_tensor_round_trip(self):
        from univnet.generator import Generator, GeneratorConfig

        gen = Generator(GeneratorConfig(channels=2, kp_hidden=4), seed=0)
        for p in gen.parameters():
            p.grad = np.ones_like(p.data)
        opt = Adam(gen)
        opt.step()
        other = Adam(gen)
        other.load_state_tensors(opt.state_tensors("a"), "a", opt.state.t)
        assert other.state.t == 1
        for k in opt.state.m:
            np.testing.assert_array_equal(other.state.m[k], opt.state.m[k])


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.lr, cfg.beta1, cfg.beta2) == (1e-4, 0.5, 0.9)
        assert cfg.lambda_aux == 2.5

    def test_warmup_after_total(self):
        with pytest.raises(ValueError):
            TrainConfig(warmup_steps=10, total_steps=5)

    def test_short_segments(self):
        with pytest.raises(ValueError):
            TrainConfig(segment_frames=4)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            TrainConfig.from_dict({"learning_rate": 1.0})

    def test_json(self, tmp_path):
        (tmp_path / "c.json").write_text('{"channels": 8, "seed": 3}')
        cfg = TrainConfig.from_json(tmp_path / "c.json")
        assert cfg.channels == 8 and cfg.seed == 3

    def test_ablation_configs(self):
        cfg = TrainConfig(no_lvc=True, no_mpwd=True)
        assert not cfg.generator_config().use_lvc
        assert not cfg.discriminator_config().use_mpwd


class TestDataset:
    def test_batches_are_aligned(self, data_dir, rng):
        ds = Dataset.from_dir(data_dir)
        x, c = ds.sample_batch(rng, 3, 8)
        assert x.shape == (3, 8 * 256) and c.shape == (3, 100, 8)

    def test_empty_dir(self, tmp_path):
        with pytest.raises(FormatError):
            Dataset.from_dir(tmp_path)

    def test_features_need_stats(self, tmp_path):
        dsp.write_wav(tmp_path / "a.wav", synth.synthetic_voice(0.2))
        mel = dsp.log_mel(dsp.load_wav(tmp_path / "a.wav"))
        stats = dsp.compute_norm_stats([mel])
        dsp.save_features(tmp_path / "a.uvf", dsp.normalize(mel, stats))
        with pytest.raises(FormatError):
            Dataset.from_dir(tmp_path)
        assert Dataset.from_dir(tmp_path, stats).utterances[0].mel.shape == mel.data.shape

    def test_misaligned_features(self, tmp_path):
        dsp.write_wav(tmp_path / "a.wav", synth.synthetic_voice(0.2))
        dsp.save_features(tmp_path / "a.uvf", dsp.MelSpectrogram(np.zeros((3, 100), np.float32), True))
        stats = dsp.NormStats(np.zeros(100), np.ones(100))
        with pytest.raises(AlignmentError):
            Dataset.from_dir(tmp_path, stats)

    def test_clip_shorter_than_segment(self, data_dir, rng):
        with pytest.raises(AlignmentError):
            Dataset.from_dir(data_dir).sample_batch(rng, 1, 200)


class TestTrain:
    def test_warmup_only_leaves_discriminator_untouched(self, data_dir, tmp_path):
        cfg = TrainConfig(**TINY, warmup_steps=3, total_steps=3)
        result = train(data_dir, cfg, tmp_path / "run")
        init = TrainConfig(**TINY, warmup_steps=0, total_steps=1)
        from univnet.discriminators import Discriminator
        from univnet.generator import Generator

        root = np.random.default_rng(init.seed)
        g_rng, d_rng, _ = root.spawn(3)
        Generator(init.generator_config(), rng=g_rng)
        fresh = Discriminator(init.discriminator_config(), rng=d_rng)
        for (name, a), (_, b) in zip(result.discriminator.named_parameters(), fresh.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data, err_msg=name)
        assert all(np.isnan(h["l_d"]) for h in result.history)

    def test_adversarial_steps_log_every_term(self, data_dir, tmp_path):
        cfg = TrainConfig(**TINY, warmup_steps=1, total_steps=3)
        train(data_dir, cfg, tmp_path)
        rows = list(csv.DictReader(open(tmp_path / "losses.csv")))
        assert len(rows) == 3
        assert rows[0]["l_d"] == "" and rows[0]["l_adv_g"] == ""
        for row in rows[1:]:
            assert np.isfinite(float(row["l_d"]))
            l_g = float(row["l_g"])
            assert l_g == pytest.approx(2.5 * float(row["l_aux"]) + float(row["l_adv_g"]), abs=1e-5)
        assert set(rows[0]) >= {"l_sc_0", "l_sc_2", "l_mag_1"}

    def test_checkpoints_restore_models(self, data_dir, tmp_path):
        cfg = TrainConfig(**TINY, warmup_steps=1, total_steps=4)
        result = train(data_dir, cfg, tmp_path)
        assert [p.name for p in result.checkpoints] == ["ckpt_0000003.uvc", "ckpt_0000004.uvc"]
        ckpt = load_checkpoint(result.checkpoints[-1])
        assert ckpt.step == 4
        assert ckpt.meta["adam_g_t"] == 4 and ckpt.meta["adam_d_t"] == 3
        gen = generator_from_checkpoint(ckpt)
        disc = discriminator_from_checkpoint(ckpt)
        for (n, a), (_, b) in zip(gen.named_parameters(), result.generator.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data, err_msg=n)
        assert disc.num_parameters() == result.discriminator.num_parameters()
        stats = stats_from_checkpoint(ckpt)
        np.testing.assert_array_equal(stats.mean, result.stats.mean.astype(np.float32))

    def test_same_seed_same_log(self, data_dir, tmp_path):
        cfg = TrainConfig(**TINY, warmup_steps=1, total_steps=3)
        train(data_dir, cfg, tmp_path / "a")
        train(data_dir, cfg, tmp_path / "b")
        assert (tmp_path / "a" / "losses.csv").read_bytes() == (tmp_path / "b" / "losses.csv").read_bytes()

    def test_different_seed_differs(self, data_dir, tmp_path):
        train(data_dir, TrainConfig(**TINY, warmup_steps=2, total_steps=2), tmp_path / "a")
        train(data_dir, TrainConfig(**TINY, warmup_steps=2, total_steps=2, seed=1), tmp_path / "b")
        assert (tmp_path / "a" / "losses.csv").read_bytes() != (tmp_path / "b" / "losses.csv").read_bytes()
