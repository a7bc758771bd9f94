"""Adam, segment sampling and the alternating LSGAN training loop."""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from univnet import dsp
from univnet import tensor as T
from univnet.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from univnet.discriminators import Discriminator, DiscriminatorConfig, multi_resolution_magnitudes
from univnet.errors import AlignmentError, FormatError, NumericError
from univnet.generator import Generator, GeneratorConfig, sample_noise
from univnet.losses import LossBreakdown, aux_loss_from_specs, discriminator_loss, generator_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    batch_size: int = 4
    segment_frames: int = 32
    warmup_steps: int = 100
    total_steps: int = 1000
    seed: int = 0
    no_lvc: bool = False
    no_gau: bool = False
    no_mrsd: bool = False
    no_mpwd: bool = False
    channels: int = 16
    lambda_aux: float = 2.5
    checkpoint_interval: int = 200
    log_interval: int = 1
    mrsd_channels: int = 32
    mpwd_channels: list = field(default_factory=lambda: [32, 128, 512, 1024, 1024])

    def __post_init__(self):
        if self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must not exceed total_steps")
        if self.segment_frames < 8:
            raise ValueError("segment_frames must be >= 8")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ValueError("batch_size and total_steps must be >= 1")
        if len(self.mpwd_channels) < 2:
            raise ValueError("mpwd_channels needs at least two widths")
        self.mpwd_channels = [int(c) for c in self.mpwd_channels]

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    def generator_config(self):
        return GeneratorConfig(channels=self.channels, use_lvc=not self.no_lvc, use_gau=not self.no_gau)

    def discriminator_config(self):
        return DiscriminatorConfig(
            mrsd_channels=self.mrsd_channels,
            mpwd_channels=tuple(self.mpwd_channels[:-1]),
            mpwd_final_channels=self.mpwd_channels[-1],
            use_mrsd=not self.no_mrsd,
            use_mpwd=not self.no_mpwd,
        )


# -- Adam -------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr=1e-4, beta1=0.5, beta2=0.9, eps=1e-8):
    """One bias-corrected Adam update of ``params`` (name -> array) in place.

    ``grads`` maps names to gradient arrays; names with no gradient are
    skipped. Non-finite gradients abort the step before anything is modified.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += eps
        p -= (lr / bc1) * m / denom


class Adam:
    def __init__(self, module, lr=1e-4, beta1=0.5, beta2=0.9, eps=1e-8):
        self.module = module
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self):
        named = dict(self.module.named_parameters())
        adam_step(
            {k: p.data for k, p in named.items()},
            {k: p.grad for k, p in named.items()},
            self.state, self.lr, self.beta1, self.beta2, self.eps,
        )

    def state_tensors(self, prefix):
        out = {}
        for k in self.state.m:
            out[f"{prefix}.m.{k}"] = self.state.m[k]
            out[f"{prefix}.v.{k}"] = self.state.v[k]
        return out

    def load_state_tensors(self, tensors, prefix, t):
        dtype = T.get_default_dtype()
        self.state = AdamState(t=t)
        for key, value in tensors.items():
            if key.startswith(prefix + ".m."):
                self.state.m[key[len(prefix) + 3:]] = value.astype(dtype)
            elif key.startswith(prefix + ".v."):
                self.state.v[key[len(prefix) + 3:]] = value.astype(dtype)


# -- data -------------------------------------------------------------------

@dataclass
class Utterance:
    name: str
    samples: np.ndarray
    mel: np.ndarray  # normalised, [frames, n_mels]


class Dataset:
    """24 kHz clips with aligned, globally normalised log-mel features."""

    def __init__(self, utterances, stats):
        if not utterances:
            raise FormatError("dataset is empty")
        self.utterances = utterances
        self.stats = stats

    @classmethod
    def from_dir(cls, data_dir, stats=None):
        """Load ``*.wav``; a sibling ``<stem>.uvf`` is used as precomputed features."""
        paths = sorted(Path(data_dir).glob("*.wav"))
        if not paths:
            raise FormatError(f"{data_dir}: no .wav files")
        audios, mels = [], []
        for p in paths:
            audio = dsp.load_wav(p)
            feat = p.with_suffix(".uvf")
            if feat.exists():
                mel = dsp.load_features(feat, normalized=True)
                if stats is None:
                    raise FormatError(f"{feat}: precomputed features need the matching stats file")
            else:
                mel = dsp.log_mel(audio)
            expected = len(audio) // dsp.HOP_LENGTH + 1
            if mel.n_frames != expected:
                raise AlignmentError(f"{p.name}: {mel.n_frames} feature frames, waveform implies {expected}")
            audios.append(audio)
            mels.append(mel)
        if stats is None:
            stats = dsp.compute_norm_stats(mels)
        utts = []
        for p, audio, mel in zip(paths, audios, mels):
            if not mel.normalized:
                mel = dsp.normalize(mel, stats)
            utts.append(Utterance(p.stem, audio.samples, mel.data))
        return cls(utts, stats)

    def sample_batch(self, rng, batch_size, segment_frames):
        """Random aligned segments: waveform ``[B, S*256]`` and condition ``[B, n_mels, S]``."""
        hop = dsp.HOP_LENGTH
        xs, cs = [], []
        for _ in range(batch_size):
            utt = self.utterances[rng.integers(len(self.utterances))]
            usable = len(utt.samples) // hop
            if usable < segment_frames:
                raise AlignmentError(f"{utt.name}: {usable} frames, need at least {segment_frames}")
            start = int(rng.integers(0, usable - segment_frames + 1))
            xs.append(utt.samples[start * hop:(start + segment_frames) * hop])
            cs.append(utt.mel[start:start + segment_frames].T)
        return np.stack(xs), np.stack(cs)


# -- training ---------------------------------------------------------------

def train_step(gen, disc, opt_g, opt_d, x, c, z, adversarial, lam, stft_sets):
    """One warmup (auxiliary-only) or adversarial (D then G) update; returns a LossBreakdown."""
    x = T.Tensor(x)
    gen.zero_grad()
    x_hat = gen(z, c)
    specs_fake = multi_resolution_magnitudes(x_hat, stft_sets)
    with T.no_grad():
        specs_real = multi_resolution_magnitudes(x, stft_sets)
    aux = aux_loss_from_specs(specs_real, specs_fake)

    if not adversarial:
        loss = aux.total * lam
        loss.backward()
        opt_g.step()
        return LossBreakdown(
            l_sc=[v.item() for v in aux.sc], l_mag=[v.item() for v in aux.mag],
            l_aux=aux.total.item(), l_g=loss.item(), lam=lam,
        )

    bsz = x.shape[0]
    disc.zero_grad()
    both = T.Tensor(np.concatenate([x.data, x_hat.data]))
    both_specs = [T.Tensor(np.concatenate([r.data, f.data])) for r, f in zip(specs_real, specs_fake)]
    scores = disc(both, specs=both_specs)
    l_d = discriminator_loss([s.map[:bsz] for s in scores], [s.map[bsz:] for s in scores])
    l_d.backward()
    opt_d.step()

    disc.requires_grad_(False)
    try:
        scores_fake = disc(x_hat, specs=specs_fake)
        l_g, parts = generator_loss(scores_fake, lam=lam, aux=aux)
        l_g.backward()
    finally:
        disc.requires_grad_(True)
    opt_g.step()
    disc.zero_grad()
    parts.l_d = l_d.item()
    return parts


@dataclass
class TrainResult:
    history: list
    checkpoints: list
    generator: Generator
    discriminator: Discriminator
    stats: dsp.NormStats


def _csv_header(n_res):
    return (["step", "l_aux"] + [f"l_sc_{i}" for i in range(n_res)]
            + [f"l_mag_{i}" for i in range(n_res)] + ["l_adv_g", "l_g", "l_d"])


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _csv_row(step, parts):
    return ([str(step), _fmt(parts.l_aux)] + [_fmt(v) for v in parts.l_sc]
            + [_fmt(v) for v in parts.l_mag] + [_fmt(parts.l_adv_g), _fmt(parts.l_g), _fmt(parts.l_d)])


def make_checkpoint(step, cfg, gen, disc=None, stats=None, opt_g=None, opt_d=None):
    tensors = {f"generator.{k}": v for k, v in gen.state_dict().items()}
    meta = {
        "train_config": cfg.to_dict() if cfg is not None else None,
        "generator_config": gen.cfg.to_dict(),
        "generator_params": gen.num_parameters(),
    }
    if disc is not None:
        tensors.update({f"discriminator.{k}": v for k, v in disc.state_dict().items()})
        meta["discriminator_config"] = disc.cfg.to_dict()
        meta["discriminator_params"] = disc.num_parameters()
    if stats is not None:
        tensors["norm.mean"] = stats.mean
        tensors["norm.std"] = stats.std
    optimizer = {}
    if opt_g is not None:
        optimizer.update(opt_g.state_tensors("adam_g"))
        meta["adam_g_t"] = opt_g.state.t
    if opt_d is not None:
        optimizer.update(opt_d.state_tensors("adam_d"))
        meta["adam_d_t"] = opt_d.state.t
    return Checkpoint(step, meta, tensors, optimizer)


def generator_from_checkpoint(ckpt):
    gcfg = dict(ckpt.meta["generator_config"])
    gen = Generator(GeneratorConfig(**gcfg), seed=0)
    gen.load_state_dict(ckpt.group("generator"))
    return gen


def discriminator_from_checkpoint(ckpt):
    dcfg = ckpt.meta.get("discriminator_config")
    if dcfg is None:
        return None
    disc = Discriminator(DiscriminatorConfig(**dcfg), seed=0)
    disc.load_state_dict(ckpt.group("discriminator"))
    return disc


def stats_from_checkpoint(ckpt):
    if "norm.mean" not in ckpt.tensors:
        return None
    return dsp.NormStats(ckpt.tensors["norm.mean"], ckpt.tensors["norm.std"])


def train(data_dir, cfg, out_dir, stats=None, dataset=None, eval_hook=None):
    """Train from scratch; writes ``losses.csv`` and ``ckpt_XXXXXXX.uvc`` files under ``out_dir``.

    Steps ``1..warmup_steps`` update the generator on the auxiliary loss only;
    later steps update the discriminators and then the generator.
    ``eval_hook(step, generator, stats)`` runs after each checkpoint.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if dataset is None:
        dataset = Dataset.from_dir(data_dir, stats)
    stats = dataset.stats

    root = np.random.default_rng(cfg.seed)
    g_rng, d_rng, data_rng = root.spawn(3)
    gen = Generator(cfg.generator_config(), rng=g_rng)
    disc = Discriminator(cfg.discriminator_config(), rng=d_rng)
    opt_g = Adam(gen, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    opt_d = Adam(disc, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    stft_sets = disc.cfg.stft_sets

    history, checkpoints = [], []
    csv_path = out_dir / "losses.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_csv_header(len(stft_sets)))
        for step in range(1, cfg.total_steps + 1):
            x, c = dataset.sample_batch(data_rng, cfg.batch_size, cfg.segment_frames)
            z = sample_noise(cfg.segment_frames, batch=cfg.batch_size, rng=data_rng)
            c = T.Tensor(c.astype(T.get_default_dtype()))
            parts = train_step(gen, disc, opt_g, opt_d, x, c, z, step > cfg.warmup_steps,
                               cfg.lambda_aux, stft_sets)
            for p in gen.parameters() + disc.parameters():
                if not np.all(np.isfinite(p.data)):
                    raise NumericError(f"non-finite parameter after step {step}")
            history.append({"step": step, **asdict(parts)})
            if step % cfg.log_interval == 0 or step == cfg.total_steps:
                writer.writerow(_csv_row(step, parts))
                fh.flush()
                log.info("step %d l_aux=%.4f l_g=%.4f l_d=%s", step, parts.l_aux, parts.l_g, _fmt(parts.l_d))
            if step % cfg.checkpoint_interval == 0 or step == cfg.total_steps:
                path = out_dir / f"ckpt_{step:07d}.uvc"
                save_checkpoint(path, make_checkpoint(step, cfg, gen, disc, stats, opt_g, opt_d))
                checkpoints.append(path)
                if eval_hook is not None:
                    eval_hook(step, gen, stats)
    return TrainResult(history, checkpoints, gen, disc, stats)
