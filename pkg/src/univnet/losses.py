"""Multi-resolution STFT auxiliary loss and least-squares GAN objectives."""

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from univnet import dsp
from univnet import tensor as T
from univnet.discriminators import multi_resolution_magnitudes
from univnet.errors import DimensionError

LAMBDA_AUX = 2.5
MAG_FLOOR = 1e-7
NORM_FLOOR = 1e-8


class DegenerateReferenceWarning(RuntimeWarning):
    """Spectral convergence against an all-zero reference."""


@dataclass
class LossBreakdown:
    l_sc: list = field(default_factory=list)
    l_mag: list = field(default_factory=list)
    l_aux: float = float("nan")
    l_adv_g: float = float("nan")
    l_g: float = float("nan")
    l_d: float = float("nan")
    lam: float = LAMBDA_AUX


class AuxLoss(NamedTuple):
    total: T.Tensor
    sc: list
    mag: list


def _mag(s):
    if isinstance(s, dsp.Spectrogram):
        s = s.mag
    s = T.as_tensor(s)
    return s.reshape(1, *s.shape) if s.ndim == 2 else s


def _same_shape(s, s_hat):
    if s.shape != s_hat.shape:
        raise DimensionError(f"spectrogram shapes differ: {s.shape} vs {s_hat.shape}")


def spectral_convergence(s, s_hat):
    """``||s - s_hat||_F / ||s||_F``, averaged over the batch."""
    s, s_hat = _mag(s), _mag(s_hat)
    _same_shape(s, s_hat)
    ref = np.sqrt((s.data.astype(np.float64) ** 2).sum(axis=(-2, -1)))
    if np.any(ref < NORM_FLOOR):
        warnings.warn("spectral convergence with an all-zero reference", DegenerateReferenceWarning)
    num = T.frobenius_norm(s - s_hat, axis=(-2, -1))
    den = T.clamp_min(T.frobenius_norm(s, axis=(-2, -1)), NORM_FLOOR)
    return T.mean(num / den)


def log_stft_magnitude(s, s_hat):
    """Mean absolute difference of log magnitudes (L1 norm over ``S`` elements, divided by ``S``)."""
    s, s_hat = _mag(s), _mag(s_hat)
    _same_shape(s, s_hat)
    diff = T.log(T.clamp_min(s, MAG_FLOOR)) - T.log(T.clamp_min(s_hat, MAG_FLOOR))
    return T.mean(T.tabs(diff))


def aux_loss_from_specs(specs, specs_hat):
    """Average of spectral-convergence plus log-magnitude loss over resolutions."""
    if len(specs) != len(specs_hat) or not specs:
        raise DimensionError("need matching, non-empty spectrogram lists")
    sc = [spectral_convergence(s, sh) for s, sh in zip(specs, specs_hat)]
    mag = [log_stft_magnitude(s, sh) for s, sh in zip(specs, specs_hat)]
    total = sc[0] + mag[0]
    for a, b in zip(sc[1:], mag[1:]):
        total = total + a + b
    return AuxLoss(total * (1.0 / len(sc)), sc, mag)


def _waveform(x):
    if isinstance(x, dsp.AudioBuffer):
        x = x.samples
    x = T.as_tensor(x)
    return x.reshape(1, x.shape[0]) if x.ndim == 1 else x


def aux_loss(x, x_hat, stft_sets=dsp.RESOLUTION_STFTS):
    """Multi-resolution STFT loss between target ``x`` and generated ``x_hat``."""
    x, x_hat = _waveform(x), _waveform(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"waveform lengths differ: {x.shape} vs {x_hat.shape}")
    with T.no_grad():
        specs = multi_resolution_magnitudes(x.detach(), stft_sets)
    return aux_loss_from_specs(specs, multi_resolution_magnitudes(x_hat, stft_sets))


def _score_map(s):
    return T.as_tensor(s.map if hasattr(s, "map") else s)


def adversarial_generator_loss(scores_fake):
    """``(1/K) sum_k mean((D_k(fake) - 1)^2)``."""
    if not scores_fake:
        raise ValueError("no sub-discriminator scores")
    terms = [T.mean(T.square(_score_map(s) - 1.0)) for s in scores_fake]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def generator_loss(scores_fake, x=None, x_hat=None, lam=LAMBDA_AUX, aux=None):
    """``lam * L_aux + adversarial term``; pass either ``x``/``x_hat`` or a precomputed ``aux``.

    Returns the scalar loss tensor and a :class:`LossBreakdown`.
    """
    if aux is None:
        if x is None or x_hat is None:
            raise ValueError("need x and x_hat, or aux")
        aux = aux_loss(x, x_hat)
    adv = adversarial_generator_loss(scores_fake)
    total = aux.total * lam + adv
    parts = LossBreakdown(
        l_sc=[v.item() for v in aux.sc],
        l_mag=[v.item() for v in aux.mag],
        l_aux=aux.total.item(),
        l_adv_g=adv.item(),
        l_g=total.item(),
        lam=lam,
    )
    return total, parts


def discriminator_loss(scores_real, scores_fake):
    """``(1/K) sum_k [mean((D_k(real) - 1)^2) + mean(D_k(fake)^2)]``."""
    if len(scores_real) != len(scores_fake):
        raise DimensionError(f"{len(scores_real)} real vs {len(scores_fake)} fake scores")
    if not scores_real:
        raise ValueError("no sub-discriminator scores")
    total = None
    for r, f in zip(scores_real, scores_fake):
        term = T.mean(T.square(_score_map(r) - 1.0)) + T.mean(T.square(_score_map(f)))
        total = term if total is None else total + term
    return total * (1.0 / len(scores_real))
