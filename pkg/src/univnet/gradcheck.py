"""Finite-difference verification of every differentiable op and the composed losses.

All checks run in float64. The error measure for one tensor is
``max|analytic - numeric| / max(max|numeric|, 1e-8)`` over at most 64 sampled
entries; ops must stay below 1e-6 and composed losses below 1e-4.
"""

from dataclasses import dataclass

import numpy as np

from univnet import dsp
from univnet import tensor as T
from univnet.tensor import Tensor

OP_TOLERANCE = 1e-6
COMPOSED_TOLERANCE = 1e-4
MAX_ENTRIES = 64


@dataclass
class GradCheckResult:
    name: str
    rel_error: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.rel_error) and self.rel_error < self.tolerance)


def _entries(size, rng, max_entries):
    if size <= max_entries:
        return np.arange(size)
    return np.sort(rng.choice(size, max_entries, replace=False))


MIN_EPS = 1e-8


def _central(fn, flat, i, eps, f0):
    orig = flat[i]
    flat[i] = orig + eps
    plus = fn().item()
    flat[i] = orig - eps
    minus = fn().item()
    flat[i] = orig
    central = (plus - minus) / (2 * eps)
    # one-sided slopes disagree when a LeakyReLU/abs kink lies inside [x - eps, x + eps]
    kinked = abs((plus - f0) - (f0 - minus)) / eps > 1e-3 * abs(central) + 1e-7
    return central, kinked


def numerical_gradient(fn, t, indices, eps=1e-6):
    """Central differences of scalar ``fn()`` w.r.t. flat ``indices`` of ``t.data``.

    An entry whose step straddles a kink is re-estimated with a 10x smaller step,
    down to ``MIN_EPS``.
    """
    flat = t.data.reshape(-1)
    out = np.empty(len(indices))
    with T.no_grad():
        f0 = fn().item()
        for j, i in enumerate(indices):
            h = eps
            out[j], kinked = _central(fn, flat, i, h, f0)
            while kinked and h / 10 >= MIN_EPS:
                h /= 10
                out[j], kinked = _central(fn, flat, i, h, f0)
    return out


def check_gradients(name, fn, inputs, tolerance, rng, eps=1e-6, max_entries=MAX_ENTRIES):
    """Compare ``backward()`` against central differences for each tensor in ``inputs``."""
    for t in inputs:
        t.grad = None
    loss = fn()
    loss.backward()
    worst = 0.0
    for t in inputs:
        idx = _entries(t.size, rng, max_entries)
        analytic = np.zeros(t.size) if t.grad is None else t.grad.reshape(-1)[idx]
        numeric = numerical_gradient(fn, t, idx, eps)
        err = np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-8)
        worst = max(worst, float(err))
    return GradCheckResult(name, worst, tolerance)


def _leaf(rng, *shape, positive=False, low=None):
    data = rng.uniform(0.5, 2.0, shape) if positive else rng.standard_normal(shape)
    if low is not None:
        data = np.abs(data) + low
    return Tensor(data.astype(np.float64), requires_grad=True)


def _weighted(out, rng):
    r = Tensor(rng.standard_normal(out.shape))
    return T.tsum(out * r)


def op_cases(rng):
    """``(name, fn, inputs)`` triples, one per differentiable op (every tensor <= 64 elements)."""
    cases = []

    def add_case(name, build, inputs):
        weights = {}

        def fn():
            out = build()
            if name not in weights:
                weights[name] = Tensor(rng.standard_normal(out.shape))
            return T.tsum(out * weights[name])

        cases.append((name, fn, inputs))

    x, w, b = _leaf(rng, 1, 3, 10), _leaf(rng, 2, 3, 3), _leaf(rng, 2)
    add_case("conv1d", lambda: T.conv1d(x, w, b, stride=2, dilation=2, padding=(2, 1)), [x, w, b])
    x2, w2 = _leaf(rng, 1, 2, 12), _leaf(rng, 3, 2, 3)
    add_case("conv1d_same_dilated", lambda: T.conv1d(x2, w2, None, dilation=3, padding="same"), [x2, w2])
    xt, wt, bt = _leaf(rng, 1, 2, 5), _leaf(rng, 2, 3, 4), _leaf(rng, 3)
    add_case("conv_transpose1d", lambda: T.conv_transpose1d(xt, wt, bt, stride=2, padding=1), [xt, wt, bt])
    xc, wc, bc = _leaf(rng, 1, 2, 5, 6), _leaf(rng, 2, 2, 3, 3), _leaf(rng, 2)
    add_case("conv2d", lambda: T.conv2d(xc, wc, bc, stride=(1, 2), padding=(1, 1)), [xc, wc, bc])
    xl, kl, bl = _leaf(rng, 1, 2, 8), _leaf(rng, 1, 2, 4, 2, 3), _leaf(rng, 1, 2, 4)
    add_case("location_variable_conv", lambda: T.location_variable_conv(xl, kl, bl, dilation=2, hop=4),
             [xl, kl, bl])
    v, g = _leaf(rng, 3, 2, 4), _leaf(rng, 3)
    add_case("weight_norm", lambda: T.weight_norm(v, g, 0), [v, g])
    vt, gt = _leaf(rng, 2, 3, 4), _leaf(rng, 3)
    add_case("weight_norm_axis1", lambda: T.weight_norm(vt, gt, 1), [vt, gt])

    a, c = _leaf(rng, 4, 6), _leaf(rng, 1, 6)
    add_case("add_broadcast", lambda: a + c, [a, c])
    add_case("sub_broadcast", lambda: a - c, [a, c])
    add_case("mul_broadcast", lambda: a * c, [a, c])
    p = _leaf(rng, 4, 6, positive=True)
    add_case("div", lambda: a / p, [a, p])
    add_case("power", lambda: p ** 1.5, [p])
    add_case("square", lambda: T.square(a), [a])
    add_case("log", lambda: T.log(p), [p])
    add_case("exp", lambda: T.exp(a), [a])
    add_case("sqrt", lambda: T.sqrt(p), [p])
    add_case("abs", lambda: T.tabs(a), [a])
    add_case("tanh", lambda: T.tanh(a), [a])
    add_case("sigmoid", lambda: T.sigmoid(a), [a])
    add_case("leaky_relu", lambda: T.leaky_relu(a, 0.2), [a])
    add_case("clamp_min", lambda: T.clamp_min(a, 0.1), [a])
    add_case("sum_axis", lambda: T.tsum(a, axis=1), [a])
    add_case("mean", lambda: T.mean(a, axis=0, keepdims=True), [a])
    add_case("l1_norm", lambda: T.l1_norm(a), [a])
    add_case("frobenius_norm", lambda: T.frobenius_norm(a), [a])
    add_case("reshape_transpose", lambda: a.reshape(2, 12).transpose(1, 0), [a])
    add_case("getitem", lambda: a[1:3, ::2], [a])
    d = _leaf(rng, 4, 3)
    add_case("concat", lambda: T.concat([a, d], axis=1), [a, d])
    m1, m2 = _leaf(rng, 3, 4), _leaf(rng, 4, 5)
    add_case("matmul", lambda: T.matmul(m1, m2), [m1, m2])
    s = _leaf(rng, 2, 3, 5)
    add_case("repeat_frames", lambda: T.repeat_frames(s, 3), [s])
    add_case("pad_reflect", lambda: T.pad_last(s, 3, 2, "reflect"), [s])
    add_case("pad_edge", lambda: T.pad_last(s, 2, 3, "edge"), [s])
    add_case("pad_zeros", lambda: T.pad_last(s, 1, 2, "zeros"), [s])
    hh = _leaf(rng, 1, 4, 6)
    from univnet.generator import gau
    add_case("gau", lambda: gau(hh), [hh])
    sig = _leaf(rng, 1, 48)
    add_case("stft_frames_magnitude", lambda: T.stft_frames_magnitude(sig, 16, 4, dsp.hann(16)), [sig])
    sig2 = _leaf(rng, 1, 40)
    params = dsp.StftParams(16, 5, 10)
    add_case("stft_magnitude", lambda: dsp.stft_magnitude_tensor(sig2, params), [sig2])
    return cases


TOY_STFT_SETS = (dsp.StftParams(64, 16, 32), dsp.StftParams(128, 32, 64), dsp.StftParams(32, 8, 16))


def toy_models(rng):
    """Tiny generator and discriminator sharing the real architecture (float64)."""
    from univnet.discriminators import Discriminator, DiscriminatorConfig
    from univnet.generator import Generator, GeneratorConfig

    gcfg = GeneratorConfig(channels=2, kp_hidden=4, dilations=(1, 3), kp_res_blocks=1)
    dcfg = DiscriminatorConfig(stft_sets=TOY_STFT_SETS, periods=(2, 3), mrsd_channels=2,
                               mrsd_strided_layers=1, mpwd_channels=(2, 4), mpwd_final_channels=4)
    return Generator(gcfg, rng=rng), Discriminator(dcfg, rng=rng)


def composed_cases(rng, n_frames=2):
    """Generator objective (auxiliary + adversarial) and discriminator objective on toy models."""
    from univnet.discriminators import multi_resolution_magnitudes
    from univnet.losses import aux_loss_from_specs, discriminator_loss, generator_loss

    gen, disc = toy_models(rng)
    z = Tensor(rng.standard_normal((1, 64, n_frames)))
    c = Tensor(rng.standard_normal((1, gen.cfg.n_mels, n_frames)))
    x = Tensor(0.5 * np.sin(np.arange(n_frames * 256) * 0.07)[None] + 0.05 * rng.standard_normal((1, n_frames * 256)))
    sets = disc.cfg.stft_sets
    with T.no_grad():
        specs_real = multi_resolution_magnitudes(x, sets)

    def g_loss():
        x_hat = gen(z, c)
        specs_fake = multi_resolution_magnitudes(x_hat, sets)
        aux = aux_loss_from_specs(specs_real, specs_fake)
        return generator_loss(disc(x_hat, specs=specs_fake), aux=aux)[0]

    with T.no_grad():
        fake = gen(z, c)

    def d_loss():
        return discriminator_loss(disc(x, specs=specs_real), disc(fake))

    return [
        ("generator_loss", g_loss, gen.parameters(), disc),
        ("discriminator_loss", d_loss, disc.parameters(), None),
    ]


def run_gradcheck(seed=0, composed=True):
    """Run the whole suite; returns a list of :class:`GradCheckResult`."""
    results = []
    with T.default_dtype(np.float64):
        rng = np.random.default_rng(seed)
        for name, fn, inputs in op_cases(rng):
            results.append(check_gradients(name, fn, inputs, OP_TOLERANCE, rng))
        if composed:
            for name, fn, inputs, frozen in composed_cases(rng):
                if frozen is not None:
                    frozen.requires_grad_(False)
                try:
                    results.append(check_gradients(name, fn, inputs, COMPOSED_TOLERANCE, rng))
                finally:
                    if frozen is not None:
                        frozen.requires_grad_(True)
    return results
