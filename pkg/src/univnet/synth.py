"""Deterministic speech-like test signals (no corpus ships with the package)."""

import numpy as np

from univnet import dsp


def synthetic_voice(seconds=1.0, seed=0, sample_rate=dsp.SAMPLE_RATE):
    """Voiced harmonics with a gliding pitch and formant envelope, syllable gating and fricative noise.

    Peak amplitude is 0.5.
    """
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = 120.0 + 40.0 * np.sin(2 * np.pi * 1.3 * t + rng.uniform(0, np.pi)) + 15.0 * t
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    formants = ((700.0, 130.0), (1200.0, 180.0), (2600.0, 250.0))
    voiced = np.zeros(n)
    for h in range(1, 60):
        freq = h * f0
        gain = sum(np.exp(-0.5 * ((freq - fc) / bw) ** 2) for fc, bw in formants) + 0.05 / h
        voiced += np.where(freq < sample_rate / 2, gain * np.sin(h * phase), 0.0)
    syllables = 0.5 * (1 - np.cos(2 * np.pi * 4.0 * t)) ** 1.5
    noise = rng.standard_normal(n)
    # crude high-pass for fricatives
    fricative = np.diff(noise, prepend=0.0) * (1 - syllables) * 0.3
    signal = voiced * syllables + fricative
    signal *= 0.5 / np.max(np.abs(signal))
    return dsp.AudioBuffer(signal.astype(np.float32), sample_rate)
