"""Seeded speech-like test signals.

No speech corpus ships with the package, so experiments run on a synthetic
talker: phrases of syllables separated by pauses, each syllable a voiced
vowel (jittered glottal pulse train through three gliding formant
resonators) optionally preceded by a fricative burst, under a smooth
syllabic envelope.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

# (F1, F2, F3) in Hz for a handful of vowels
VOWELS = np.array(
    [
        (730, 1090, 2440),
        (270, 2290, 3010),
        (530, 1840, 2480),
        (570, 840, 2410),
        (300, 870, 2240),
        (660, 1720, 2410),
        (490, 1350, 1690),
        (440, 1020, 2240),
    ],
    dtype=float,
)


def _resonator(freq: float, bw: float, fs: int):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = [1.0, -2 * r * np.cos(theta), r * r]
    b = [1.0 - r]
    return b, a


JITTER = 0.01
SHIMMER = 0.08
ASPIRATION = 0.1
FORMANT_BLOCK = 80


def _glottal_train(n: int, f0: np.ndarray, fs: int, rng) -> np.ndarray:
    phase = np.cumsum(f0 / fs)
    pulses = np.zeros(n)
    idx = np.nonzero(np.diff(np.floor(phase)) > 0)[0] + 1
    # cycle-to-cycle period jitter and amplitude shimmer
    period = fs / f0[idx] if len(idx) else np.zeros(0)
    idx = np.clip(idx + np.round(JITTER * period * rng.standard_normal(len(idx))).astype(int), 0, n - 1)
    pulses[idx] = 1.0 + SHIMMER * rng.standard_normal(len(idx))
    pulse = np.hanning(int(fs * 0.004)) ** 2
    src = np.convolve(pulses, pulse)[:n]
    src = np.diff(src, prepend=0.0)
    return src + ASPIRATION * rng.standard_normal(n) * np.std(src)


def _gliding_resonator(x: np.ndarray, freq: np.ndarray, bw: float, fs: int) -> np.ndarray:
    """Two-pole resonator whose centre frequency follows ``freq`` block by block."""
    out = np.empty_like(x)
    zi = np.zeros(2)
    for s in range(0, len(x), FORMANT_BLOCK):
        e = min(s + FORMANT_BLOCK, len(x))
        b, a = _resonator(float(freq[s]), bw, fs)
        # keep the filter state in direct form II transposed across blocks
        out[s:e], zi = lfilter(b, a, x[s:e], zi=zi)
    return out


def _envelope(n: int, fs: int, attack: float = 0.02, release: float = 0.04) -> np.ndarray:
    env = np.ones(n)
    na = min(int(attack * fs), n // 2)
    nr = min(int(release * fs), n // 2)
    if na:
        env[:na] = 0.5 - 0.5 * np.cos(np.pi * np.arange(na) / na)
    if nr:
        env[n - nr :] = 0.5 + 0.5 * np.cos(np.pi * np.arange(nr) / nr)
    return env


def _syllable(fs: int, rng) -> np.ndarray:
    dur = rng.uniform(0.12, 0.32)
    n = int(dur * fs)
    f0_start = rng.uniform(95, 210)
    f0 = f0_start * np.exp(np.linspace(0, rng.uniform(-0.25, 0.15), n))
    src = _glottal_train(n, f0, fs, rng)
    # formants glide from one vowel target towards another (coarticulation)
    scale = rng.uniform(0.92, 1.12)
    start = VOWELS[rng.integers(len(VOWELS))] * scale
    end = VOWELS[rng.integers(len(VOWELS))] * scale
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.linspace(0, 1, n))
    tracks = start[:, None] + (end - start)[:, None] * ramp[None, :]
    voiced = np.zeros(n)
    for f, bw, g in zip(tracks, (80, 110, 160), (1.0, 0.6, 0.3)):
        voiced += g * _gliding_resonator(src, f, bw, fs)
    voiced *= _envelope(n, fs)
    voiced /= np.max(np.abs(voiced)) + 1e-12
    parts = []
    if rng.random() < 0.35:
        nf = int(rng.uniform(0.04, 0.1) * fs)
        lo = rng.uniform(2500, 4500)
        sos = butter(4, [lo, min(lo + 3000, 0.95 * fs / 2)], btype="band", fs=fs, output="sos")
        fric = sosfilt(sos, rng.standard_normal(nf)) * _envelope(nf, fs, 0.01, 0.01)
        fric *= rng.uniform(0.1, 0.3) / (np.max(np.abs(fric)) + 1e-12)
        parts.append(fric)
    parts.append(voiced * 10 ** (rng.uniform(-8, 0) / 20))
    return np.concatenate(parts)


def speech_like(duration: float, fs: int = 16000, seed: int | None = 0) -> np.ndarray:
    """Speech-like mono signal of ``duration`` seconds, peak-normalized to 1."""
    rng = np.random.default_rng(seed)
    total = int(round(duration * fs))
    out = np.zeros(total)
    pos = int(rng.uniform(0.05, 0.2) * fs)
    while pos < total:
        for _ in range(rng.integers(3, 9)):
            syl = _syllable(fs, rng)
            end = min(pos + len(syl), total)
            out[pos:end] += syl[: end - pos]
            pos = end + int(rng.uniform(0.02, 0.08) * fs)
            if pos >= total:
                break
        pos += int(rng.uniform(0.15, 0.6) * fs)
    # mild low-frequency room for the mic: remove DC drift
    sos = butter(2, 60, btype="high", fs=fs, output="sos")
    out = sosfilt(sos, out)
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out
