"""Objective scores for dereverberated speech and room impulse responses."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .stft import StftConfig, analyze

SRR_MIN_DB = -30.0
SRR_MAX_DB = 40.0
LSD_EPS = 1e-10


@dataclass
class ScoreSeries:
    """Per-window scores; ``values`` is NaN for windows that were skipped."""

    start_times: np.ndarray
    values: np.ndarray
    window_length: float = 2.0
    overlap: float = 0.75

    def at(self, t: float) -> float:
        i = int(np.argmin(np.abs(self.start_times - t)))
        return float(self.values[i])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time_s,score\n")
            for t, v in zip(self.start_times, self.values):
                fh.write(f"{t:.6f},{'' if np.isnan(v) else f'{v:.6f}'}\n")


def window_grid(n_samples: int, sample_rate: int, window_length: float = 2.0, overlap: float = 0.75):
    """Start indices and length (samples) of the scoring windows."""
    win = int(round(window_length * sample_rate))
    hop = int(round(window_length * (1.0 - overlap) * sample_rate))
    if hop <= 0:
        raise ValueError("overlap must be < 1")
    if n_samples < win:
        return np.zeros(0, dtype=int), win
    count = (n_samples - win) // hop + 1
    return np.arange(count) * hop, win


def _check_aligned(reference, test):
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ValueError(f"length mismatch: {reference.shape} vs {test.shape}")
    return reference, test


def segmental_srr(
    reference,
    test,
    sample_rate: int = 16000,
    window_length: float = 2.0,
    overlap: float = 0.75,
) -> ScoreSeries:
    """Windowed ratio of reference energy to residual energy, in dB, clamped to [-30, 40]."""
    reference, test = _check_aligned(reference, test)
    starts, win = window_grid(len(reference), sample_rate, window_length, overlap)
    values = np.full(len(starts), np.nan)
    for i, s in enumerate(starts):
        r = reference[s : s + win]
        e_ref = np.sum(r**2)
        if e_ref == 0.0:
            continue
        e_res = np.sum((test[s : s + win] - r) ** 2)
        if e_res == 0.0:
            values[i] = SRR_MAX_DB
            continue
        values[i] = np.clip(10.0 * np.log10(e_ref / e_res), SRR_MIN_DB, SRR_MAX_DB)
    return ScoreSeries(starts / sample_rate, values, window_length, overlap)


def log_spectral_distance(
    reference,
    test,
    stft_cfg: StftConfig = StftConfig(),
    window_length: float = 2.0,
    overlap: float = 0.75,
) -> ScoreSeries:
    """RMS log-magnitude difference (dB) over the STFT frames falling in each window."""
    reference, test = _check_aligned(reference, test)
    fs = stft_cfg.sample_rate
    R = np.abs(analyze(reference, stft_cfg).data[:, :, 0])
    T = np.abs(analyze(test, stft_cfg).data[:, :, 0])
    diff2 = (20.0 * (np.log10(R + LSD_EPS) - np.log10(T + LSD_EPS))) ** 2
    frame_start = np.arange(R.shape[0]) * stft_cfg.hop
    starts, win = window_grid(len(reference), fs, window_length, overlap)
    values = np.full(len(starts), np.nan)
    for i, s in enumerate(starts):
        sel = (frame_start >= s) & (frame_start + stft_cfg.block_size <= s + win)
        if np.any(sel):
            values[i] = np.sqrt(np.mean(diff2[sel]))
    return ScoreSeries(starts / fs, values, window_length, overlap)


def energy_decay_curve(rir) -> np.ndarray:
    """Schroeder backward integral in dB, normalized to 0 dB at t = 0."""
    e = np.cumsum(np.asarray(rir, dtype=np.float64)[::-1] ** 2)[::-1]
    if e[0] <= 0:
        raise ValueError("impulse response is all zero")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(e / e[0])


def schroeder_t60(rir, sample_rate: int = 16000, upper_db: float = -5.0, lower_db: float = -35.0) -> float:
    """Reverberation time from a line fit of the energy decay curve between ``upper_db`` and ``lower_db``.

    If the curve does not reach ``lower_db`` within the first 90% of the
    response, the fit stops at the lowest level reached there and a warning
    flags the reduced range.
    """
    edc = energy_decay_curve(rir)
    # the tail of a finite response always plunges; only the first 90% is trusted
    usable = edc[: max(int(0.9 * len(edc)), 2)]
    floor = usable[np.isfinite(usable)].min()
    if floor > lower_db:
        warnings.warn(
            f"decay range only reaches {floor:.1f} dB; T60 fit uses a reduced range",
            RuntimeWarning,
            stacklevel=2,
        )
        lower_db = floor
    i0 = int(np.argmax(edc <= upper_db))
    i1 = int(np.argmax(edc <= lower_db))
    if i1 <= i0 + 1:
        raise ValueError("decay curve too short to fit")
    t = np.arange(i0, i1 + 1) / sample_rate
    slope, _ = np.polyfit(t, edc[i0 : i1 + 1], 1)
    if slope >= 0:
        raise ValueError("energy decay curve is not decaying")
    return -60.0 / slope


def weight_deviation(w_hat, w_ref) -> float:
    w_hat = np.asarray(w_hat)
    w_ref = np.asarray(w_ref)
    if w_hat.shape != w_ref.shape:
        raise ValueError(f"length mismatch: {w_hat.shape} vs {w_ref.shape}")
    return float(np.sum(np.abs(w_ref - w_hat) ** 2))
