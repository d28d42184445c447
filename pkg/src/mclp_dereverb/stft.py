"""Multichannel STFT analysis and weighted overlap-add synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ENVELOPE_FLOOR = 0.1


@dataclass(frozen=True)
class StftConfig:
    block_size: int = 512
    hop: int = 128
    window: str = "hann"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.hop <= 0 or self.hop >= self.block_size:
            raise ValueError("hop must satisfy 0 < hop < block_size")
        if self.block_size % self.hop:
            raise ValueError("block_size must be divisible by hop")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.block_size // 2 + 1

    def analysis_window(self) -> np.ndarray:
        # periodic Hann: its square sums to a constant at 75% overlap
        n = np.arange(self.block_size)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.block_size)

    def n_frames(self, n_samples: int) -> int:
        return int(np.ceil((n_samples - self.block_size) / self.hop)) + 1


@dataclass
class MultichannelSpectrogram:
    """Complex STFT coefficients laid out as ``data[frame, bin, channel]``."""

    data: np.ndarray
    n_samples: int | None = None

    @property
    def frame_count(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    @property
    def channel_count(self) -> int:
        return self.data.shape[2]


def _as_channels(signal) -> np.ndarray:
    if isinstance(signal, np.ndarray):
        x = np.asarray(signal, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ValueError("signal must be 1-D or (channels, samples)")
        return x
    channels = [np.asarray(c, dtype=np.float64) for c in signal]
    if not channels:
        raise ValueError("empty input")
    if len({len(c) for c in channels}) != 1:
        raise ValueError("all channels must have the same length")
    return np.stack(channels)


def analyze(signal, cfg: StftConfig = StftConfig()) -> MultichannelSpectrogram:
    """Forward STFT of a (channels, samples) array.

    Frame ``n`` covers samples ``[n*hop, n*hop + block_size)``; a trailing
    partial frame is zero padded. Only the nonnegative-frequency bins are kept.
    """
    x = _as_channels(signal)
    n_ch, n_samples = x.shape
    if n_ch == 0 or n_samples == 0:
        raise ValueError("empty input")
    if n_samples < cfg.block_size:
        raise ValueError(
            f"signal length {n_samples} is shorter than block_size {cfg.block_size}"
        )
    n_frames = cfg.n_frames(n_samples)
    padded_len = (n_frames - 1) * cfg.hop + cfg.block_size
    if padded_len > n_samples:
        x = np.pad(x, ((0, 0), (0, padded_len - n_samples)))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.block_size, axis=1)
    frames = frames[:, :: cfg.hop, :] * cfg.analysis_window()
    spec = np.fft.rfft(frames, axis=-1)
    return MultichannelSpectrogram(np.ascontiguousarray(spec.transpose(1, 2, 0)), n_samples)


def synthesize(
    spec: MultichannelSpectrogram | np.ndarray,
    cfg: StftConfig = StftConfig(),
    length: int | None = None,
) -> np.ndarray:
    """Inverse STFT by windowed overlap-add, normalized by the squared-window envelope.

    Accepts a spectrogram ``(frames, bins, channels)`` or a single-channel
    array ``(frames, bins)``; returns ``(channels, samples)`` or ``(samples,)``
    respectively.
    """
    if isinstance(spec, MultichannelSpectrogram):
        data = spec.data
        if length is None:
            length = spec.n_samples
    else:
        data = np.asarray(spec)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[:, :, None]
    n_frames, n_bins, n_ch = data.shape
    if n_bins != cfg.n_bins:
        raise ValueError(f"spectrogram has {n_bins} bins, block_size implies {cfg.n_bins}")

    win = cfg.analysis_window()
    frames = np.fft.irfft(data.transpose(2, 0, 1), n=cfg.block_size, axis=-1) * win
    out_len = (n_frames - 1) * cfg.hop + cfg.block_size
    out = np.zeros((n_ch, out_len))
    envelope = np.zeros(out_len)
    for n in range(n_frames):
        sl = slice(n * cfg.hop, n * cfg.hop + cfg.block_size)
        out[:, sl] += frames[:, n, :]
        envelope[sl] += win**2
    # floor keeps modified spectrograms from blowing up at the signal edges;
    # every interior sample sees the full envelope
    out /= np.maximum(envelope, ENVELOPE_FLOOR * envelope.max())
    if length is not None:
        out = out[:, :length] if length <= out_len else np.pad(out, ((0, 0), (0, length - out_len)))
    return out[0] if squeeze else out
