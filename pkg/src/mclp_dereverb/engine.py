"""Streaming dereverberation: STFT frames in, reference-channel frames out."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import BatchedRLS, EngineConfig, FrameHistory
from .detector import (
    DetectorConfig,
    DetectorState,
    TraceRecord,
    detect_change,
    next_lambda,
    relative_change,
    total_weighted_change,
)
from .stft import StftConfig, analyze, synthesize

log = logging.getLogger(__name__)


class NumericFailure(FloatingPointError):
    """Raised when the adaptive state stops being finite."""


class Dereverberator:
    """Frame-by-frame RLS multichannel linear prediction with an adaptive forgetting factor.

    With ``fixed_lambda`` set, the detector still runs (its trace is recorded)
    but the forgetting factor never changes.
    """

    def __init__(
        self,
        cfg: EngineConfig = EngineConfig(),
        det_cfg: DetectorConfig = DetectorConfig(),
        n_bins: int = StftConfig().n_bins,
        fixed_lambda: float | None = None,
        keep_trace: bool = True,
    ):
        if fixed_lambda is not None and not 0.0 < fixed_lambda <= 1.0:
            raise ValueError("fixed_lambda must lie in (0, 1]")
        self.cfg = cfg
        self.det_cfg = det_cfg
        self.n_bins = n_bins
        self.fixed_lambda = fixed_lambda
        self.rls = BatchedRLS(cfg, n_bins)
        self.history = FrameHistory.for_config(cfg, n_bins)
        self.detector = DetectorState(det_cfg)
        self.n = 0
        self.keep_trace = keep_trace
        self.trace: list[TraceRecord] = []

    @property
    def lam(self) -> float:
        if self.fixed_lambda is not None:
            return self.fixed_lambda
        return self.detector.lambda_current

    def process_frame(self, frame: np.ndarray) -> np.ndarray:
        """Consume multichannel frame ``n`` (``(bins, M)``) and return the ``(bins,)`` output."""
        frame = np.asarray(frame, dtype=np.complex128)
        if frame.shape != (self.n_bins, self.cfg.M):
            raise ValueError(f"frame shape {frame.shape} != {(self.n_bins, self.cfg.M)}")
        n = self.n
        self.history.push(frame)
        xt = self.history.stacked(n, self.cfg.D, self.cfg.L_w)
        x_ref = frame[:, self.cfg.ref]

        lam = self.lam
        w_old = self.rls.W.copy()
        d = self.rls.step(xt, x_ref, lam)
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(self.rls.W))):
            raise NumericFailure(f"non-finite adaptive state at frame {n}")

        deltas = relative_change(self.rls.W, w_old, self.det_cfg.denom_floor)
        rho = np.sqrt(self.rls.sigma2)
        total_weighted_change(self.detector, deltas, rho)
        detected = detect_change(self.detector)
        if detected:
            log.info("position change detected at frame %d", n)
        next_lambda(self.detector, detected)
        if self.keep_trace:
            self.trace.append(
                TraceRecord(
                    n,
                    self.detector.delta_T,
                    self.detector.delta_Tw,
                    lam,
                    self.detector.phase.value,
                    detected,
                )
            )
        self.n += 1
        return d

    def process(self, spec: np.ndarray) -> np.ndarray:
        """Run over a ``(frames, bins, M)`` spectrogram; returns ``(frames, bins)``."""
        out = np.empty(spec.shape[:2], dtype=np.complex128)
        for n in range(spec.shape[0]):
            out[n] = self.process_frame(spec[n])
        return out

    def detections(self) -> list[int]:
        return [r.n for r in self.trace if r.detected]


@dataclass
class DereverbResult:
    output: np.ndarray
    trace: list[TraceRecord]
    engine: Dereverberator

    def detection_times(self, stft_cfg: StftConfig = StftConfig()) -> list[float]:
        return [frame_time(n, stft_cfg) for n in self.engine.detections()]


def frame_time(n: int, stft_cfg: StftConfig = StftConfig()) -> float:
    """Time in seconds of the last sample covered by frame ``n``."""
    return (n * stft_cfg.hop + stft_cfg.block_size) / stft_cfg.sample_rate


def dereverberate(
    signal: np.ndarray,
    cfg: EngineConfig | None = None,
    det_cfg: DetectorConfig = DetectorConfig(),
    stft_cfg: StftConfig = StftConfig(),
    fixed_lambda: float | None = None,
) -> DereverbResult:
    """Dereverberate a ``(M, samples)`` signal; output is the reference channel, same length."""
    signal = np.atleast_2d(np.asarray(signal, dtype=np.float64))
    if cfg is None:
        cfg = EngineConfig(M=signal.shape[0])
    if signal.shape[0] != cfg.M:
        raise ValueError(f"signal has {signal.shape[0]} channels, config expects {cfg.M}")
    spec = analyze(signal, stft_cfg)
    engine = Dereverberator(cfg, det_cfg, stft_cfg.n_bins, fixed_lambda)
    out_spec = engine.process(spec.data)
    out = synthesize(out_spec, stft_cfg, length=signal.shape[1])
    return DereverbResult(out, engine.trace, engine)
