"""Reproducible speaker-switch experiments and the curve statistics used to judge them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics, roomsim, signals
from .engine import DereverbResult, dereverberate

PLATEAU_START = 4.0


@dataclass
class SwitchScene:
    scenario: roomsim.Scenario
    reverberant: np.ndarray  # (M, samples), peak-normalized
    reference: np.ndarray  # direct-plus-early at the reference mic, same gain


def switch_scene(T60: float, seed: int, duration: float = 20.0, switch_time: float = 10.0) -> SwitchScene:
    clean = signals.speech_like(duration, seed=seed)
    sc = roomsim.Scenario(room=roomsim.RoomSpec(T60=T60), switch_time=switch_time, clean=clean)
    ra, rb = sc.rirs("a"), sc.rirs("b")
    y = roomsim.synthesize_scene(sc, ra, rb)
    ref = roomsim.reference_signal(sc, ra, rb)
    g = 1.0 / np.max(np.abs(y))
    return SwitchScene(sc, y * g, ref * g)


@dataclass
class CurveRun:
    label: str
    fixed_lambda: float | None
    srr: metrics.ScoreSeries
    detection_times: list[float] = field(default_factory=list)


def run_curve(scene: SwitchScene, fixed_lambda: float | None, label: str | None = None) -> CurveRun:
    res: DereverbResult = dereverberate(scene.reverberant, fixed_lambda=fixed_lambda)
    srr = metrics.segmental_srr(scene.reference, res.output)
    label = label or ("adaptive" if fixed_lambda is None else f"fixed-{fixed_lambda:g}")
    return CurveRun(label, fixed_lambda, srr, res.detection_times())


def average_series(series: list[metrics.ScoreSeries]) -> metrics.ScoreSeries:
    vals = np.nanmean(np.stack([s.values for s in series]), axis=0)
    s0 = series[0]
    return metrics.ScoreSeries(s0.start_times, vals, s0.window_length, s0.overlap)


def plateau(series: metrics.ScoreSeries, start: float = PLATEAU_START, end: float = 10.0) -> float:
    """Mean score over windows lying entirely inside ``[start, end]``."""
    t = series.start_times
    sel = (t >= start) & (t + series.window_length <= end + 1e-9)
    if not np.any(sel):
        raise ValueError("no scoring window fits inside the plateau span")
    return float(np.nanmean(series.values[sel]))


def recovery_time(series: metrics.ScoreSeries, level: float, after: float = 10.0) -> float:
    """Start time of the first window beginning at or after ``after`` that scores ``>= level``.

    ``inf`` if the curve never gets there.
    """
    t = series.start_times
    hits = np.nonzero((t >= after - 1e-9) & (series.values >= level))[0]
    return float(t[hits[0]]) if len(hits) else float("inf")


@dataclass
class OrderingReport:
    T60: float
    plateaus: dict[str, float]
    recovery: dict[str, float]

    @property
    def recovery_gain(self) -> float:
        return self.recovery["fixed-0.998"] - self.recovery["adaptive"]

    @property
    def faster(self) -> bool:
        return self.recovery_gain >= 2.0

    @property
    def plateau_ok(self) -> bool:
        p = self.plateaus
        return abs(p["adaptive"] - p["fixed-0.998"]) <= 1.0 and p["adaptive"] > p["fixed-0.99"]


def ordering_report(T60: float, curves: dict[str, list[metrics.ScoreSeries]], switch_time: float = 10.0) -> OrderingReport:
    """Seed-average each run's curves, then reduce them to plateau level and recovery time."""
    avg = {k: average_series(v) for k, v in curves.items()}
    plateaus = {k: plateau(s, end=switch_time) for k, s in avg.items()}
    recovery = {k: recovery_time(s, plateaus[k] - 1.0, switch_time) for k, s in avg.items()}
    return OrderingReport(T60, plateaus, recovery)


def tracking_ordering(T60: float, seeds, switch_time: float = 10.0, duration: float = 20.0) -> OrderingReport:
    """Adaptive, 0.998 and 0.99 runs on the speaker-switch scene, averaged over ``seeds``."""
    curves: dict[str, list[metrics.ScoreSeries]] = {}
    for seed in seeds:
        scene = switch_scene(T60, seed, duration, switch_time)
        for lam in (None, 0.998, 0.99):
            run = run_curve(scene, lam)
            curves.setdefault(run.label, []).append(run.srr)
    return ordering_report(T60, curves, switch_time)


# ------------------------------------------------- weight-deviation trade-off


def delayed_matrix(x: np.ndarray, D: int, L_w: int) -> np.ndarray:
    """Stacked delayed observations of one bin for every frame; ``x`` is ``(frames, M)``.

    Row ``n`` equals what the streaming engine stacks at frame ``n``.
    """
    n, m = x.shape
    out = np.zeros((n, L_w, m), dtype=np.complex128)
    for lag in range(L_w):
        s = D + lag
        if s < n:
            out[s:, lag] = x[: n - s]
    return out.reshape(n, L_w * m)


def variance_sequence(x_ref: np.ndarray, beta: float, floor: float) -> np.ndarray:
    """Recursive reference-power estimate the engine uses, for every frame of one bin."""
    power = np.abs(x_ref) ** 2
    out = np.empty(len(power))
    s = power[0]
    for n, p in enumerate(power):
        s = p if n == 0 else beta * s + (1.0 - beta) * p
        s = max(s, floor)
        out[n] = s
    return out


def long_run_weights(spec: np.ndarray, cfg, bins) -> np.ndarray:
    """Unforgetting (lambda = 1) closed-form prediction weights, ``(len(bins), taps)``."""
    from .core import closed_form_solve

    out = np.empty((len(bins), cfg.n_taps), dtype=np.complex128)
    for i, k in enumerate(bins):
        x = spec[:, k, :]
        sig = variance_sequence(x[:, cfg.ref], cfg.beta, cfg.variance_floor)
        out[i] = closed_form_solve(delayed_matrix(x, cfg.D, cfg.L_w), x[:, cfg.ref], 1.0, cfg.alpha_p**-1, sig)
    return out


@dataclass
class TradeoffReport:
    frame_times: np.ndarray
    switch_time: float
    deviation: dict[float, np.ndarray]  # normalized deviation per frame
    steady: dict[float, float]  # mean over the last stretch before the change
    recross: dict[float, float]  # seconds after the change until back at the steady level


def weight_tradeoff(
    T60: float = 0.5,
    seed: int = 0,
    segment: float = 30.0,
    steady_span: float = 10.0,
    bin_stride: int = 16,
    lambdas=(0.998, 0.99),
) -> TradeoffReport:
    """Deviation of fixed-lambda RLS weights from the long-run solution, stationary noise source.

    The talker (white noise) sits at position A for ``segment`` seconds,
    then the room response switches to position B. Each half is scored
    against the unforgetting closed-form weights of a long stationary
    recording at that position.
    """
    from .core import EngineConfig
    from .stft import StftConfig, analyze

    cfg, stft_cfg = EngineConfig(), StftConfig()
    fs = stft_cfg.sample_rate
    rng = np.random.default_rng(seed)
    clean = rng.standard_normal(int(2 * segment * fs))
    sc = roomsim.Scenario(room=roomsim.RoomSpec(T60=T60), switch_time=segment, clean=clean)
    ra, rb = sc.rirs("a"), sc.rirs("b")
    ya, yb = roomsim.convolve_rirs(clean, ra), roomsim.convolve_rirs(clean, rb)
    g = 1.0 / max(np.abs(ya).max(), np.abs(yb).max())
    ya, yb = ya * g, yb * g
    y = roomsim.splice(ya, yb, sc.switch_sample)
    bins = np.arange(1, stft_cfg.n_bins - 1, bin_stride)
    w_a = long_run_weights(analyze(ya, stft_cfg).data, cfg, bins)
    w_b = long_run_weights(analyze(yb, stft_cfg).data, cfg, bins)

    spec = analyze(y, stft_cfg).data[:, bins, :]
    times = (np.arange(spec.shape[0]) * stft_cfg.hop + stft_cfg.block_size) / fs
    return _deviation_curves(cfg, spec, times, segment, w_a, w_b, lambdas, steady_span)


def ctf_tradeoff(
    seed: int = 0,
    n_bins: int = 16,
    segment_frames: int = 3750,
    ctf_frames: int = 40,
    steady_frames: int = 1250,
    lambdas=(0.998, 0.99),
) -> TradeoffReport:
    """Same trade-off measured on a well-conditioned subband model.

    Each bin sees a complex white source through independent, exponentially
    decaying multichannel transfer functions of ``ctf_frames`` frames; the
    transfer functions are redrawn at the change. Frame rate and engine
    configuration match the room experiment.
    """
    from .core import EngineConfig
    from .stft import StftConfig

    cfg, stft_cfg = EngineConfig(), StftConfig()
    rng = np.random.default_rng(seed)
    n_total = 2 * segment_frames
    decay = np.exp(-3.0 * np.arange(ctf_frames) / ctf_frames)

    def observe(g, src):
        # (frames, bins, M): per bin and channel, src convolved with g
        out = np.empty((n_total, n_bins, cfg.M), dtype=np.complex128)
        for k in range(n_bins):
            for m in range(cfg.M):
                out[:, k, m] = np.convolve(src[:, k], g[k, m])[:n_total]
        return out

    def draw():
        g = rng.standard_normal((n_bins, cfg.M, ctf_frames)) + 1j * rng.standard_normal((n_bins, cfg.M, ctf_frames))
        return g * decay

    src = (rng.standard_normal((n_total, n_bins)) + 1j * rng.standard_normal((n_total, n_bins))) / np.sqrt(2)
    xa, xb = observe(draw(), src), observe(draw(), src)
    all_bins = np.arange(n_bins)
    w_a, w_b = long_run_weights(xa, cfg, all_bins), long_run_weights(xb, cfg, all_bins)
    spec = np.concatenate([xa[:segment_frames], xb[segment_frames:]])
    frame_s = stft_cfg.hop / stft_cfg.sample_rate
    times = (np.arange(n_total) + 1) * frame_s
    return _deviation_curves(
        cfg, spec, times, segment_frames * frame_s, w_a, w_b, lambdas, steady_frames * frame_s
    )


def _deviation_curves(cfg, spec, times, change_time, w_a, w_b, lambdas, steady_span) -> TradeoffReport:
    from .core import BatchedRLS, FrameHistory

    n_frames, n_bins = spec.shape[:2]
    after = times > change_time
    deviation, steady, recross = {}, {}, {}
    for lam in lambdas:
        rls = BatchedRLS(cfg, n_bins)
        hist = FrameHistory.for_config(cfg, n_bins)
        dev = np.empty(n_frames)
        for n in range(n_frames):
            hist.push(spec[n])
            rls.step(hist.stacked(n, cfg.D, cfg.L_w), spec[n, :, cfg.ref], lam)
            ref = w_b if after[n] else w_a
            dev[n] = np.sum(np.abs(rls.W - ref) ** 2) / np.sum(np.abs(ref) ** 2)
        sel = (times > change_time - steady_span) & ~after
        steady[lam] = float(np.mean(dev[sel]))
        back = np.nonzero(after & (dev <= steady[lam]))[0]
        recross[lam] = float(times[back[0]] - change_time) if len(back) else float("inf")
        deviation[lam] = dev
    return TradeoffReport(times, change_time, deviation, steady, recross)
