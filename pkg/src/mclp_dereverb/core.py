"""RLS-based multichannel linear prediction, per frequency bin.

The single-bin functions (:func:`update_variance`, :func:`rls_step`,
:func:`closed_form_solve`) are straightforward numpy and serve as the
reference. :class:`BatchedRLS` runs the same recursion over all bins at once
through a compiled kernel and is what the streaming engine uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np


@dataclass(frozen=True)
class EngineConfig:
    D: int = 2  # prediction delay, frames
    L_w: int = 40  # prediction order, frames
    M: int = 3
    alpha_p: float = 100.0  # P(0) = alpha_p * I
    beta: float = 0.6
    reference_channel: int = 1  # 1-based
    variance_floor: float = 1e-12

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if self.L_w < 0:
            raise ValueError("L_w must be >= 0")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.alpha_p <= 0 or self.variance_floor <= 0:
            raise ValueError("alpha_p and variance_floor must be positive")
        if not 1 <= self.reference_channel <= self.M:
            raise ValueError("reference_channel must be in [1, M]")

    @property
    def n_taps(self) -> int:
        return self.M * self.L_w

    @property
    def ref(self) -> int:
        return self.reference_channel - 1


@dataclass
class BinState:
    w: np.ndarray
    P: np.ndarray
    sigma2: float = 0.0

    @classmethod
    def initial(cls, cfg: EngineConfig) -> "BinState":
        n = cfg.n_taps
        return cls(
            w=np.zeros(n, dtype=np.complex128),
            P=cfg.alpha_p * np.eye(n, dtype=np.complex128),
            sigma2=0.0,
        )

    def copy(self) -> "BinState":
        return BinState(self.w.copy(), self.P.copy(), self.sigma2)


@dataclass
class FrameHistory:
    """Ring buffer of the last ``L_w + D`` multichannel frames, all bins.

    ``push`` appends frame ``n``; ``frame(j)`` returns frame ``j`` as a
    ``(bins, channels)`` array, zeros for ``j < 0``.
    """

    n_bins: int
    n_channels: int
    depth: int
    buffer: np.ndarray = field(init=False)
    newest: int = field(init=False, default=-1)

    def __post_init__(self):
        self.depth = max(self.depth, 1)
        self.buffer = np.zeros((self.depth, self.n_bins, self.n_channels), dtype=np.complex128)

    @classmethod
    def for_config(cls, cfg: EngineConfig, n_bins: int) -> "FrameHistory":
        return cls(n_bins, cfg.M, cfg.L_w + cfg.D)

    def push(self, frame: np.ndarray) -> None:
        frame = np.asarray(frame, dtype=np.complex128)
        if frame.shape != (self.n_bins, self.n_channels):
            raise ValueError(f"frame shape {frame.shape} != {(self.n_bins, self.n_channels)}")
        self.newest += 1
        self.buffer[self.newest % self.depth] = frame

    def frame(self, j: int) -> np.ndarray:
        if j < 0:
            return np.zeros((self.n_bins, self.n_channels), dtype=np.complex128)
        if j > self.newest or j <= self.newest - self.depth:
            raise IndexError(f"frame {j} is not held in the history")
        return self.buffer[j % self.depth]

    def stacked(self, n: int, D: int, L_w: int) -> np.ndarray:
        """``(bins, M*L_w)`` array of x(n-D), x(n-D-1), ..., channel-major blocks."""
        out = np.zeros((self.n_bins, L_w * self.n_channels), dtype=np.complex128)
        for lag in range(L_w):
            j = n - D - lag
            if j < 0:
                break
            out[:, lag * self.n_channels : (lag + 1) * self.n_channels] = self.frame(j)
        return out


def stack_delayed(history: FrameHistory, n: int, k: int, D: int, L_w: int) -> np.ndarray:
    """Stacked delayed observation for bin ``k``: [x(n-D); ...; x(n-D-L_w+1)]."""
    return history.stacked(n, D, L_w)[k]


def update_variance(state: BinState, x_ref: complex, beta: float, floor: float = 1e-12) -> float:
    state.sigma2 = max(beta * state.sigma2 + (1.0 - beta) * abs(x_ref) ** 2, floor)
    return state.sigma2


def seed_variance(state: BinState, x_ref: complex, floor: float = 1e-12) -> float:
    """Initial variance: the first frame's reference power, floored."""
    state.sigma2 = max(abs(x_ref) ** 2, floor)
    return state.sigma2


def rls_step(state: BinState, xt: np.ndarray, x_ref: complex, lam: float):
    """One RLS update for a single bin.

    Uses ``state.sigma2`` as the current variance, so call
    :func:`update_variance` first. Returns ``(d_ref, state)`` with ``d_ref``
    the prediction error computed from the prior weights; ``state`` is
    updated in place.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("forgetting factor must lie in (0, 1]")
    xt = np.asarray(xt, dtype=np.complex128)
    if not (np.all(np.isfinite(xt)) and np.isfinite(x_ref)):
        raise FloatingPointError("non-finite observation")
    Px = state.P @ xt.conj()
    denom = state.sigma2 + np.real(xt @ Px) / lam
    gain = Px / (lam * denom)
    d_ref = x_ref - state.w @ xt
    state.w = state.w + gain * d_ref
    # x^T P = conj(P x*)^T for Hermitian P
    P = (state.P - np.outer(gain, Px.conj())) / lam
    state.P = 0.5 * (P + P.conj().T)
    return d_ref, state


def closed_form_solve(xt_seq, x_ref_seq, lam: float, alpha_reg: float, sigma2_seq) -> np.ndarray:
    """Exponentially weighted, variance-normalized least squares solved directly.

    ``xt_seq`` is ``(n, taps)``: row ``tau`` is the stacked delayed
    observation used at step ``tau``. Regularizer is ``alpha_reg * lam**n * I``.
    """
    xt_seq = np.asarray(xt_seq, dtype=np.complex128)
    x_ref_seq = np.asarray(x_ref_seq, dtype=np.complex128)
    sigma2_seq = np.asarray(sigma2_seq, dtype=np.float64)
    n = len(xt_seq)
    if n == 0:
        return np.zeros(xt_seq.shape[1] if xt_seq.ndim == 2 else 0, dtype=np.complex128)
    weights = lam ** np.arange(n - 1, -1, -1, dtype=np.float64) / sigma2_seq
    xc = xt_seq.conj()
    psi = (xc * weights[:, None]).T @ xt_seq + alpha_reg * lam**n * np.eye(xt_seq.shape[1])
    z = (xc * weights[:, None]).T @ x_ref_seq
    try:
        return np.linalg.solve(psi, z)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("weighted correlation matrix is singular") from exc


@numba.njit(cache=True)
def _rls_all_bins(P, W, xt, x_ref, sigma2, lam, d_out):  # pragma: no cover - compiled
    n_bins, n_taps = W.shape
    inv = 1.0 / lam
    Px = np.empty(n_taps, dtype=np.complex128)
    for k in range(n_bins):
        quad = 0.0
        for i in range(n_taps):
            acc = 0j
            for j in range(n_taps):
                acc += P[k, i, j] * xt[k, j].conjugate()
            Px[i] = acc
            quad += (xt[k, i] * acc).real
        scale = inv / (sigma2[k] + quad * inv)
        pred = 0j
        for i in range(n_taps):
            pred += W[k, i] * xt[k, i]
        d = x_ref[k] - pred
        d_out[k] = d
        for i in range(n_taps):
            W[k, i] += Px[i] * scale * d
        # write the upper triangle and mirror it: Hermitian by construction
        for i in range(n_taps):
            gi = Px[i] * scale
            P[k, i, i] = ((P[k, i, i] - gi * Px[i].conjugate()) * inv).real
            for j in range(i + 1, n_taps):
                v = (P[k, i, j] - gi * Px[j].conjugate()) * inv
                P[k, i, j] = v
                P[k, j, i] = v.conjugate()


class BatchedRLS:
    """RLS state for every bin: ``W (K, taps)``, ``P (K, taps, taps)``, ``sigma2 (K,)``."""

    def __init__(self, cfg: EngineConfig, n_bins: int):
        self.cfg = cfg
        self.n_bins = n_bins
        taps = cfg.n_taps
        self.W = np.zeros((n_bins, taps), dtype=np.complex128)
        self.P = np.zeros((n_bins, taps, taps), dtype=np.complex128)
        idx = np.arange(taps)
        self.P[:, idx, idx] = cfg.alpha_p
        self.sigma2 = np.zeros(n_bins)
        self.frames_seen = 0

    def update_variance(self, x_ref: np.ndarray) -> np.ndarray:
        power = np.abs(x_ref) ** 2
        if self.frames_seen == 0:
            # seed with the first frame's energy
            self.sigma2 = power.copy()
        else:
            self.sigma2 = self.cfg.beta * self.sigma2 + (1.0 - self.cfg.beta) * power
        np.maximum(self.sigma2, self.cfg.variance_floor, out=self.sigma2)
        return self.sigma2

    def step(self, xt: np.ndarray, x_ref: np.ndarray, lam: float) -> np.ndarray:
        """Variance update followed by the RLS update; returns prior errors ``(K,)``."""
        if not 0.0 < lam <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        self.update_variance(x_ref)
        self.frames_seen += 1
        d = np.empty(self.n_bins, dtype=np.complex128)
        if self.cfg.n_taps == 0:
            d[:] = x_ref
            return d
        _rls_all_bins(
            self.P,
            self.W,
            np.ascontiguousarray(xt, dtype=np.complex128),
            np.ascontiguousarray(x_ref, dtype=np.complex128),
            self.sigma2,
            float(lam),
            d,
        )
        return d

    def bin_state(self, k: int) -> BinState:
        return BinState(self.W[k].copy(), self.P[k].copy(), float(self.sigma2[k]))
