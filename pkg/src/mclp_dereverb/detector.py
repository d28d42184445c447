"""Speaker-position change detection and forgetting-factor control.

The weighted relative change of the prediction filters is smoothed over
frames; a jump of that quantity relative to its recent minimum signals a
position change, which puts the controller back into a fast-tracking phase.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class Phase(str, enum.Enum):
    TRACKING = "TRACKING"
    STEADY = "STEADY"


@dataclass(frozen=True)
class DetectorConfig:
    gamma: float = 1.5
    N0: int = 35
    T0: int = 375
    lambda_S: float = 0.990
    lambda_L0: float = 0.998
    epsilon: float = 0.01
    beta_w: float = 0.99
    denom_floor: float = 1e-12
    warmup: int | None = None  # defaults to T0 + N0

    def __post_init__(self):
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.lambda_S < self.lambda_L0 <= 1:
            raise ValueError("need 0 < lambda_S < lambda_L0 <= 1")
        if self.N0 < 1 or self.T0 < 1:
            raise ValueError("N0 and T0 must be >= 1")
        if not 0 < self.beta_w < 1:
            raise ValueError("beta_w must lie in (0, 1)")
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.T0 + self.N0)


@dataclass
class DetectorState:
    cfg: DetectorConfig = field(default_factory=DetectorConfig)
    delta_Tw: float = 0.0
    delta_T: float = 0.0  # unweighted counterpart, diagnostic only
    window: deque = field(default=None)
    phase: Phase = Phase.TRACKING
    t: int = 0
    lambda_current: float = field(default=None)

    def __post_init__(self):
        if self.window is None:
            self.window = deque(maxlen=self.cfg.N0 + 1)
        if self.lambda_current is None:
            self.lambda_current = self.cfg.lambda_S


@dataclass(frozen=True)
class TraceRecord:
    n: int
    delta_T: float
    delta_Tw: float
    lam: float
    phase: str
    detected: bool


def relative_change(w_new, w_old, denom_floor: float = 1e-12):
    """Squared norm of the coefficient change over the squared norm of the new coefficients.

    Works on a single vector or row-wise on a ``(bins, taps)`` array.
    """
    w_new = np.asarray(w_new)
    w_old = np.asarray(w_old)
    if w_new.shape != w_old.shape:
        raise ValueError(f"shape mismatch: {w_new.shape} vs {w_old.shape}")
    num = np.sum(np.abs(w_new - w_old) ** 2, axis=-1)
    den = np.maximum(np.sum(np.abs(w_new) ** 2, axis=-1), denom_floor)
    return num / den


def total_weighted_change(state: DetectorState, deltas, rho) -> float:
    deltas = np.asarray(deltas, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if deltas.shape != rho.shape:
        raise ValueError("deltas and rho must have the same length")
    b = state.cfg.beta_w
    state.delta_Tw = b * state.delta_Tw + (1.0 - b) * float(np.sum(rho * deltas))
    state.delta_T = b * state.delta_T + (1.0 - b) * float(np.sum(deltas))
    state.window.append(state.delta_Tw)
    return state.delta_Tw


def detect_change(state: DetectorState) -> bool:
    cfg = state.cfg
    if state.t < cfg.warmup or not state.window:
        return False
    # the window holds the current value, so the ratio is >= 1
    floor = max(min(state.window), cfg.denom_floor)
    return state.delta_Tw / floor > cfg.gamma


def steady_lambda(delta_Tw: float, cfg: DetectorConfig) -> float:
    # exp overflow only happens far past the clamp
    try:
        value = 2.0 - math.exp(cfg.epsilon * delta_Tw)
    except OverflowError:
        value = -math.inf
    return min(max(value, cfg.lambda_L0), 1.0)


def next_lambda(state: DetectorState, detected: bool) -> float:
    """Advance the two-phase controller by one frame and return the next λ."""
    cfg = state.cfg
    if detected:
        state.phase = Phase.TRACKING
        state.t = 0
    if state.phase is Phase.TRACKING and state.t >= cfg.T0:
        state.phase = Phase.STEADY
    if state.phase is Phase.TRACKING:
        lam = cfg.lambda_S
    else:
        lam = steady_lambda(state.delta_Tw, cfg)
    state.t += 1
    state.lambda_current = lam
    return lam


def lambda_clamp_point(cfg: DetectorConfig = DetectorConfig()) -> float:
    """Smallest ``delta_Tw`` at which the steady-phase λ hits its lower limit."""
    return math.log(2.0 - cfg.lambda_L0) / cfg.epsilon
