"""Adaptive multichannel linear prediction dereverberation with speaker-move tracking."""

from .core import EngineConfig
from .detector import DetectorConfig
from .engine import Dereverberator, NumericFailure, dereverberate
from .stft import StftConfig, analyze, synthesize

__version__ = "0.1.0"

__all__ = [
    "DetectorConfig",
    "Dereverberator",
    "EngineConfig",
    "NumericFailure",
    "StftConfig",
    "analyze",
    "dereverberate",
    "synthesize",
]
