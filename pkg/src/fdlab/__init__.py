"""Heartbeat failure detectors (Chen's estimator and an online LSTM) and a
trace-driven workbench for comparing their quality of service."""

__version__ = "0.1.0"

from .chen import ChenConfig, ChenDetector
from .detector import (ContractViolation, DetectorNotReady, DetectorStatus, FailureDetector,
                       FreshnessPoint, Verdict, assess)
from .evaluation import (LinkReport, QosReport, align_safety_margin, compare, grid_search,
                         replay, replay_set)
from .lstm import LstmParams, TrainConfig, asymmetric_loss, lstm_forward, lstm_train_epochs
from .mlfd import ErrorWindow, MlfdConfig, MlfdDetector
from .trace import (HeartbeatTrace, TraceFormatError, TraceSpec, generate_synthetic_trace,
                    generate_trace_set, load_trace, save_trace, validate_trace)

__all__ = [
    "ChenConfig", "ChenDetector",
    "ContractViolation", "DetectorNotReady", "DetectorStatus", "FailureDetector",
    "FreshnessPoint", "Verdict", "assess",
    "LinkReport", "QosReport", "align_safety_margin", "compare", "grid_search",
    "replay", "replay_set",
    "LstmParams", "TrainConfig", "asymmetric_loss", "lstm_forward", "lstm_train_epochs",
    "ErrorWindow", "MlfdConfig", "MlfdDetector",
    "HeartbeatTrace", "TraceFormatError", "TraceSpec", "generate_synthetic_trace",
    "generate_trace_set", "load_trace", "save_trace", "validate_trace",
]
