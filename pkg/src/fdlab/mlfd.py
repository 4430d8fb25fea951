"""LSTM-based failure detector with online, fixed-window retraining.

On every heartbeat the detector keeps only the latest ``eta`` inter-arrival
times, retrains the persistent LSTM on sliding windows of them, predicts the
next inter-arrival time and adds a safety margin equal to the mean absolute
error of its last ``epsilon`` predictions.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .detector import FailureDetector, FreshnessPoint
from .lstm import LstmParams, TrainConfig, TrainingError, lstm_forward, lstm_train_epochs

log = logging.getLogger(__name__)


def normalize_delta(delta_ms, nominal_ms: float):
    if not nominal_ms > 0:
        raise ValueError(f"nominal interval must be > 0, got {nominal_ms}")
    return np.asarray(delta_ms, dtype=np.float64) / nominal_ms - 1.0


def denormalize_delta(x, nominal_ms: float):
    if not nominal_ms > 0:
        raise ValueError(f"nominal interval must be > 0, got {nominal_ms}")
    return (np.asarray(x, dtype=np.float64) + 1.0) * nominal_ms


@dataclass(frozen=True)
class MlfdConfig:
    epsilon: int = 10
    hidden_size: int = 32
    lookback: int = 20
    # None disables retraining after warm-up (predict-only)
    retrain_every: Optional[int] = 1
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.epsilon < 1:
            raise ValueError(f"epsilon must be >= 1, got {self.epsilon}")
        if self.hidden_size < 1 or self.lookback < 1:
            raise ValueError("hidden_size and lookback must be >= 1")
        if self.train.eta <= self.lookback:
            raise ValueError(f"eta ({self.train.eta}) must exceed lookback ({self.lookback})")
        if self.retrain_every is not None and self.retrain_every < 1:
            raise ValueError(f"retrain_every must be >= 1, got {self.retrain_every}")

    @property
    def eta(self) -> int:
        return self.train.eta

    def build(self, delta_ms: float) -> "MlfdDetector":
        return MlfdDetector(delta_ms, self)

    def describe(self) -> dict:
        d = {"fd": "mlfd", "eta": self.eta, "epsilon": self.epsilon,
             "hidden_size": self.hidden_size, "lookback": self.lookback,
             "retrain_every": self.retrain_every}
        d.update({k: v for k, v in asdict(self.train).items() if k != "eta"})
        return d


class ErrorWindow:
    """The ``epsilon`` most recent absolute prediction errors, in ms."""

    def __init__(self, size: int):
        self.errors: deque = deque(maxlen=size)

    def push(self, error_ms: float) -> None:
        if not error_ms >= 0:
            raise ValueError(f"errors are absolute values, got {error_ms}")
        self.errors.append(float(error_ms))

    def mean(self) -> float:
        if not self.errors:
            return 0.0
        return math.fsum(self.errors) / len(self.errors)

    def __len__(self):
        return len(self.errors)


class MlfdDetector(FailureDetector):
    def __init__(self, delta_ms: float, config: MlfdConfig = MlfdConfig()):
        super().__init__(delta_ms)
        self.config = config
        seed = config.train.rng_seed
        self.params = LstmParams.initialize(config.hidden_size, config.lookback,
                                            np.random.default_rng([seed, 0]))
        self._shuffle_rng = np.random.default_rng([seed, 1])
        self.arrivals: deque = deque(maxlen=config.eta + 1)
        self.errors = ErrorWindow(config.epsilon)
        self.last_ea: Optional[float] = None
        self.heartbeats = 0
        self.last_training_size = 0
        self.training_failures = 0
        self.last_failure: Optional[str] = None

    @property
    def warmup_heartbeats(self) -> int:
        # lookback + 1 inter-arrival times need lookback + 2 arrivals
        return self.config.lookback + 2

    def training_samples(self) -> tuple:
        """Sliding windows over the buffered deltas: inputs (N, L), targets (N,)."""
        L = self.config.lookback
        deltas = normalize_delta(np.diff(np.fromiter(self.arrivals, dtype=np.float64)),
                                 self.delta_ms)
        if len(deltas) < L + 1:
            return np.empty((0, L)), np.empty(0)
        windows = sliding_window_view(deltas, L + 1)
        return windows[:, :L], windows[:, L]

    def _retrain_due(self) -> bool:
        every = self.config.retrain_every
        return every is not None and self.heartbeats % every == 0

    def _observe(self, seq: int, arrival_ms: float) -> Optional[FreshnessPoint]:
        self.heartbeats += 1
        if self.last_ea is not None:
            self.errors.push(abs(arrival_ms - self.last_ea))
        self.arrivals.append(arrival_ms)

        L = self.config.lookback
        if len(self.arrivals) - 1 < L + 1:
            return None

        x, y = self.training_samples()
        failed = False
        if self._retrain_due():
            self.last_training_size = len(x)
            try:
                lstm_train_epochs(self.params, x, y, self.config.train, rng=self._shuffle_rng)
            except TrainingError as exc:
                failed = True
                self.training_failures += 1
                self.last_failure = str(exc)
                log.warning("link training aborted at seq %d: %s", seq, exc)

        if failed:
            ea = arrival_ms + self.delta_ms
        else:
            recent = normalize_delta(
                np.diff(np.fromiter(self.arrivals, dtype=np.float64)[-(L + 1):]), self.delta_ms)
            pred, _ = lstm_forward(self.params, recent)
            ea = arrival_ms + float(denormalize_delta(pred, self.delta_ms))
        self.last_ea = ea
        return FreshnessPoint(seq + 1, ea, self.errors.mean())

    def describe(self) -> dict:
        return self.config.describe()


def measure_tc(detector: FailureDetector, seq: int, arrival_ms: float) -> float:
    """Wall-clock milliseconds spent handling one heartbeat."""
    _, elapsed = detector.timed_heartbeat(seq, arrival_ms)
    return elapsed
