"""Contract shared by the heartbeat failure detectors."""

from __future__ import annotations

import enum
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional


class ContractViolation(ValueError):
    """A heartbeat was fed out of order."""


class DetectorNotReady(RuntimeError):
    pass


class Verdict(str, enum.Enum):
    TRUST = "trust"
    SUSPECT = "suspect"


@dataclass(frozen=True)
class FreshnessPoint:
    """Deadline for heartbeat ``for_seq``: estimated arrival plus safety margin."""

    for_seq: int
    ea_ms: float
    margin_ms: float
    tau_ms: float = field(init=False)

    def __post_init__(self):
        if not self.margin_ms >= 0:
            raise ValueError(f"safety margin must be >= 0, got {self.margin_ms}")
        object.__setattr__(self, "tau_ms", self.ea_ms + self.margin_ms)


@dataclass
class DetectorStatus:
    ready: bool = False
    last_prediction: Optional[FreshnessPoint] = None


def assess(status: DetectorStatus, now_ms: float, arrival_ms: Optional[float] = None) -> Verdict:
    """Trust or suspect the monitored process at ``now_ms``.

    ``arrival_ms`` is the arrival time of the heartbeat the last prediction
    was made for, if it has arrived. A heartbeat landing exactly on the
    freshness point counts as on time.
    """
    if not status.ready or status.last_prediction is None:
        raise DetectorNotReady("detector has not issued a prediction yet")
    if arrival_ms is not None and arrival_ms <= now_ms:
        return Verdict.TRUST
    return Verdict.SUSPECT if now_ms > status.last_prediction.tau_ms else Verdict.TRUST


class FailureDetector(ABC):
    """Push-style detector for one link.

    Subclasses implement ``_observe``, which receives heartbeats already
    checked for ordering and returns the freshness point of the next
    heartbeat, or None while warming up.
    """

    def __init__(self, delta_ms: float):
        if not delta_ms > 0:
            raise ValueError(f"delta_ms must be > 0, got {delta_ms}")
        self.delta_ms = float(delta_ms)
        self.status = DetectorStatus()
        self._last_seq: Optional[int] = None
        self._last_arrival: Optional[float] = None

    @property
    @abstractmethod
    def warmup_heartbeats(self) -> int:
        """Number of heartbeats consumed before the first prediction."""

    @abstractmethod
    def _observe(self, seq: int, arrival_ms: float) -> Optional[FreshnessPoint]:
        ...

    def on_heartbeat(self, seq: int, arrival_ms: float) -> Optional[FreshnessPoint]:
        if self._last_seq is not None:
            if seq <= self._last_seq:
                raise ContractViolation(f"seq {seq} fed after seq {self._last_seq}")
            if arrival_ms <= self._last_arrival:
                raise ContractViolation(
                    f"arrival {arrival_ms} ms fed after arrival {self._last_arrival} ms")
        self._last_seq, self._last_arrival = seq, arrival_ms
        fp = self._observe(seq, arrival_ms)
        if fp is not None:
            self.status.ready = True
            self.status.last_prediction = fp
        return fp

    def timed_heartbeat(self, seq: int, arrival_ms: float) -> tuple:
        """``on_heartbeat`` plus its wall-clock cost in milliseconds."""
        start = time.perf_counter()
        fp = self.on_heartbeat(seq, arrival_ms)
        return fp, (time.perf_counter() - start) * 1000.0

    def assess(self, now_ms: float) -> Verdict:
        return assess(self.status, now_ms)

    def describe(self) -> dict:
        return {"fd": type(self).__name__}
