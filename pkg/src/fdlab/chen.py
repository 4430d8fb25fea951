"""Chen's estimated-arrival failure detector.

The expected arrival of heartbeat ``k+1`` is the mean, over the buffered
heartbeats, of each arrival minus its nominal emission time ``i * delta``,
shifted forward to ``(k+1) * delta``. A constant safety margin is added.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

from .detector import FailureDetector, FreshnessPoint


@dataclass(frozen=True)
class ChenConfig:
    n: int = 1000
    alpha_ms: float = 0.0
    w_min: int = 2

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"window size n must be >= 2, got {self.n}")
        if not self.alpha_ms >= 0:
            raise ValueError(f"alpha_ms must be >= 0, got {self.alpha_ms}")
        if not 2 <= self.w_min <= self.n:
            raise ValueError(f"w_min must lie in [2, n], got {self.w_min}")

    def build(self, delta_ms: float) -> "ChenDetector":
        return ChenDetector(delta_ms, self)

    def describe(self) -> dict:
        return {"fd": "chen", "n": self.n, "alpha_ms": self.alpha_ms, "w_min": self.w_min}


class ChenDetector(FailureDetector):
    def __init__(self, delta_ms: float, config: ChenConfig = ChenConfig()):
        super().__init__(delta_ms)
        self.config = config
        self.window: deque = deque()
        # running sum of (A_i - delta * i) over the window; refreshed exactly
        # every n pushes so rounding drift cannot build up on long traces
        self._offset_sum = 0.0
        self._pushes = 0

    @property
    def warmup_heartbeats(self) -> int:
        return self.config.w_min

    def push(self, seq: int, arrival_ms: float) -> None:
        self.window.append((seq, arrival_ms))
        self._offset_sum += arrival_ms - self.delta_ms * seq
        if len(self.window) > self.config.n:
            old_seq, old_arrival = self.window.popleft()
            self._offset_sum -= old_arrival - self.delta_ms * old_seq
        self._pushes += 1
        if self._pushes % self.config.n == 0:
            self._offset_sum = math.fsum(a - self.delta_ms * i for i, a in self.window)

    def predict(self, k: Optional[int] = None, alpha_ms: Optional[float] = None) -> Optional[FreshnessPoint]:
        """Freshness point for heartbeat ``k + 1`` (``k`` defaults to the newest buffered seq)."""
        m = len(self.window)
        if m < self.config.w_min:
            return None
        if k is None:
            k = self.window[-1][0]
        alpha = self.config.alpha_ms if alpha_ms is None else alpha_ms
        ea = self._offset_sum / m + (k + 1) * self.delta_ms
        return FreshnessPoint(k + 1, ea, alpha)

    def _observe(self, seq: int, arrival_ms: float) -> Optional[FreshnessPoint]:
        self.push(seq, arrival_ms)
        return self.predict(seq)

    def describe(self) -> dict:
        return self.config.describe()

