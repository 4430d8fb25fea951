"""Heartbeat traces: the arrival log of one monitored link.

A trace records, for each heartbeat that reached the monitor, its sequence
number and arrival time in milliseconds on the monitor's clock. Heartbeat
``seq`` is emitted at ``seq * delta_ms``. Missing sequence numbers are lost
heartbeats. ``crashed`` marks a sender that stopped after its last record.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MAGIC = "# fdlab-trace v1"
COLUMNS = "seq,arrival_ms"
MIN_GAP_MS = 0.001


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


@dataclass(frozen=True)
class HeartbeatTrace:
    link_id: int
    delta_ms: float
    records: tuple = ()
    crashed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "records",
                           tuple((int(s), float(a)) for s, a in self.records))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @cached_property
    def seqs(self) -> np.ndarray:
        return np.array([s for s, _ in self.records], dtype=np.int64)

    @cached_property
    def arrivals(self) -> np.ndarray:
        return np.array([a for _, a in self.records], dtype=np.float64)

    def digest(self) -> str:
        return hashlib.sha256(dumps_trace(self).encode()).hexdigest()


def validate_trace(trace: HeartbeatTrace) -> list:
    """Return a list of human-readable invariant violations (empty when valid)."""
    problems = []
    if not (trace.delta_ms > 0 and math.isfinite(trace.delta_ms)):
        problems.append(f"delta_ms must be a positive number, got {trace.delta_ms}")
    prev_seq = prev_arrival = None
    for idx, (seq, arrival) in enumerate(trace.records):
        if seq < 0:
            problems.append(f"record {idx}: negative seq {seq}")
        if not (math.isfinite(arrival) and arrival >= 0):
            problems.append(f"record {idx}: arrival_ms {arrival} is not a non-negative number")
        if prev_seq is not None and seq <= prev_seq:
            problems.append(f"record {idx}: seq {seq} does not increase (previous {prev_seq})")
        if prev_arrival is not None and not arrival > prev_arrival:
            problems.append(
                f"record {idx}: arrival_ms {arrival} does not increase (previous {prev_arrival})")
        prev_seq, prev_arrival = seq, arrival
    return problems


@dataclass
class TraceSpec:
    """Knobs of the synthetic link model.

    Each heartbeat's one-way delay is ``base_delay_ms`` plus Gaussian jitter
    plus, while a burst is active, that burst's extra delay (exponentially
    distributed with mean ``burst_mean_extra_ms``, fixed for the whole burst).
    Bursts follow an on/off chain: a quiet link enters a burst with
    probability ``burst_rate`` per heartbeat and a bursting link stays in it
    with probability ``1 - 1/burst_mean_len``.
    """

    links: int = 9
    heartbeats_per_link: int = 1000
    delta_ms: float = 100.0
    jitter_std_ms: float = 0.0
    base_delay_ms: float = 0.0
    burst_rate: float = 0.0
    burst_mean_extra_ms: float = 0.0
    burst_mean_len: float = 1.0
    loss_prob: float = 0.0
    crash_at_seq: Optional[int] = None
    rng_seed: int = 0

    def validate(self):
        if self.links < 1:
            raise ValueError(f"links must be >= 1, got {self.links}")
        if self.heartbeats_per_link < 1:
            raise ValueError("heartbeats_per_link must be >= 1")
        if not self.delta_ms > 0:
            raise ValueError(f"delta_ms must be > 0, got {self.delta_ms}")
        for name in ("jitter_std_ms", "base_delay_ms", "burst_mean_extra_ms"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("burst_rate", "loss_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.loss_prob == 1.0:
            raise ValueError("loss_prob = 1 would produce an empty trace")
        if not self.burst_mean_len >= 1:
            raise ValueError(f"burst_mean_len must be >= 1, got {self.burst_mean_len}")
        if self.crash_at_seq is not None and self.crash_at_seq < 0:
            raise ValueError(f"crash_at_seq must be >= 0, got {self.crash_at_seq}")


def generate_synthetic_trace(spec: TraceSpec, link_id: int = 1) -> HeartbeatTrace:
    spec.validate()
    rng = np.random.default_rng([spec.rng_seed, link_id])
    n = spec.heartbeats_per_link
    if spec.crash_at_seq is not None:
        n = min(n, spec.crash_at_seq + 1)

    # draws are made for every emission, lost or not, so that loss does not
    # shift the random stream of the delay model
    jitter = rng.normal(0.0, spec.jitter_std_ms, n) if spec.jitter_std_ms > 0 else np.zeros(n)
    burst_u = rng.random(n)
    burst_level = rng.exponential(1.0, n) * spec.burst_mean_extra_ms
    lost = rng.random(n) < spec.loss_prob

    stay = 1.0 - 1.0 / spec.burst_mean_len
    in_burst = False
    extra = 0.0
    records = []
    prev = -math.inf
    for seq in range(n):
        if in_burst:
            in_burst = burst_u[seq] < stay
        else:
            in_burst = burst_u[seq] < spec.burst_rate
            if in_burst:
                extra = burst_level[seq]
        delay = spec.base_delay_ms + jitter[seq] + (extra if in_burst else 0.0)
        if lost[seq]:
            continue
        arrival = round(seq * spec.delta_ms + max(delay, 0.0), 3)
        if arrival < prev + MIN_GAP_MS:
            arrival = round(prev + MIN_GAP_MS, 3)
        records.append((seq, arrival))
        prev = arrival

    if not records:
        raise ValueError(f"link {link_id}: every heartbeat was lost; nothing to record")
    return HeartbeatTrace(link_id, float(spec.delta_ms), tuple(records),
                          crashed=spec.crash_at_seq is not None)


def generate_trace_set(spec: TraceSpec) -> list:
    return [generate_synthetic_trace(spec, link_id) for link_id in range(1, spec.links + 1)]


def _fmt_real(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


def dumps_trace(trace: HeartbeatTrace) -> str:
    out = io.StringIO()
    out.write(MAGIC + "\n")
    out.write(f"# link_id={trace.link_id} delta_ms={_fmt_real(trace.delta_ms)} "
              f"crashed={int(trace.crashed)}\n")
    out.write(COLUMNS + "\n")
    for seq, arrival in trace.records:
        out.write(f"{seq},{arrival:.3f}\n")
    return out.getvalue()


def save_trace(trace: HeartbeatTrace, path) -> None:
    Path(path).write_text(dumps_trace(trace), encoding="utf-8", newline="\n")


def _parse_header(line: str, path) -> dict:
    if not line.startswith("#"):
        raise TraceFormatError("expected '# link_id=... delta_ms=... crashed=...'", 2, path)
    fields = {}
    for token in line[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise TraceFormatError(f"malformed header field {token!r}", 2, path)
        fields[key] = value
    missing = {"link_id", "delta_ms", "crashed"} - fields.keys()
    if missing:
        raise TraceFormatError(f"header lacks {', '.join(sorted(missing))}", 2, path)
    try:
        link_id = int(fields["link_id"])
        delta_ms = float(fields["delta_ms"])
    except ValueError as exc:
        raise TraceFormatError(f"bad header value: {exc}", 2, path) from None
    if fields["crashed"] not in ("0", "1"):
        raise TraceFormatError(f"crashed must be 0 or 1, got {fields['crashed']!r}", 2, path)
    if not (delta_ms > 0 and math.isfinite(delta_ms)):
        raise TraceFormatError(f"delta_ms must be positive, got {fields['delta_ms']}", 2, path)
    return {"link_id": link_id, "delta_ms": delta_ms, "crashed": fields["crashed"] == "1"}


def loads_trace(text: str, path=None) -> HeartbeatTrace:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 3:
        raise TraceFormatError("truncated file: expected 3 header lines", len(lines) + 1, path)
    if lines[0].rstrip("\r") != MAGIC:
        raise TraceFormatError(f"expected {MAGIC!r}", 1, path)
    header = _parse_header(lines[1].rstrip("\r"), path)
    if lines[2].rstrip("\r") != COLUMNS:
        raise TraceFormatError(f"expected column line {COLUMNS!r}", 3, path)

    records = []
    prev_seq = prev_arrival = None
    for lineno, line in enumerate(lines[3:], start=4):
        line = line.rstrip("\r")
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceFormatError(f"expected 'seq,arrival_ms', got {line!r}", lineno, path)
        try:
            seq = int(parts[0])
            arrival = float(parts[1])
        except ValueError:
            raise TraceFormatError(f"unparsable row {line!r}", lineno, path) from None
        if seq < 0 or not (math.isfinite(arrival) and arrival >= 0):
            raise TraceFormatError(f"negative or non-finite value in row {line!r}", lineno, path)
        if prev_seq is not None:
            if seq == prev_seq:
                raise TraceFormatError(f"duplicate seq {seq}", lineno, path)
            if seq < prev_seq:
                raise TraceFormatError(f"seq {seq} follows seq {prev_seq}", lineno, path)
            if arrival <= prev_arrival:
                raise TraceFormatError(
                    f"arrival_ms {parts[1]} does not increase (previous {prev_arrival:.3f})",
                    lineno, path)
        records.append((seq, arrival))
        prev_seq, prev_arrival = seq, arrival
    return HeartbeatTrace(header["link_id"], header["delta_ms"], tuple(records), header["crashed"])


def load_trace(path) -> HeartbeatTrace:
    return loads_trace(Path(path).read_text(encoding="utf-8"), path=path)


def load_traces(paths: Sequence) -> list:
    traces = [load_trace(p) for p in paths]
    return sorted(traces, key=lambda t: t.link_id)
