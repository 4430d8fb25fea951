"""Trace-driven replay and the QoS metrics computed from it.

A prediction issued on heartbeat ``h_i`` is judged against the next heartbeat
that actually arrives: it is safe when that arrival is no later than the
freshness point. Detection time is the slack ``tau - arrival`` averaged over
safe predictions; computation time is the wall-clock cost per heartbeat.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .chen import ChenConfig
from .trace import HeartbeatTrace


def _mean(values):
    values = [v for v in values if v is not None]
    return math.fsum(values) / len(values) if values else None


@dataclass
class PredictionRecord:
    link_id: int
    seq: int            # seq of the heartbeat the prediction was judged against
    arrival_ms: float
    ea_ms: float
    margin_ms: float
    tau_ms: float
    safe: bool


@dataclass
class LinkReport:
    link_id: int
    predictions_total: int = 0
    predictions_safe: int = 0
    t_d_ms: Optional[float] = None
    t_c_ms: Optional[float] = None
    suspicion_time_ms: Optional[float] = None
    warmup_heartbeats: int = 0
    warmup_skipped: int = 0
    training_failures: int = 0
    digest: str = ""
    tc_samples: list = field(default_factory=list, repr=False)
    log: list = field(default_factory=list, repr=False)

    @property
    def p_a(self) -> Optional[float]:
        if self.predictions_total == 0:
            return None
        return self.predictions_safe / self.predictions_total

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "link_id": self.link_id,
            "p_a": self.p_a,
            "t_d_ms": self.t_d_ms,
            "predictions_total": self.predictions_total,
            "predictions_safe": self.predictions_safe,
            "suspicion_time_ms": self.suspicion_time_ms,
            "warmup_heartbeats": self.warmup_heartbeats,
            "warmup_skipped": self.warmup_skipped,
            "training_failures": self.training_failures,
            "trace_digest": self.digest,
        }
        if timing:
            d["t_c_ms"] = self.t_c_ms
        return d


@dataclass
class QosReport:
    links: list
    config: dict
    seed: Optional[int] = None

    @property
    def p_a(self) -> Optional[float]:
        return _mean(r.p_a for r in self.links)

    @property
    def t_d_ms(self) -> Optional[float]:
        return _mean(r.t_d_ms for r in self.links)

    @property
    def t_c_ms(self) -> Optional[float]:
        return _mean(r.t_c_ms for r in self.links)

    @property
    def predictions_total(self) -> int:
        return sum(r.predictions_total for r in self.links)

    def aggregate(self, timing: bool = True) -> dict:
        d = {"p_a": self.p_a, "t_d_ms": self.t_d_ms,
             "predictions_total": self.predictions_total,
             "predictions_safe": sum(r.predictions_safe for r in self.links)}
        if timing:
            d["t_c_ms"] = self.t_c_ms
        return d

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "links": [r.to_dict(timing) for r in self.links],
            "aggregate": self.aggregate(timing),
        }

    def prediction_log(self) -> list:
        return [rec for r in self.links for rec in r.log]


def replay(trace: HeartbeatTrace, detector, warmup_override: Optional[int] = None,
           keep_log: bool = False) -> LinkReport:
    """Feed ``trace`` through a fresh ``detector`` and score its predictions.

    Predictions are scored once the detector has consumed
    ``max(detector.warmup_heartbeats, warmup_override)`` heartbeats.
    """
    if len(trace) == 0:
        raise ValueError(f"link {trace.link_id}: empty trace")
    warmup = max(detector.warmup_heartbeats, warmup_override or 0)
    report = LinkReport(trace.link_id, warmup_heartbeats=warmup, digest=trace.digest())
    slack = []
    pending = None
    for idx, (seq, arrival) in enumerate(trace.records):
        if pending is not None:
            safe = arrival <= pending.tau_ms
            report.predictions_total += 1
            if safe:
                report.predictions_safe += 1
                slack.append(pending.tau_ms - arrival)
            if keep_log:
                report.log.append(PredictionRecord(trace.link_id, seq, arrival, pending.ea_ms,
                                                   pending.margin_ms, pending.tau_ms, safe))
        fp, elapsed = detector.timed_heartbeat(seq, arrival)
        report.tc_samples.append(elapsed)
        pending = None
        if fp is not None:
            if idx + 1 >= warmup:
                pending = fp
            else:
                report.warmup_skipped += 1

    if trace.crashed and pending is not None:
        report.suspicion_time_ms = pending.tau_ms
    report.t_d_ms = math.fsum(slack) / len(slack) if slack else None
    report.t_c_ms = math.fsum(report.tc_samples) / len(report.tc_samples)
    report.training_failures = getattr(detector, "training_failures", 0)
    return report


def _replay_job(args) -> LinkReport:
    trace, config, warmup, keep_log = args
    return replay(trace, config.build(trace.delta_ms), warmup, keep_log)


def replay_set(traces: Sequence[HeartbeatTrace], config, warmup: Optional[int] = None,
               keep_log: bool = False, jobs: int = 1, seed: Optional[int] = None) -> QosReport:
    """Replay every trace with a fresh detector built from ``config``.

    ``config`` is any object with ``build(delta_ms)`` and ``describe()``
    (``ChenConfig`` or ``MlfdConfig``). Rows are ordered by link id.
    """
    if not traces:
        raise ValueError("no traces to replay")
    jobs_args = [(t, config, warmup, keep_log) for t in traces]
    if jobs > 1 and len(traces) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            links = list(pool.map(_replay_job, jobs_args))
    else:
        links = [_replay_job(a) for a in jobs_args]
    links.sort(key=lambda r: r.link_id)
    return QosReport(links, config.describe(), seed)


def shared_warmup(*configs, override: Optional[int] = None) -> int:
    """Largest warm-up among the compared detectors (and the override)."""
    w = max(c.build(1.0).warmup_heartbeats for c in configs)
    return max(w, override or 0)


@dataclass
class Alignment:
    curve: list                # (alpha_ms, mean P_A) per grid point
    target_pa: float
    alpha_ms: Optional[float]  # smallest grid alpha reaching the target


def chen_pa_curve(traces: Sequence[HeartbeatTrace], alpha_grid: Sequence[float],
                  chen: ChenConfig = ChenConfig(), warmup: Optional[int] = None) -> list:
    """Mean P_A of Chen's detector at each safety margin in ``alpha_grid``.

    The estimated arrivals do not depend on the margin, so each trace is
    replayed once and every grid point is scored on the same predictions.
    """
    per_link = []
    for trace in traces:
        report = replay(trace, replace(chen, alpha_ms=0.0).build(trace.delta_ms), warmup,
                        keep_log=True)
        per_link.append([(rec.ea_ms, rec.arrival_ms) for rec in report.log])
    curve = []
    for alpha in alpha_grid:
        pas = []
        for pairs in per_link:
            if pairs:
                safe = sum(1 for ea, a in pairs if a <= ea + alpha)
                pas.append(safe / len(pairs))
        curve.append((float(alpha), _mean(pas)))
    return curve


def align_safety_margin(traces: Sequence[HeartbeatTrace], target_pa: float,
                        alpha_grid: Sequence[float], chen: ChenConfig = ChenConfig(),
                        warmup: Optional[int] = None) -> Alignment:
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise ValueError("empty alpha grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("alpha grid must be strictly ascending")
    curve = chen_pa_curve(traces, grid, chen, warmup)
    chosen = next((a for a, pa in curve if pa is not None and pa >= target_pa), None)
    return Alignment(curve, target_pa, chosen)


def compare(traces: Sequence[HeartbeatTrace], chen: ChenConfig, mlfd, warmup_override=None,
            jobs: int = 1, keep_log: bool = False) -> tuple:
    """Replay both detectors on the same traces with a common warm-up."""
    warmup = shared_warmup(chen, mlfd, override=warmup_override)
    return (replay_set(traces, chen, warmup, keep_log, jobs),
            replay_set(traces, mlfd, warmup, keep_log, jobs))


@dataclass
class GridRow:
    eta: int
    batch_size: int
    epochs: int
    p_a: Optional[float]
    t_d_ms: Optional[float]
    t_c_ms: Optional[float]

    def sort_key(self):
        return (-(self.p_a if self.p_a is not None else -1.0),
                self.t_c_ms if self.t_c_ms is not None else math.inf)


@dataclass
class GridResult:
    rows: list

    def __post_init__(self):
        self.rows = sorted(self.rows, key=GridRow.sort_key)

    def to_dicts(self, timing: bool = True) -> list:
        out = []
        for r in self.rows:
            d = {"eta": r.eta, "batch_size": r.batch_size, "epochs": r.epochs,
                 "p_a": r.p_a, "t_d_ms": r.t_d_ms}
            if timing:
                d["t_c_ms"] = r.t_c_ms
            out.append(d)
        return out


def _evaluate_combination(config, traces, warmup, jobs) -> tuple:
    report = replay_set(traces, config, warmup, jobs=jobs)
    return report.p_a, report.t_d_ms, report.t_c_ms


def grid_search(traces: Sequence[HeartbeatTrace], eta_list, batch_list, epoch_list, base_config,
                warmup: Optional[int] = None, jobs: int = 1,
                evaluate: Optional[Callable] = None) -> GridResult:
    """Exhaustive search over (eta, batch size, epochs) for the ML detector.

    ``evaluate(config, traces)`` may be supplied to score a combination
    without replaying; it must return ``(p_a, t_d_ms, t_c_ms)``.
    """
    if not (eta_list and batch_list and epoch_list):
        raise ValueError("grid axes must be nonempty")
    rows = []
    for eta in eta_list:
        for batch in batch_list:
            for epochs in epoch_list:
                train = replace(base_config.train, eta=eta, batch_size=batch, epochs=epochs)
                try:
                    config = replace(base_config, train=train)
                    if evaluate is None:
                        scores = _evaluate_combination(config, traces, warmup, jobs)
                    else:
                        scores = evaluate(config, traces)
                except Exception as exc:
                    raise RuntimeError(
                        f"grid combination eta={eta} batch={batch} epochs={epochs} failed: {exc}"
                    ) from exc
                rows.append(GridRow(eta, batch, epochs, *scores))
    return GridResult(rows)


# -- serialization -----------------------------------------------------------

def round_durations(obj, digits: int = 3):
    """Round every ``*_ms`` value in a nested dict/list structure."""
    if isinstance(obj, dict):
        return {k: (round(v, digits) if k.endswith("_ms") and isinstance(v, float)
                    else round_durations(v, digits)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [round_durations(v, digits) for v in obj]
    return obj


def report_json(report: QosReport, timing: bool = True) -> str:
    return json.dumps(round_durations(report.to_dict(timing)), indent=2) + "\n"


def write_prediction_log(records, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["link_id", "seq", "arrival_ms", "ea_ms", "margin_ms", "tau_ms", "safe"])
    for r in records:
        w.writerow([r.link_id, r.seq, f"{r.arrival_ms:.3f}", f"{r.ea_ms:.3f}",
                    f"{r.margin_ms:.3f}", f"{r.tau_ms:.3f}", int(r.safe)])


def curve_csv(curve) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["alpha_ms", "p_a"])
    for alpha, pa in curve:
        w.writerow([f"{alpha:.3f}", "" if pa is None else repr(pa)])
    return out.getvalue()


def report_csv(report: QosReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["link_id", "p_a", "t_d_ms", "t_c_ms", "predictions_total", "predictions_safe"])
    for r in report.links:
        w.writerow([r.link_id, _fmt(r.p_a, 6), _fmt(r.t_d_ms), _fmt(r.t_c_ms),
                    r.predictions_total, r.predictions_safe])
    w.writerow(["average", _fmt(report.p_a, 6), _fmt(report.t_d_ms), _fmt(report.t_c_ms),
                report.predictions_total, sum(r.predictions_safe for r in report.links)])
    return out.getvalue()


def compare_csv(chen: QosReport, mlfd: QosReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["link_id", "predictions_total",
                "chen_p_a", "chen_t_d_ms", "chen_t_c_ms",
                "mlfd_p_a", "mlfd_t_d_ms", "mlfd_t_c_ms"])
    for c, m in zip(chen.links, mlfd.links):
        w.writerow([c.link_id, c.predictions_total,
                    _fmt(c.p_a, 6), _fmt(c.t_d_ms), _fmt(c.t_c_ms),
                    _fmt(m.p_a, 6), _fmt(m.t_d_ms), _fmt(m.t_c_ms)])
    w.writerow(["average", chen.predictions_total,
                _fmt(chen.p_a, 6), _fmt(chen.t_d_ms), _fmt(chen.t_c_ms),
                _fmt(mlfd.p_a, 6), _fmt(mlfd.t_d_ms), _fmt(mlfd.t_c_ms)])
    return out.getvalue()


def grid_csv(result: GridResult) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["eta", "batch_size", "epochs", "p_a", "t_d_ms", "t_c_ms"])
    for r in result.rows:
        w.writerow([r.eta, r.batch_size, r.epochs, _fmt(r.p_a, 6), _fmt(r.t_d_ms), _fmt(r.t_c_ms)])
    return out.getvalue()


def _fmt(x, digits: int = 3) -> str:
    return "" if x is None else f"{x:.{digits}f}"
