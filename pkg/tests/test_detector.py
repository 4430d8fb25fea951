import pytest

from fdlab.chen import ChenConfig, ChenDetector
from fdlab.detector import (ContractViolation, DetectorNotReady, DetectorStatus,
                            FreshnessPoint, Verdict, assess)
from fdlab.trace import TraceSpec, generate_synthetic_trace


def test_freshness_point_sums_margin():
    fp = FreshnessPoint(5, 512.25, 7.5)
    assert fp.tau_ms == 519.75


def test_negative_margin_rejected():
    with pytest.raises(ValueError):
        FreshnessPoint(1, 100.0, -0.1)


def test_first_heartbeat_is_warmup():
    det = ChenDetector(100.0, ChenConfig(n=10))
    assert det.on_heartbeat(0, 0.0) is None
    assert not det.status.ready
    assert det.status.last_prediction is None


def test_periodic_chen_predicts_next_period():
    det = ChenDetector(100.0, ChenConfig(n=10, alpha_ms=0))
    for i in range(10):
        fp = det.on_heartbeat(i, 100.0 * i)
    assert fp.for_seq == 10
    assert fp.tau_ms == 1000.0
    assert det.status.ready and det.status.last_prediction is fp


@pytest.mark.parametrize("seq, arrival", [(3, 350.0), (4, 300.0), (2, 400.0)])
def test_out_of_order_input_is_contract_violation(seq, arrival):
    det = ChenDetector(100.0)
    det.on_heartbeat(2, 200.0)
    det.on_heartbeat(3, 300.0)
    with pytest.raises(ContractViolation):
        det.on_heartbeat(seq, arrival)


def _ready(tau):
    return DetectorStatus(True, FreshnessPoint(1, tau, 0.0))


def test_assess_before_deadline_trusts():
    assert assess(_ready(200.0), 150.0) is Verdict.TRUST


def test_assess_after_deadline_suspects():
    assert assess(_ready(200.0), 200.001) is Verdict.SUSPECT


def test_assess_arrival_exactly_at_deadline_trusts():
    assert assess(_ready(200.0), 200.0, arrival_ms=200.0) is Verdict.TRUST
    assert assess(_ready(200.0), 200.0) is Verdict.TRUST


def test_assess_late_arrival_restores_trust():
    status = _ready(200.0)
    assert assess(status, 250.0, arrival_ms=260.0) is Verdict.SUSPECT
    assert assess(status, 270.0, arrival_ms=260.0) is Verdict.TRUST


def test_assess_not_ready():
    with pytest.raises(DetectorNotReady):
        assess(DetectorStatus(), 0.0)


def test_detector_assess_uses_last_prediction():
    det = ChenDetector(100.0, ChenConfig(alpha_ms=20))
    det.on_heartbeat(0, 0.0)
    det.on_heartbeat(1, 100.0)
    assert det.assess(219.0) is Verdict.TRUST
    assert det.assess(221.0) is Verdict.SUSPECT


def test_timed_heartbeat_reports_elapsed():
    det = ChenDetector(100.0)
    fp, ms = det.timed_heartbeat(0, 0.0)
    assert fp is None and ms >= 0.0


def _chen_run(trace):
    det = ChenDetector(trace.delta_ms, ChenConfig(n=50, alpha_ms=10))
    return det, [(a, det.on_heartbeat(s, a)) for s, a in trace]


def test_predictions_lie_in_the_future_when_ea_does():
    spec = TraceSpec(heartbeats_per_link=500, jitter_std_ms=20, burst_rate=0.02,
                     burst_mean_extra_ms=100, burst_mean_len=8, rng_seed=3)
    _, out = _chen_run(generate_synthetic_trace(spec, 1))
    for arrival, fp in out:
        if fp is not None and fp.ea_ms >= arrival:
            assert fp.tau_ms > arrival or fp.margin_ms == 0


def test_assess_sequence_is_reproducible():
    spec = TraceSpec(heartbeats_per_link=200, jitter_std_ms=25, rng_seed=4)
    trace = generate_synthetic_trace(spec, 1)
    verdicts = []
    for _ in range(2):
        det = ChenDetector(100.0, ChenConfig(n=50, alpha_ms=10))
        seq_verdicts = []
        for s, a in trace:
            det.on_heartbeat(s, a)
            if det.status.ready:
                seq_verdicts.append(det.assess(a + 105.0))
        verdicts.append(seq_verdicts)
    assert verdicts[0] == verdicts[1]
    assert Verdict.SUSPECT in verdicts[0] and Verdict.TRUST in verdicts[0]
