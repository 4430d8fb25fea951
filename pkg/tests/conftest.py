import pytest

from fdlab.lstm import TrainConfig
from fdlab.mlfd import MlfdConfig
from fdlab.trace import HeartbeatTrace, TraceSpec, generate_trace_set

BURSTY = TraceSpec(links=9, heartbeats_per_link=1000, delta_ms=100.0, base_delay_ms=5.0,
                   jitter_std_ms=10.0, burst_rate=0.01, burst_mean_extra_ms=200.0,
                   burst_mean_len=20.0, loss_prob=0.01, rng_seed=7)


def desk_mlfd(**train_kw) -> MlfdConfig:
    """Desk-scale ML detector: eta=100, H=8, L=10."""
    train = dict(eta=100, batch_size=64, epochs=5, rng_seed=0)
    train.update(train_kw)
    return MlfdConfig(epsilon=10, hidden_size=8, lookback=10, train=TrainConfig(**train))


def tiny_mlfd(**train_kw) -> MlfdConfig:
    train = dict(eta=40, batch_size=16, epochs=2, rng_seed=0)
    train.update(train_kw)
    return MlfdConfig(epsilon=5, hidden_size=4, lookback=5, train=TrainConfig(**train))


def periodic_trace(count: int, delta: float = 100.0, link_id: int = 1) -> HeartbeatTrace:
    return HeartbeatTrace(link_id, delta, tuple((i, i * delta) for i in range(count)))


@pytest.fixture
def periodic():
    return periodic_trace(100)


@pytest.fixture(scope="session")
def bursty_set():
    return generate_trace_set(BURSTY)


@pytest.fixture(scope="session")
def small_bursty():
    spec = TraceSpec(links=2, heartbeats_per_link=150, base_delay_ms=5.0, jitter_std_ms=10.0,
                     burst_rate=0.02, burst_mean_extra_ms=150.0, burst_mean_len=10.0,
                     loss_prob=0.02, rng_seed=3)
    return generate_trace_set(spec)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" in rep.nodeid and rep.when == "call" or (
                    outcome == "error" and "test_acceptance.py" in rep.nodeid):
                name = rep.nodeid.split("::")[-1]
                lines.append((name, "PASS" if outcome == "passed" else "FAIL", rep.duration))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, verdict, secs in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}  ({secs:.1f} s)")
