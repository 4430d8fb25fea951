import csv
import io
import json

import pytest

from fdlab.cli import main
from fdlab.trace import load_trace

MLFD_TINY = ["--eta", "30", "--batch", "16", "--epochs", "2", "--hidden", "4", "--lookback", "5"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def traces(tmp_path, capsys):
    out = tmp_path / "traces"
    code, _, _ = run(capsys, "gen", "--links", 3, "--heartbeats", 120, "--jitter-ms", 8,
                     "--base-delay-ms", 5, "--burst-rate", 0.03, "--burst-extra-ms", 120,
                     "--burst-len", 6, "--loss-prob", 0.02, "--seed", 4, "--out", out)
    assert code == 0
    return sorted(out.glob("link_*.csv"))


@pytest.fixture
def periodic(tmp_path, capsys):
    out = tmp_path / "periodic"
    assert run(capsys, "gen", "--links", 2, "--heartbeats", 60, "--out", out)[0] == 0
    return sorted(out.glob("link_*.csv"))


def test_gen_writes_one_file_per_link_and_manifest(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "--links", 9, "--delta-ms", 100, "--heartbeats", 500,
                       "--seed", 7, "--out", tmp_path / "t")
    assert code == 0 and out == ""
    files = sorted((tmp_path / "t").glob("link_*.csv"))
    assert len(files) == 9
    manifest = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["spec"]["delta_ms"] == 100
    assert [f["link_id"] for f in manifest["traces"]] == list(range(1, 10))
    assert load_trace(files[0]).delta_ms == 100.0


def test_gen_is_byte_identical_on_rerun(tmp_path, capsys):
    args = ["gen", "--links", 3, "--heartbeats", 300, "--jitter-ms", 12, "--burst-rate", 0.05,
            "--burst-extra-ms", 50, "--loss-prob", 0.1, "--seed", 7]
    run(capsys, *args, "--out", tmp_path / "a")
    run(capsys, *args, "--out", tmp_path / "b")
    for name in ["link_1.csv", "link_2.csv", "link_3.csv", "manifest.json"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_rejects_total_loss(tmp_path, capsys):
    code, out, err = run(capsys, "gen", "--loss-prob", 1.0, "--out", tmp_path / "x")
    assert code == 1
    assert out == ""
    assert "loss_prob" in err


def test_run_chen_json(traces, capsys):
    code, out, _ = run(capsys, "run", "--fd", "chen", "--n", 1000, "--alpha-ms", 680, *traces)
    assert code == 0
    doc = json.loads(out)
    assert doc["config"] == {"fd": "chen", "n": 1000, "alpha_ms": 680.0, "w_min": 2}
    assert [r["link_id"] for r in doc["links"]] == [1, 2, 3]
    assert doc["aggregate"]["p_a"] == 1.0


def test_run_mlfd_json_and_log(traces, tmp_path, capsys):
    log = tmp_path / "pred.csv"
    code, out, _ = run(capsys, "run", "--fd", "mlfd", *MLFD_TINY, "--epsilon", 10,
                       "--lambda", 10, "--seed", 3, "--log", log, *traces)
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["fd"] == "mlfd" and doc["config"]["eta"] == 30
    assert doc["config"]["rng_seed"] == 3
    rows = list(csv.DictReader(log.open()))
    assert len(rows) == doc["aggregate"]["predictions_total"]


def test_run_rejects_chen_flag_with_mlfd(traces, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--fd", "mlfd", "--alpha-ms", "5", *map(str, traces)])
    assert exc.value.code == 2
    assert "--alpha-ms" in capsys.readouterr().err


def test_run_rejects_mlfd_flag_with_chen(traces, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--fd", "chen", "--eta", "50", *map(str, traces)])
    assert exc.value.code == 2


def test_missing_trace_file_is_runtime_error(tmp_path, capsys):
    code, out, err = run(capsys, "run", "--fd", "chen", tmp_path / "nope.csv")
    assert code == 1 and out == "" and "nope.csv" in err


def test_run_csv_to_file(traces, tmp_path, capsys):
    dest = tmp_path / "r.csv"
    code, out, _ = run(capsys, "run", "--fd", "chen", "--format", "csv", "--out", dest, *traces)
    assert code == 0 and out == ""
    assert dest.read_text().splitlines()[0] == \
        "link_id,p_a,t_d_ms,t_c_ms,predictions_total,predictions_safe"


def test_compare_csv_schema(traces, capsys):
    code, out, _ = run(capsys, "compare", "--alpha-ms", 100, *MLFD_TINY, "--format", "csv",
                       *traces)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["link_id"] for r in rows] == ["1", "2", "3", "average"]
    for key in ("chen_p_a", "chen_t_d_ms", "chen_t_c_ms", "mlfd_p_a", "mlfd_t_d_ms", "mlfd_t_c_ms"):
        assert key in rows[0]


def test_compare_counts_match(traces, capsys):
    code, out, _ = run(capsys, "compare", *MLFD_TINY, *traces)
    doc = json.loads(out)
    assert doc["warmup_heartbeats"] == 7
    for c, m in zip(doc["chen"]["links"], doc["mlfd"]["links"]):
        assert c["predictions_total"] == m["predictions_total"]


def test_compare_align_first_auto(traces, capsys):
    code, out, _ = run(capsys, "compare", "--align-first", "--target-pa", "auto", *MLFD_TINY,
                       *traces)
    assert code == 0
    doc = json.loads(out)
    assert doc["chen"]["aggregate"]["p_a"] >= doc["mlfd"]["aggregate"]["p_a"]
    assert doc["alignment"]["target_pa"] == doc["mlfd"]["aggregate"]["p_a"]
    assert doc["chen"]["config"]["alpha_ms"] == doc["alpha_ms"]


def test_compare_align_first_conflicts_with_alpha(traces, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["compare", "--align-first", "--alpha-ms", "5", *MLFD_TINY, *map(str, traces)])
    assert exc.value.code == 2


def test_align_periodic_gives_zero(periodic, tmp_path, capsys):
    curve = tmp_path / "curve.csv"
    code, out, _ = run(capsys, "align", "--target-pa", 1.0, "--curve", curve, *periodic)
    assert code == 0
    assert json.loads(out)["alpha_ms"] == 0.0
    assert curve.read_text().startswith("alpha_ms,p_a\n0.000,1.0\n")


def test_align_curve_is_monotone(traces, capsys):
    code, out, _ = run(capsys, "align", "--target-pa", 0.999, "--alpha-grid", "0:300:10",
                       "--format", "csv", *traces)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 31
    pas = [float(r["p_a"]) for r in rows]
    assert all(b >= a for a, b in zip(pas, pas[1:]))


def test_grid_rows_sorted(traces, capsys):
    code, out, _ = run(capsys, "grid", "--eta", "20,30", "--batch", "8,16", "--epochs", "1",
                       "--hidden", 4, "--lookback", 5, traces[0])
    assert code == 0
    rows = json.loads(out)["rows"]
    assert len(rows) == 4
    keys = [(-r["p_a"], r["t_c_ms"]) for r in rows]
    assert keys == sorted(keys)


def test_bad_alpha_grid_is_usage_error(traces, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["align", "--target-pa", "0.9", "--alpha-grid", "0:10:0", str(traces[0])])
    assert exc.value.code == 2
