"""fdlab command line: generate traces, replay detectors, align and grid-search.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
Data goes to stdout (or ``--out``); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .chen import ChenConfig
from .evaluation import (align_safety_margin, compare_csv, curve_csv, grid_csv,
                         grid_search, replay_set, report_csv, round_durations,
                         shared_warmup, write_prediction_log)
from .lstm import TrainConfig
from .mlfd import MlfdConfig
from .trace import TraceSpec, generate_trace_set, load_traces, save_trace

log = logging.getLogger("fdlab")

DEFAULT_SEED = 0
CHEN_FLAGS = {"n": "--n", "alpha_ms": "--alpha-ms", "w_min": "--w-min"}
MLFD_FLAGS = {"eta": "--eta", "epsilon": "--epsilon", "batch": "--batch", "epochs": "--epochs",
              "lam": "--lambda", "hidden": "--hidden", "lookback": "--lookback", "lr": "--lr",
              "clip": "--clip", "retrain_every": "--retrain-every"}


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.set_defaults(subparser=p)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="RNG seed (default %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-link replays")
    p.add_argument("--out", type=Path, help="output file (output directory for gen)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("-v", "--verbose", action="store_true")


def _chen_args(p) -> None:
    g = p.add_argument_group("Chen detector")
    g.add_argument("--n", type=int, help="arrival window size (default 1000)")
    g.add_argument("--alpha-ms", type=float, help="constant safety margin (default 0)")
    g.add_argument("--w-min", type=int, help="arrivals needed before predicting (default 2)")


def _mlfd_args(p, grid: bool = False) -> None:
    g = p.add_argument_group("ML detector")
    if grid:
        g.add_argument("--eta", type=_int_list, default=[100, 500, 1000],
                       help="comma-separated training window sizes")
        g.add_argument("--batch", type=_int_list, default=[32, 64])
        g.add_argument("--epochs", type=_int_list, default=[5, 10])
    else:
        g.add_argument("--eta", type=int, help="training window size (default 500)")
        g.add_argument("--batch", type=int, help="batch size (default 64)")
        g.add_argument("--epochs", type=int, help="epochs per heartbeat (default 5)")
    g.add_argument("--epsilon", type=int, help="error window size (default 10)")
    g.add_argument("--lambda", dest="lam", type=float,
                   help="under-estimation loss multiplier (default 10)")
    g.add_argument("--hidden", type=int, help="LSTM hidden size (default 32)")
    g.add_argument("--lookback", type=int, help="LSTM input window (default 20)")
    g.add_argument("--lr", type=float, help="learning rate (default 0.01)")
    g.add_argument("--clip", type=float, help="gradient norm clip (default 1.0)")
    g.add_argument("--retrain-every", type=int, help="heartbeats between retraining (default 1)")


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _alpha_grid(text: str) -> list:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            count = int(round((stop - start) / step)) + 1
            return [round(start + i * step, 9) for i in range(count)]
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha grid {text!r}; use start:stop:step")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fdlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic heartbeat traces")
    _common(p)
    p.add_argument("--links", type=int, default=9)
    p.add_argument("--heartbeats", type=int, default=1000)
    p.add_argument("--delta-ms", type=float, default=100.0)
    p.add_argument("--base-delay-ms", type=float, default=0.0)
    p.add_argument("--jitter-ms", type=float, default=0.0, help="Gaussian jitter std")
    p.add_argument("--burst-rate", type=float, default=0.0)
    p.add_argument("--burst-extra-ms", type=float, default=0.0)
    p.add_argument("--burst-len", type=float, default=1.0)
    p.add_argument("--loss-prob", type=float, default=0.0)
    p.add_argument("--crash-at-seq", type=int)

    p = sub.add_parser("run", help="replay one detector over traces")
    _common(p)
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--fd", choices=("chen", "mlfd"), required=True)
    p.add_argument("--warmup", type=int, help="heartbeats to skip before scoring")
    p.add_argument("--log", type=Path, help="write the per-prediction CSV log here")
    _chen_args(p)
    _mlfd_args(p)

    p = sub.add_parser("compare", help="replay Chen and the ML detector side by side")
    _common(p)
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--warmup", type=int)
    p.add_argument("--align-first", action="store_true",
                   help="pick Chen's alpha by alignment before comparing")
    p.add_argument("--target-pa", default="auto",
                   help="alignment target P_A, or 'auto' for the ML detector's P_A")
    p.add_argument("--alpha-grid", type=_alpha_grid, default=_alpha_grid("0:2000:10"))
    p.add_argument("--log", type=Path)
    _chen_args(p)
    _mlfd_args(p)

    p = sub.add_parser("align", help="sweep Chen's safety margin to reach a target P_A")
    _common(p)
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--target-pa", type=float, required=True)
    p.add_argument("--alpha-grid", type=_alpha_grid, default=_alpha_grid("0:1000:10"))
    p.add_argument("--warmup", type=int)
    p.add_argument("--curve", type=Path, help="also write the alpha_ms,p_a curve CSV here")
    p.add_argument("--n", type=int)
    p.add_argument("--w-min", type=int)

    p = sub.add_parser("grid", help="grid search over eta x batch x epochs")
    _common(p)
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--warmup", type=int)
    _mlfd_args(p, grid=True)
    return parser


def _given(args, names) -> list:
    return [flag for attr, flag in names.items() if getattr(args, attr, None) is not None]


def chen_config(args) -> ChenConfig:
    kw = {k: getattr(args, k) for k in ("n", "alpha_ms", "w_min")
          if getattr(args, k, None) is not None}
    return ChenConfig(**kw)


def mlfd_config(args, grid: bool = False) -> MlfdConfig:
    def pick(attr, default):
        v = getattr(args, attr, None)
        return default if v is None else v

    base = TrainConfig()
    if grid:
        # axes are swept by grid_search; the largest eta keeps validation honest
        eta, batch, epochs = max(args.eta), base.batch_size, base.epochs
    else:
        eta = pick("eta", base.eta)
        batch = pick("batch", base.batch_size)
        epochs = pick("epochs", base.epochs)
    train = TrainConfig(eta=eta, batch_size=batch, epochs=epochs,
                        learning_rate=pick("lr", base.learning_rate),
                        grad_clip_norm=pick("clip", base.grad_clip_norm),
                        loss_multiplier=pick("lam", base.loss_multiplier),
                        rng_seed=args.seed)
    d = MlfdConfig()
    return MlfdConfig(epsilon=pick("epsilon", d.epsilon), hidden_size=pick("hidden", d.hidden_size),
                      lookback=pick("lookback", d.lookback),
                      retrain_every=pick("retrain_every", d.retrain_every), train=train)


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(round_durations(obj), indent=2) + "\n"


def cmd_gen(args) -> int:
    if args.out is None:
        raise UsageError("gen needs --out DIRECTORY")
    spec = TraceSpec(links=args.links, heartbeats_per_link=args.heartbeats, delta_ms=args.delta_ms,
                     jitter_std_ms=args.jitter_ms, base_delay_ms=args.base_delay_ms,
                     burst_rate=args.burst_rate, burst_mean_extra_ms=args.burst_extra_ms,
                     burst_mean_len=args.burst_len, loss_prob=args.loss_prob,
                     crash_at_seq=args.crash_at_seq, rng_seed=args.seed)
    traces = generate_trace_set(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    files = []
    for t in traces:
        path = args.out / f"link_{t.link_id}.csv"
        save_trace(t, path)
        files.append({"file": path.name, "link_id": t.link_id, "records": len(t),
                      "sha256": t.digest()})
    manifest = {"spec": asdict(spec), "seed": args.seed, "traces": files}
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %d traces to %s", len(traces), args.out)
    return 0


def cmd_run(args) -> int:
    if args.fd == "chen":
        bad = _given(args, MLFD_FLAGS)
        config = chen_config(args)
    else:
        bad = _given(args, CHEN_FLAGS)
        config = mlfd_config(args)
    if bad:
        raise UsageError(f"{', '.join(bad)} cannot be used with --fd {args.fd}")
    traces = load_traces(args.traces)
    report = replay_set(traces, config, args.warmup, keep_log=args.log is not None,
                        jobs=args.jobs, seed=args.seed)
    if args.log is not None:
        with open(args.log, "w", encoding="utf-8", newline="") as fh:
            write_prediction_log(report.prediction_log(), fh)
    _emit(report_csv(report) if args.format == "csv" else _dump(report.to_dict()), args.out)
    return 0


def cmd_compare(args) -> int:
    traces = load_traces(args.traces)
    chen = chen_config(args)
    mlfd = mlfd_config(args)
    warmup = shared_warmup(chen, mlfd, override=args.warmup)
    keep_log = args.log is not None
    mlfd_report = replay_set(traces, mlfd, warmup, keep_log, args.jobs, args.seed)
    alignment = None
    if args.align_first:
        if args.alpha_ms is not None:
            raise UsageError("--alpha-ms and --align-first are mutually exclusive")
        target = mlfd_report.p_a if args.target_pa == "auto" else _float(args.target_pa)
        alignment = align_safety_margin(traces, target, args.alpha_grid, chen, warmup)
        if alignment.alpha_ms is None:
            raise RuntimeError(f"no alpha on the grid reaches P_A {target:.6f} "
                               f"(best {max(pa for _, pa in alignment.curve):.6f})")
        chen = replace(chen, alpha_ms=alignment.alpha_ms)
    chen_report = replay_set(traces, chen, warmup, keep_log, args.jobs, args.seed)
    if keep_log:
        with open(args.log, "w", encoding="utf-8", newline="") as fh:
            write_prediction_log(chen_report.prediction_log() + mlfd_report.prediction_log(), fh)

    if args.format == "csv":
        _emit(compare_csv(chen_report, mlfd_report), args.out)
    else:
        doc = {"warmup_heartbeats": warmup, "alpha_ms": chen.alpha_ms,
               "chen": chen_report.to_dict(), "mlfd": mlfd_report.to_dict()}
        if alignment is not None:
            doc["alignment"] = {"target_pa": alignment.target_pa,
                                "curve": [{"alpha_ms": a, "p_a": pa} for a, pa in alignment.curve]}
        _emit(_dump(doc), args.out)
    return 0


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--target-pa must be a number or 'auto', got {text!r}") from None


def cmd_align(args) -> int:
    traces = load_traces(args.traces)
    chen = chen_config(args)
    warmup = max(chen.w_min, args.warmup or 0)
    alignment = align_safety_margin(traces, args.target_pa, args.alpha_grid, chen, warmup)
    if args.curve is not None:
        args.curve.write_text(curve_csv(alignment.curve), encoding="utf-8")
    if alignment.alpha_ms is None:
        log.warning("target P_A %s not reached on the grid", args.target_pa)
    if args.format == "csv":
        _emit(curve_csv(alignment.curve), args.out)
    else:
        _emit(_dump({"target_pa": alignment.target_pa, "alpha_ms": alignment.alpha_ms,
                     "curve": [{"alpha_ms": a, "p_a": pa} for a, pa in alignment.curve]}),
              args.out)
    return 0


def cmd_grid(args) -> int:
    traces = load_traces(args.traces)
    base = mlfd_config(args, grid=True)
    result = grid_search(traces, args.eta, args.batch, args.epochs, base,
                         warmup=args.warmup, jobs=args.jobs)
    if args.format == "csv":
        _emit(grid_csv(result), args.out)
    else:
        _emit(_dump({"config": base.describe(), "seed": args.seed, "rows": result.to_dicts()}),
              args.out)
    return 0


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "compare": cmd_compare, "align": cmd_align,
            "grid": cmd_grid}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        args.subparser.error(str(exc))
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"fdlab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
