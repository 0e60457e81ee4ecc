"""Command-line interface: gen, run, monitor, rerun, lossplot, metaplot.

Exit codes: 0 success, 1 when at least one run ended failed, 2 on usage or
configuration errors.  Logs go to stderr; with --json, a machine-readable
summary is printed to stdout instead of the human text.

Workers receive their resource token both in the run command and in the
GRIDRUN_RESOURCE_TOKEN environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import analysis, pipelines, runner, store as store_mod
from .config import MonitorParams, parse_config_file
from .errors import GridrunError
from .indicators import read_curve

log = logging.getLogger("gridrun")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridrun",
        description="Declarative hyperparameter sweeps: generate pipelines, "
        "run them in a bounded parallel pool, store indicators in SQLite, "
        "and render comparison plots.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_gen = sub.add_parser("gen", help="expand a config into pipeline JSON files")
    p_gen.add_argument("-c", "--config", required=True, help="experiment INI file")
    p_gen.add_argument("-o", "--out", required=True, help="output directory")
    p_gen.add_argument(
        "--limit", type=int, default=pipelines.DEFAULT_PIPELINE_LIMIT,
        help="refuse to generate more pipelines than this (default %(default)s)",
    )
    p_gen.add_argument("--json", action="store_true")

    p_run = sub.add_parser("run", help="execute generated pipelines")
    p_run.add_argument("-d", "--dir", required=True, help="pipeline directory")
    p_run.add_argument("--db", required=True, help="result database path")
    p_run.add_argument("--seed", type=int, default=0, help="global seed")
    p_run.add_argument(
        "--literal-slope", action="store_true",
        help="report the raw difference of window means as the slope "
        "indicator instead of the per-epoch normalization",
    )
    p_run.add_argument("--json", action="store_true")

    p_mon = sub.add_parser("monitor", help="show run status counts and failures")
    p_mon.add_argument("--db", required=True)
    p_mon.add_argument("--failures", type=int, default=5, help="failures to list")
    p_mon.add_argument("--json", action="store_true")

    p_rerun = sub.add_parser("rerun", help="resume finished runs for extra epochs")
    p_rerun.add_argument("--db", required=True)
    p_rerun.add_argument("--where", required=True, help="SQL selection over runs")
    p_rerun.add_argument("--epochs", type=int, required=True, help="extra epochs")
    p_rerun.add_argument("-c", "--config", help="reuse MONITOR settings from this file")
    p_rerun.add_argument("--processes", type=int, help="override worker pool size")
    p_rerun.add_argument("--seed", type=int, default=0, help="global seed")
    p_rerun.add_argument("--literal-slope", action="store_true")
    p_rerun.add_argument("--json", action="store_true")

    p_loss = sub.add_parser("lossplot", help="render per-run loss plots")
    p_loss.add_argument("--db", required=True)
    p_loss.add_argument("--where", default="status = 'done'")
    p_loss.add_argument("-o", "--out", required=True)
    p_loss.add_argument("--json", action="store_true")

    p_meta = sub.add_parser("metaplot", help="render grouped comparison plots")
    p_meta.add_argument("-c", "--config", required=True, help="plot INI file")
    p_meta.add_argument("--db", required=True)
    p_meta.add_argument("--where", default="status = 'done'")
    p_meta.add_argument("-o", "--out", required=True)
    p_meta.add_argument("--csv", action="store_true", help="dump grouped points as CSV")
    p_meta.add_argument("--json", action="store_true")

    return parser


def _emit(args, payload: dict, human: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload))
    else:
        print(human)


def cmd_gen(args) -> int:
    cfg = parse_config_file(args.config)
    generated = pipelines.generate_pipelines(cfg, limit=args.limit)
    pipelines.persist_pipelines(args.out, generated, monitor=cfg.monitor)
    _emit(
        args,
        {"pipelines": len(generated), "dir": str(args.out)},
        f"generated {len(generated)} pipelines in {args.out}",
    )
    return 0


def cmd_run(args) -> int:
    loaded = pipelines.load_pipelines(args.dir)
    monitor = pipelines.load_manifest_monitor(args.dir)
    db = store_mod.init_db(args.db)
    try:
        summary = runner.schedule(
            loaded,
            monitor,
            db,
            global_seed=args.seed,
            literal_slope_normalization=args.literal_slope,
        )
    finally:
        db.close()
    _emit(
        args,
        summary,
        f"runs: {summary['done']} done, {summary['failed']} failed "
        f"of {summary['total']}",
    )
    return 1 if summary["failed"] else 0


def cmd_monitor(args) -> int:
    db = store_mod.init_db(args.db)
    try:
        counts = db.status_counts()
        failures = db.recent_failures(args.failures)
        payload = {
            "counts": counts,
            "recent_failures": [
                {"run_id": r.run_id, "label": r.label, "reason": r.failure_reason}
                for r in failures
            ],
        }
    finally:
        db.close()
    lines = ["status counts:"]
    lines += [f"  {status:8s} {count}" for status, count in counts.items()]
    if failures:
        lines.append("recent failures:")
        lines += [
            f"  {r.run_id}  {r.label}  [{r.failure_reason}]" for r in failures
        ]
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_rerun(args) -> int:
    if args.config:
        monitor = parse_config_file(args.config).monitor
    else:
        monitor = MonitorParams(nb_processus=max(1, os.cpu_count() or 1))
    if args.processes:
        monitor.nb_processus = args.processes
    db = store_mod.init_db(args.db)
    try:
        summary = runner.rerun(
            db,
            monitor,
            args.where,
            args.epochs,
            global_seed=args.seed,
            literal_slope_normalization=args.literal_slope,
        )
    finally:
        db.close()
    _emit(
        args,
        summary,
        f"rerun: {summary['done']} resumed, {summary['failed']} failed "
        f"of {summary['rerun']} selected",
    )
    return 1 if summary["failed"] else 0


def cmd_lossplot(args) -> int:
    db = store_mod.init_db(args.db)
    try:
        records = [
            r
            for r in db.query_runs(args.where, with_meta=True)
            if r.status == "done" and r.curve_path
        ]
    finally:
        db.close()
    curves = [read_curve(r.curve_path) for r in records]
    written = analysis.save_lossplots(records, curves, args.out)
    _emit(
        args,
        {"plots": [str(p) for p in written]},
        f"wrote {len(written)} loss plots to {args.out}",
    )
    return 0


def cmd_metaplot(args) -> int:
    text = Path(args.config).read_text()
    db = store_mod.init_db(args.db)
    try:
        records = [
            r for r in db.query_runs(args.where, with_meta=True) if r.status == "done"
        ]
    finally:
        db.close()
    manifest = analysis.save_metaplots(records, text, args.out, dump_csv=args.csv)
    made = sum(1 for p in manifest["plots"] if p["file"])
    _emit(
        args,
        manifest,
        f"wrote {made} comparison plots to {args.out} (manifest.json updated)",
    )
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "monitor": cmd_monitor,
    "rerun": cmd_rerun,
    "lossplot": cmd_lossplot,
    "metaplot": cmd_metaplot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except GridrunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
