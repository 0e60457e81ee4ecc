"""Run manager: executes pipelines in a bounded pool of worker processes.

Each run is an OS process speaking the line-delimited JSON protocol; the
parent supervises them from lightweight reader threads but keeps every
database write on its own thread, so the store has exactly one writer.
Worker stderr goes to a per-run log file.  A worker failure (crash,
protocol violation, diverged loss) marks only its own run as failed; the
pool keeps draining.

Seeds: run seed = stable hash of (global_seed, pipeline_hash, mult_index);
dataset seed = stable hash of (global_seed, pipeline_hash), so repetitions
of one pipeline share their dataset but differ in initialization/shuffling.
"""

from __future__ import annotations

import json
import math
import os
import queue
import subprocess
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .config import MonitorParams
from .errors import GridrunError
from .indicators import compute_all, read_curve
from .pipelines import PipelineSpec
from .protocol import (
    ENV_CACHE_PATH,
    ENV_CACHE_SIZE,
    ENV_DATASET_SEED,
    ENV_RESOURCE_TOKEN,
    ProtocolError,
    encode,
    parse_line,
    validate_worker_event,
)
from .store import RunRecord, Store
from .util import stable_seed
from .worker import is_builtin_class


class RunnerError(GridrunError):
    pass


class StageResolutionError(RunnerError):
    pass


class PluginProtocolError(RunnerError):
    pass


class CheckpointMissing(RunnerError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunContext:
    monitor: MonitorParams
    global_seed: int = 0
    literal_slope_normalization: bool = False
    extra_env: dict = field(default_factory=dict)


def run_id_for(pipeline_hash: str, mult_index: int) -> str:
    return f"{pipeline_hash}#{mult_index}"


def run_seed(global_seed: int, pipeline_hash: str, mult_index: int) -> int:
    return stable_seed(global_seed, pipeline_hash, mult_index)


def dataset_seed(global_seed: int, pipeline_hash: str) -> int:
    return stable_seed(global_seed, pipeline_hash)


def resolve_worker_argv(pipeline: PipelineSpec) -> list[str]:
    """Choose the worker program for a pipeline.

    All stage classes built-in -> the bundled worker.  Otherwise every
    non-built-in stage must name the same path_to_class, which is executed
    as an external plugin worker speaking the same protocol.
    """
    external = [s for s in pipeline.stages if not is_builtin_class(s.class_name)]
    if not external:
        return [sys.executable, "-u", "-m", "gridrun.worker"]
    paths = {s.path_to_class for s in external}
    if len(paths) > 1:
        raise StageResolutionError(
            f"pipeline {pipeline.label!r}: conflicting plugin paths {sorted(paths)}"
        )
    path = paths.pop()
    if not path:
        raise StageResolutionError(
            f"pipeline {pipeline.label!r}: class {external[0].class_name!r} "
            "is not built-in and has no path_to_class"
        )
    if not Path(path).exists():
        raise StageResolutionError(f"plugin not found: {path}")
    if path.endswith(".py"):
        return [sys.executable, "-u", path]
    if path.endswith((".js", ".mjs")):
        return ["node", path]
    if os.access(path, os.X_OK):
        return [path]
    raise StageResolutionError(f"cannot execute plugin {path!r}")


@dataclass
class _WorkerOutcome:
    status: str  # done | failed
    failure_reason: str | None = None
    info: dict = field(default_factory=dict)
    epochs_seen: int = 0
    curve_path: str | None = None
    checkpoint_path: str | None = None
    runtime_s: float = 0.0


def _drive_worker(
    argv: list[str],
    command: dict,
    env: dict,
    log_path: Path,
    start_epoch: int = 0,
) -> _WorkerOutcome:
    """Spawn one worker process and consume its event stream."""
    started = time.monotonic()
    outcome = _WorkerOutcome(status="failed")
    with open(log_path, "wb") as log_file:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=log_file,
            env=env,
            text=True,
        )
        try:
            proc.stdin.write(encode(command) + "\n")
            proc.stdin.flush()
            proc.stdin.close()
        except BrokenPipeError:
            pass

        last_epoch = start_epoch
        terminal = None
        try:
            for line in proc.stdout:
                if not line.strip():
                    continue
                event = parse_line(line)
                kind = validate_worker_event(event)
                if kind == "info":
                    outcome.info.update(event["fields"])
                elif kind == "epoch":
                    epoch = event["epoch"]
                    if epoch != last_epoch + 1:
                        raise ProtocolError(
                            f"epoch numbering broken: expected {last_epoch + 1}, got {epoch}"
                        )
                    last_epoch = epoch
                    outcome.epochs_seen += 1
                    train_loss, test_loss = event["train_loss"], event["test_loss"]
                    for value in (train_loss, test_loss):
                        if value is None or not math.isfinite(value):
                            raise _Diverged()
                elif kind in ("done", "error"):
                    terminal = event
                    break
        except _Diverged:
            proc.kill()
            outcome.failure_reason = "diverged"
            proc.wait()
            outcome.runtime_s = time.monotonic() - started
            return outcome
        except ProtocolError as exc:
            proc.kill()
            proc.wait()
            outcome.failure_reason = f"protocol: {exc}"
            outcome.runtime_s = time.monotonic() - started
            return outcome

        returncode = proc.wait()
        outcome.runtime_s = time.monotonic() - started
        if terminal is None:
            outcome.failure_reason = (
                f"worker exited with code {returncode} without a terminal event"
            )
        elif terminal["event"] == "error":
            outcome.status = "failed"
            outcome.failure_reason = terminal["message"]
        else:
            outcome.status = "done"
            outcome.curve_path = terminal["curve"]
            outcome.checkpoint_path = terminal["checkpoint"]
    return outcome


class _Diverged(Exception):
    pass


def _worker_env(ctx: RunContext, pipeline: PipelineSpec, token: str | None) -> dict:
    env = dict(os.environ)
    env.update(ctx.extra_env)
    env[ENV_DATASET_SEED] = str(dataset_seed(ctx.global_seed, pipeline.pipeline_hash))
    if ctx.monitor.cache_size > 0:
        env[ENV_CACHE_PATH] = str(ctx.monitor.cache_database_path)
        env[ENV_CACHE_SIZE] = str(ctx.monitor.cache_size)
    else:
        env.pop(ENV_CACHE_PATH, None)
        env.pop(ENV_CACHE_SIZE, None)
    if token is not None:
        env[ENV_RESOURCE_TOKEN] = token
    else:
        env.pop(ENV_RESOURCE_TOKEN, None)
    return env


def execute_pipeline(
    pipeline: PipelineSpec,
    mult_index: int,
    ctx: RunContext,
    *,
    resume_from: str | None = None,
    epochs: int | None = None,
    start_epoch: int = 0,
    resource_token: str | None = None,
    argv: list[str] | None = None,
) -> RunRecord:
    """Execute one run to completion and return its filled record.

    The record's indicators are recomputed from the on-disk curve, so a
    resumed run is scored over its full concatenated history.
    """
    rid = run_id_for(pipeline.pipeline_hash, mult_index)
    seed = run_seed(ctx.global_seed, pipeline.pipeline_hash, mult_index)
    record = RunRecord(
        run_id=rid,
        pipeline_hash=pipeline.pipeline_hash,
        label=pipeline.label,
        mult_index=mult_index,
        status="running",
        pipeline_json=json.dumps(pipeline.to_dict()),
        started_at=_now(),
        keys=pipeline.keys,
    )

    run_dir = Path(pipeline.process.run_files_path)
    run_dir.mkdir(parents=True, exist_ok=True)
    log_path = run_dir / f"{pipeline.pipeline_hash}_{seed:016x}.log"
    record.log_path = str(log_path)

    if argv is None:
        try:
            argv = resolve_worker_argv(pipeline)
        except StageResolutionError as exc:
            record.status = "failed"
            record.failure_reason = str(exc)
            record.finished_at = _now()
            return record

    command = {
        "cmd": "run",
        "pipeline": pipeline.to_dict(),
        "epochs": pipeline.process.epochs if epochs is None else epochs,
        "lr": pipeline.process.lr,
        "loss_function": pipeline.process.loss_function,
        "seed": seed,
        "resume_from": resume_from,
        "resource_token": resource_token,
    }
    outcome = _drive_worker(
        argv,
        command,
        _worker_env(ctx, pipeline, resource_token),
        log_path,
        start_epoch=start_epoch,
    )

    record.finished_at = _now()
    record.runtime_s = outcome.runtime_s
    record.info = outcome.info
    if "nb_params" in outcome.info:
        try:
            record.nb_params = int(outcome.info["nb_params"])
        except (TypeError, ValueError):
            pass

    if outcome.status != "done":
        record.status = "failed"
        record.failure_reason = outcome.failure_reason
        return record

    try:
        curve = read_curve(outcome.curve_path)
        indicators = compute_all(
            curve, outcome.runtime_s, ctx.literal_slope_normalization
        )
    except GridrunError as exc:
        record.status = "failed"
        record.failure_reason = f"result invalid: {exc}"
        return record

    record.status = "done"
    record.epochs = curve.n
    record.curve_path = outcome.curve_path
    record.checkpoint_path = outcome.checkpoint_path
    record.final_train_loss = indicators.final_train_loss
    record.final_test_loss = indicators.final_test_loss
    record.overfitting = indicators.overfitting
    record.slope_mean = indicators.slope_mean
    record.slope_sigma_plus = indicators.slope_sigma_plus
    record.slope_sigma_minus = indicators.slope_sigma_minus
    record.trainability = indicators.trainability
    return record


@dataclass
class _Task:
    pipeline: PipelineSpec
    mult_index: int
    run_id: str
    argv: list[str] | None  # None when resolution failed
    resolution_error: str | None = None
    resume_from: str | None = None
    epochs: int | None = None
    start_epoch: int = 0
    base_record: RunRecord | None = None  # rerun: record being extended


def _pool_bound(monitor: MonitorParams) -> int:
    if monitor.need_gpu:
        if not monitor.gpu_available:
            raise RunnerError("need_gpu is set but gpu_available is empty")
        return min(monitor.nb_processus, len(monitor.gpu_available))
    return monitor.nb_processus


def _run_pool(
    tasks: list[_Task],
    ctx: RunContext,
    on_result,
    on_launch=None,
    trace: list | None = None,
) -> None:
    """Drain tasks through a bounded pool.  Worker threads only supervise
    subprocess I/O; on_launch and on_result both run on this (the single
    writer) thread."""
    bound = _pool_bound(ctx.monitor)
    tokens = deque(ctx.monitor.gpu_available) if ctx.monitor.need_gpu else None
    results: queue.Queue = queue.Queue()
    pending = deque(tasks)
    active = 0

    def supervise(task: _Task, token: str | None) -> None:
        record = execute_pipeline(
            task.pipeline,
            task.mult_index,
            ctx,
            resume_from=task.resume_from,
            epochs=task.epochs,
            start_epoch=task.start_epoch,
            resource_token=token,
            argv=task.argv,
        )
        results.put((task, record, token))

    while pending or active:
        while pending and active < bound:
            task = pending.popleft()
            token = tokens.popleft() if tokens is not None else None
            active += 1
            if on_launch is not None:
                on_launch(task)
            if trace is not None:
                trace.append(("launch", task.run_id, active))
            threading.Thread(
                target=supervise, args=(task, token), daemon=True
            ).start()
        task, record, token = results.get()
        active -= 1
        if token is not None:
            tokens.append(token)
        if trace is not None:
            trace.append(("finish", task.run_id, active))
        on_result(task, record)


def schedule(
    pipelines: list[PipelineSpec],
    monitor: MonitorParams,
    store: Store,
    *,
    global_seed: int = 0,
    literal_slope_normalization: bool = False,
    trace: list | None = None,
) -> dict:
    """Execute every pipeline `multiplicity` times under the concurrency
    bound; individual failures are recorded, never fatal.  Returns counts
    per final status."""
    ctx = RunContext(
        monitor=monitor,
        global_seed=global_seed,
        literal_slope_normalization=literal_slope_normalization,
    )
    _pool_bound(monitor)  # validate token configuration up front

    tasks: list[_Task] = []
    pending_records: list[RunRecord] = []
    argv_by_hash: dict[str, tuple[list[str] | None, str | None]] = {}
    for pipeline in pipelines:
        if pipeline.pipeline_hash not in argv_by_hash:
            try:
                argv_by_hash[pipeline.pipeline_hash] = (resolve_worker_argv(pipeline), None)
            except StageResolutionError as exc:
                argv_by_hash[pipeline.pipeline_hash] = (None, str(exc))
        argv, error = argv_by_hash[pipeline.pipeline_hash]
        for mult_index in range(monitor.multiplicity):
            rid = run_id_for(pipeline.pipeline_hash, mult_index)
            tasks.append(
                _Task(
                    pipeline=pipeline,
                    mult_index=mult_index,
                    run_id=rid,
                    argv=argv,
                    resolution_error=error,
                )
            )
            pending_records.append(
                RunRecord(
                    run_id=rid,
                    pipeline_hash=pipeline.pipeline_hash,
                    label=pipeline.label,
                    mult_index=mult_index,
                    status="pending",
                    pipeline_json=json.dumps(pipeline.to_dict()),
                    keys=pipeline.keys,
                )
            )

    store.upsert_many(pending_records)

    summary = {"done": 0, "failed": 0}
    unresolved = [t for t in tasks if t.argv is None]
    if unresolved:
        now = _now()
        store.fail_runs(
            [(t.run_id, t.resolution_error) for t in unresolved], finished_at=now
        )
        summary["failed"] += len(unresolved)

    runnable = [t for t in tasks if t.argv is not None]

    def on_launch(task: _Task) -> None:
        store.update_run(task.run_id, status="running", started_at=_now())

    def on_result(task: _Task, record: RunRecord) -> None:
        store.upsert_run(record)
        summary[record.status] = summary.get(record.status, 0) + 1

    _run_pool(runnable, ctx, on_result, on_launch=on_launch, trace=trace)

    summary["total"] = len(tasks)
    return summary


def rerun(
    store: Store,
    monitor: MonitorParams,
    where: str,
    extra_epochs: int,
    *,
    global_seed: int = 0,
    literal_slope_normalization: bool = False,
) -> dict:
    """Resume completed runs matching `where` for extra_epochs more epochs.

    Each run restarts from its checkpoint (parameters, optimizer and RNG
    state restored bit-exactly), its curve grows in place, and indicators
    are recomputed over the full history.
    """
    if extra_epochs < 0:
        raise RunnerError("extra_epochs must be >= 0")
    candidates = [r for r in store.query_runs(where) if r.status == "done"]
    if not candidates:
        return {"rerun": 0, "done": 0, "failed": 0}

    for record in candidates:
        if not record.checkpoint_path or not Path(record.checkpoint_path).exists():
            raise CheckpointMissing(
                f"run {record.run_id}: checkpoint {record.checkpoint_path!r} not found"
            )

    ctx = RunContext(
        monitor=monitor,
        global_seed=global_seed,
        literal_slope_normalization=literal_slope_normalization,
    )
    tasks = []
    for record in candidates:
        pipeline = PipelineSpec.from_dict(json.loads(record.pipeline_json))
        argv = resolve_worker_argv(pipeline)  # StageResolutionError aborts the rerun
        tasks.append(
            _Task(
                pipeline=pipeline,
                mult_index=record.mult_index,
                run_id=record.run_id,
                argv=argv,
                resume_from=record.checkpoint_path,
                epochs=extra_epochs,
                start_epoch=record.epochs or 0,
                base_record=record,
            )
        )

    summary = {"rerun": len(tasks), "done": 0, "failed": 0}

    def on_result(task: _Task, record: RunRecord) -> None:
        base = task.base_record
        if record.status != "done":
            # resume failed: keep the old record but surface the reason
            store.update_run(
                base.run_id,
                failure_reason=f"rerun failed: {record.failure_reason}",
                finished_at=record.finished_at,
            )
            summary["failed"] += 1
            return
        new_runtime = base.runtime_s or 0.0
        if extra_epochs > 0:
            new_runtime += record.runtime_s or 0.0
        store.update_run(
            base.run_id,
            status="done",
            epochs=record.epochs,
            runtime_s=new_runtime,
            final_train_loss=record.final_train_loss,
            final_test_loss=record.final_test_loss,
            overfitting=record.overfitting,
            slope_mean=record.slope_mean,
            slope_sigma_plus=record.slope_sigma_plus,
            slope_sigma_minus=record.slope_sigma_minus,
            trainability=record.trainability,
            curve_path=record.curve_path,
            checkpoint_path=record.checkpoint_path,
            finished_at=record.finished_at,
        )
        if record.info:
            store.merge_info(base.run_id, record.info)
        summary["done"] += 1

    _run_pool(tasks, ctx, on_result)
    return summary
