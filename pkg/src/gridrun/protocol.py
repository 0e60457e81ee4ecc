"""Runner <-> worker wire protocol: line-delimited JSON over stdin/stdout.

The parent sends exactly one run command; the worker answers with a stream
of info and epoch events and exactly one terminal event (done or error).
The same validators back the conformance suite for external plugins, so a
worker written in any language is held to the same message schema.

parent -> worker:
    {"cmd": "run", "pipeline": {...}, "epochs": N, "lr": x,
     "loss_function": "MSELoss", "seed": u64,
     "resume_from": path|null, "resource_token": str|null}

worker -> parent:
    {"event": "info", "stage": str, "fields": {...}}        once per stage
    {"event": "epoch", "epoch": e, "train_loss": x, "test_loss": y}
    {"event": "done", "checkpoint": path, "curve": path}    terminal
    {"event": "error", "message": str}                      terminal
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import GridrunError

ENV_RESOURCE_TOKEN = "GRIDRUN_RESOURCE_TOKEN"
ENV_DATASET_SEED = "GRIDRUN_DATASET_SEED"
ENV_CACHE_PATH = "GRIDRUN_CACHE_PATH"
ENV_CACHE_SIZE = "GRIDRUN_CACHE_SIZE"


class ProtocolError(GridrunError):
    pass


def encode(message: dict) -> str:
    """One protocol line (no trailing newline)."""
    return json.dumps(message, separators=(",", ":"))


def parse_line(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"not valid JSON: {line[:120]!r}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError(f"message must be a JSON object, got {type(obj).__name__}")
    return obj


def _require(obj: dict, key: str, types, what: str):
    if key not in obj:
        raise ProtocolError(f"{what}: missing field {key!r}")
    value = obj[key]
    allowed = types if isinstance(types, tuple) else (types,)
    # bool is an int subclass; only accept it where bool is explicitly allowed
    if isinstance(value, bool) and bool not in allowed:
        raise ProtocolError(f"{what}: field {key!r} has type bool")
    if not isinstance(value, allowed):
        raise ProtocolError(f"{what}: field {key!r} has type {type(value).__name__}")
    return value


_SCALAR_TYPES = (str, int, float, bool, type(None))


def validate_pipeline_dict(pipeline: Any) -> None:
    """Check a pipeline payload against the pipeline JSON schema."""
    what = "pipeline"
    if not isinstance(pipeline, dict):
        raise ProtocolError(f"{what}: must be an object")
    _require(pipeline, "hash", str, what)
    _require(pipeline, "label", str, what)
    process = _require(pipeline, "process", dict, what)
    _require(process, "lr", (int, float), "pipeline.process")
    _require(process, "epochs", int, "pipeline.process")
    _require(process, "loss_function", str, "pipeline.process")
    _require(process, "run_files_path", str, "pipeline.process")
    for scheme in ("data_scheme", "pipeline_scheme"):
        value = _require(process, scheme, list, "pipeline.process")
        if not all(isinstance(v, str) for v in value):
            raise ProtocolError(f"pipeline.process.{scheme}: entries must be strings")
    stages = _require(pipeline, "stages", list, what)
    for i, stage in enumerate(stages):
        where = f"pipeline.stages[{i}]"
        if not isinstance(stage, dict):
            raise ProtocolError(f"{where}: must be an object")
        for field in ("section", "type", "class", "path"):
            _require(stage, field, str, where)
        if stage.get("key") is not None and not isinstance(stage["key"], str):
            raise ProtocolError(f"{where}: key must be a string or null")
        params = _require(stage, "params", dict, where)
        for name, value in params.items():
            if not isinstance(value, _SCALAR_TYPES):
                raise ProtocolError(f"{where}: param {name!r} is not a scalar")


def validate_run_command(obj: Any) -> dict:
    if not isinstance(obj, dict):
        raise ProtocolError("run command must be a JSON object")
    what = "run command"
    if obj.get("cmd") != "run":
        raise ProtocolError(f"{what}: cmd must be 'run', got {obj.get('cmd')!r}")
    validate_pipeline_dict(_require(obj, "pipeline", dict, what))
    epochs = _require(obj, "epochs", int, what)
    if epochs < 0:
        raise ProtocolError(f"{what}: epochs must be >= 0")
    _require(obj, "lr", (int, float), what)
    _require(obj, "loss_function", str, what)
    seed = _require(obj, "seed", int, what)
    if seed < 0:
        raise ProtocolError(f"{what}: seed must be a non-negative integer")
    if "resume_from" not in obj or (
        obj["resume_from"] is not None and not isinstance(obj["resume_from"], str)
    ):
        raise ProtocolError(f"{what}: resume_from must be a path or null")
    if "resource_token" not in obj or (
        obj["resource_token"] is not None and not isinstance(obj["resource_token"], str)
    ):
        raise ProtocolError(f"{what}: resource_token must be a string or null")
    return obj


def _check_loss(value: Any, name: str, strict_finite: bool) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float, type(None))):
        raise ProtocolError(f"epoch event: {name} must be a number")
    if strict_finite and (value is None or not math.isfinite(value)):
        raise ProtocolError(f"epoch event: {name} must be finite, got {value!r}")


def validate_worker_event(obj: Any, strict_finite: bool = False) -> str:
    """Validate one worker->parent event; returns its kind.

    With strict_finite=True (conformance checking), epoch losses must be
    finite numbers; the runner itself is laxer and treats a non-finite
    loss as a diverged run rather than a protocol violation.
    """
    if not isinstance(obj, dict):
        raise ProtocolError("worker event must be a JSON object")
    kind = obj.get("event")
    if kind == "info":
        _require(obj, "stage", str, "info event")
        fields = _require(obj, "fields", dict, "info event")
        for name, value in fields.items():
            if not isinstance(value, _SCALAR_TYPES):
                raise ProtocolError(f"info event: field {name!r} is not a scalar")
    elif kind == "epoch":
        epoch = _require(obj, "epoch", int, "epoch event")
        if epoch < 1:
            raise ProtocolError(f"epoch event: epoch must be >= 1, got {epoch}")
        _check_loss(obj.get("train_loss"), "train_loss", strict_finite)
        _check_loss(obj.get("test_loss"), "test_loss", strict_finite)
        if "train_loss" not in obj or "test_loss" not in obj:
            raise ProtocolError("epoch event: train_loss and test_loss are required")
    elif kind == "done":
        _require(obj, "checkpoint", str, "done event")
        _require(obj, "curve", str, "done event")
    elif kind == "error":
        _require(obj, "message", str, "error event")
    else:
        raise ProtocolError(f"unknown worker event {kind!r}")
    return kind


def validate_event_stream(
    lines: list[str], expect_epochs: int | None = None, start_epoch: int = 0
) -> list[dict]:
    """Validate a full worker output stream (conformance helper).

    Checks every line parses and validates strictly, that exactly one
    terminal event arrives last, and that epoch numbering is contiguous
    from start_epoch+1.
    """
    events = []
    for line in lines:
        if not line.strip():
            continue
        obj = parse_line(line)
        validate_worker_event(obj, strict_finite=True)
        events.append(obj)
    if not events:
        raise ProtocolError("empty event stream")
    terminal = [e for e in events if e["event"] in ("done", "error")]
    if len(terminal) != 1 or events[-1]["event"] not in ("done", "error"):
        raise ProtocolError("stream must end with exactly one terminal event")
    epochs = [e["epoch"] for e in events if e["event"] == "epoch"]
    expected_first = start_epoch + 1
    for i, e in enumerate(epochs):
        if e != expected_first + i:
            raise ProtocolError(
                f"epoch numbering broken: expected {expected_first + i}, got {e}"
            )
    if expect_epochs is not None and len(epochs) != expect_epochs:
        raise ProtocolError(
            f"expected {expect_epochs} epoch events, got {len(epochs)}"
        )
    return events
