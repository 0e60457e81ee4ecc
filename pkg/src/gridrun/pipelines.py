"""Pipeline generation: expand a ConfigSpec into concrete pipelines.

Every scheme slot is filled by one stage instance; sections sharing a type
are alternatives (summed), parameter values within a section are crossed
(multiplied).  Each pipeline gets a human-readable label, the rendered
grouping keys of its stages, and a stable content hash that serves as its
identity on disk and in the result store.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigSpec, MonitorParams, ProcessParams, Scalar, StageSection
from .errors import GridrunError
from .util import atomic_write, content_hash

DEFAULT_PIPELINE_LIMIT = 10**6

MANIFEST_NAME = "manifest.json"


class PipelineError(GridrunError):
    pass


class ExplosionGuard(PipelineError):
    pass


class UnknownPlaceholder(PipelineError):
    pass


class CorruptPipelineFile(PipelineError):
    pass


class IoError(PipelineError):
    pass


@dataclass
class StageInstance:
    section_name: str
    stage_type: str
    class_name: str
    path_to_class: str = ""
    # Declaration-ordered mapping param name -> the single chosen value.
    params: dict[str, Scalar] = field(default_factory=dict)
    key: str | None = None

    def to_dict(self) -> dict:
        return {
            "section": self.section_name,
            "type": self.stage_type,
            "class": self.class_name,
            "path": self.path_to_class,
            "key": self.key,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageInstance":
        return cls(
            section_name=d["section"],
            stage_type=d["type"],
            class_name=d["class"],
            path_to_class=d.get("path", ""),
            params=dict(d.get("params", {})),
            key=d.get("key"),
        )


@dataclass
class PipelineSpec:
    stages: list[StageInstance]
    process: ProcessParams
    label: str
    pipeline_hash: str

    @property
    def keys(self) -> set[str]:
        return {s.key for s in self.stages if s.key}

    def to_dict(self) -> dict:
        return {
            "hash": self.pipeline_hash,
            "label": self.label,
            "process": self.process.to_dict(),
            "stages": [s.to_dict() for s in self.stages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSpec":
        return cls(
            stages=[StageInstance.from_dict(s) for s in d["stages"]],
            process=ProcessParams.from_dict(d["process"]),
            label=d["label"],
            pipeline_hash=d["hash"],
        )


def pipeline_label(stages: list[StageInstance]) -> str:
    """Minimal non-ambiguous run label: `section(v1,v2)` per stage, joined by |."""
    parts = []
    for stage in stages:
        values = ",".join(str(v) for v in stage.params.values())
        parts.append(f"{stage.section_name}({values})")
    return "|".join(parts)


_PLACEHOLDER_RE = re.compile(r"\{([^{}]+)\}")


def render_key(template: str, stage: StageInstance) -> str:
    """Substitute `{class}`, `{type}` and `{param}` placeholders with the
    stage's concrete values."""

    def replace(match: re.Match) -> str:
        name = match.group(1)
        if name == "class":
            return stage.class_name
        if name == "type":
            return stage.stage_type
        if name in stage.params:
            return str(stage.params[name])
        raise UnknownPlaceholder(
            f"key template {template!r}: unknown placeholder {{{name}}}"
        )

    return _PLACEHOLDER_RE.sub(replace, template)


def _hash_pipeline(stages: list[StageInstance], process: ProcessParams) -> str:
    # run_files_path is an output location, not part of the experiment's
    # identity; leaving it out keeps run ids stable across machines.
    process_dict = process.to_dict()
    process_dict.pop("run_files_path")
    content = {
        "process": process_dict,
        "stages": [s.to_dict() for s in stages],
    }
    return content_hash(content)


def make_pipeline(stages: list[StageInstance], process: ProcessParams) -> PipelineSpec:
    return PipelineSpec(
        stages=stages,
        process=process,
        label=pipeline_label(stages),
        pipeline_hash=_hash_pipeline(stages, process),
    )


def _section_instances(section: StageSection) -> list[StageInstance]:
    """Cross the section's parameter value lists (row-major: the last declared
    parameter varies fastest)."""
    names = list(section.params.keys())
    value_lists = [section.params[n] for n in names]
    instances = []
    for combo in itertools.product(*value_lists):
        stage = StageInstance(
            section_name=section.section_name,
            stage_type=section.stage_type,
            class_name=section.class_name,
            path_to_class=section.path_to_class,
            params=dict(zip(names, combo)),
        )
        if section.key_template is not None:
            stage.key = render_key(section.key_template, stage)
        instances.append(stage)
    return instances


def count_pipelines(cfg: ConfigSpec) -> int:
    """Closed-form pipeline count: product over slots of the per-type sums."""
    total = 1
    for slot_type in cfg.process.scheme:
        slot_count = 0
        for section in cfg.sections_for_type(slot_type):
            combos = 1
            for values in section.params.values():
                combos *= len(values)
            slot_count += combos
        total *= slot_count
    return total


def generate_pipelines(
    cfg: ConfigSpec, limit: int = DEFAULT_PIPELINE_LIMIT
) -> list[PipelineSpec]:
    """Expand the config into the full cartesian set of pipelines.

    Ordering is deterministic: scheme slots left to right, sections in
    declaration order within a slot, parameter combinations row-major.
    """
    expected = count_pipelines(cfg)
    if expected > limit:
        raise ExplosionGuard(
            f"{expected} pipelines exceed the limit of {limit}; "
            "raise the limit explicitly if this is intended"
        )

    slot_instances: list[list[StageInstance]] = []
    for slot_type in cfg.process.scheme:
        instances: list[StageInstance] = []
        for section in cfg.sections_for_type(slot_type):
            instances.extend(_section_instances(section))
        slot_instances.append(instances)

    pipelines = []
    seen: dict[str, PipelineSpec] = {}
    for combo in itertools.product(*slot_instances):
        pipeline = make_pipeline(list(combo), cfg.process)
        clash = seen.get(pipeline.pipeline_hash)
        if clash is not None and clash.to_dict() != pipeline.to_dict():
            raise PipelineError(
                f"content hash collision between {clash.label!r} and {pipeline.label!r}"
            )
        seen[pipeline.pipeline_hash] = pipeline
        pipelines.append(pipeline)
    assert len(pipelines) == expected
    return pipelines


def persist_pipelines(
    directory: str | Path,
    pipelines: list[PipelineSpec],
    monitor: MonitorParams | None = None,
) -> dict:
    """Write one `<hash>.json` per pipeline plus an ordered manifest.

    The manifest carries the ordered hash list and, when given, the MONITOR
    settings, so a pipeline directory is self-contained for `run`.  Files
    are written atomically (temp + rename), so a concurrent reader never
    observes a torn pipeline file.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for pipeline in pipelines:
            payload = json.dumps(pipeline.to_dict(), indent=1)
            atomic_write(directory / f"{pipeline.pipeline_hash}.json", payload)
        manifest = {"pipelines": [p.pipeline_hash for p in pipelines]}
        if monitor is not None:
            manifest["monitor"] = monitor.to_dict()
        atomic_write(directory / MANIFEST_NAME, json.dumps(manifest, indent=1))
    except OSError as exc:
        raise IoError(f"cannot persist pipelines to {directory}: {exc}") from exc
    return manifest


def load_manifest_monitor(directory: str | Path) -> MonitorParams:
    """MONITOR settings stored alongside the pipelines (defaults if absent)."""
    manifest_path = Path(directory) / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptPipelineFile(f"{manifest_path}: {exc}") from exc
    return MonitorParams.from_dict(manifest.get("monitor", {}))


def load_pipelines(directory: str | Path) -> list[PipelineSpec]:
    """Inverse of persist_pipelines; verifies each file's content hash."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptPipelineFile(f"{manifest_path}: {exc}") from exc

    pipelines = []
    for hash_hex in manifest.get("pipelines", []):
        path = directory / f"{hash_hex}.json"
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CorruptPipelineFile(f"{path}: {exc}") from exc
        pipeline = PipelineSpec.from_dict(data)
        recomputed = _hash_pipeline(pipeline.stages, pipeline.process)
        if recomputed != data.get("hash") or hash_hex != recomputed:
            raise CorruptPipelineFile(
                f"{path}: content hash mismatch (expected {hash_hex}, got {recomputed})"
            )
        pipelines.append(pipeline)
    return pipelines
