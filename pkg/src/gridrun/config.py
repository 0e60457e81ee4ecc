"""Experiment configuration: INI parsing and the value-expansion grammar.

An experiment file has two mandatory sections, MONITOR (run-manager knobs)
and PROCESS (training hyperparameters and the stage schemes), plus one
section per stage type used in the schemes.  Parameter values may be single
scalars, comma-separated lists, `{a-b}` integer ranges or `{v1, v2}`
explicit sets; every combination of expanded values later becomes its own
pipeline.
"""

from __future__ import annotations

import configparser
import io
import math
import re
from dataclasses import dataclass, field

from .errors import GridrunError

MONITOR_SECTION = "MONITOR"
PROCESS_SECTION = "PROCESS"

# Stage-section keys that configure the stage itself rather than a
# hyperparameter of the underlying class.
RESERVED_STAGE_KEYS = ("type", "class", "path_to_class", "key")

_MONITOR_KEYS = {
    "need_gpu",
    "gpu_available",
    "nb_processus",
    "multiplicity",
    "cache_database_path",
    "cache_size",
}
_PROCESS_KEYS = {
    "lr",
    "epochs",
    "loss_function",
    "data_scheme",
    "pipeline_scheme",
    "run_files_path",
}


class ConfigError(GridrunError):
    pass


class MissingSection(ConfigError):
    pass


class UnknownSchemeType(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class ConfigSyntaxError(ConfigError):
    def __init__(self, message: str, lineno: int | None = None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


class MalformedRange(ConfigError):
    pass


class EmptyValue(ConfigError):
    pass


class MalformedSize(ConfigError):
    pass


Scalar = int | float | bool | str


@dataclass
class MonitorParams:
    need_gpu: bool = False
    gpu_available: list[str] = field(default_factory=list)
    nb_processus: int = 1
    multiplicity: int = 1
    cache_database_path: str = "./cache"
    cache_size: int = 0

    def validate(self) -> None:
        if self.nb_processus < 1:
            raise ConfigError("nb_processus must be >= 1")
        if self.multiplicity < 1:
            raise ConfigError("multiplicity must be >= 1")
        if self.cache_size < 0:
            raise ConfigError("cache_size must be >= 0")

    def to_dict(self) -> dict:
        return {
            "need_gpu": self.need_gpu,
            "gpu_available": list(self.gpu_available),
            "nb_processus": self.nb_processus,
            "multiplicity": self.multiplicity,
            "cache_database_path": self.cache_database_path,
            "cache_size": self.cache_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonitorParams":
        return cls(
            need_gpu=d.get("need_gpu", False),
            gpu_available=list(d.get("gpu_available", [])),
            nb_processus=d.get("nb_processus", 1),
            multiplicity=d.get("multiplicity", 1),
            cache_database_path=d.get("cache_database_path", "./cache"),
            cache_size=d.get("cache_size", 0),
        )


@dataclass
class ProcessParams:
    lr: float
    epochs: int
    loss_function: str = "MSELoss"
    data_scheme: list[str] = field(default_factory=list)
    pipeline_scheme: list[str] = field(default_factory=list)
    run_files_path: str = ".runs"

    def validate(self) -> None:
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        # Four epochs is the minimum for the convergence-slope windows.
        if self.epochs < 4:
            raise ConfigError("epochs must be >= 4")
        if not self.data_scheme and not self.pipeline_scheme:
            raise ConfigError("data_scheme and pipeline_scheme are both empty")

    @property
    def scheme(self) -> list[str]:
        """Full ordered slot list: data stages then model stages."""
        return list(self.data_scheme) + list(self.pipeline_scheme)

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "epochs": self.epochs,
            "loss_function": self.loss_function,
            "data_scheme": list(self.data_scheme),
            "pipeline_scheme": list(self.pipeline_scheme),
            "run_files_path": self.run_files_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessParams":
        return cls(
            lr=d["lr"],
            epochs=d["epochs"],
            loss_function=d.get("loss_function", "MSELoss"),
            data_scheme=list(d.get("data_scheme", [])),
            pipeline_scheme=list(d.get("pipeline_scheme", [])),
            run_files_path=d.get("run_files_path", ".runs"),
        )


@dataclass
class StageSection:
    section_name: str
    stage_type: str
    class_name: str
    path_to_class: str = ""
    key_template: str | None = None
    # Declaration-ordered mapping param name -> expanded value list.
    params: dict[str, list[Scalar]] = field(default_factory=dict)


@dataclass
class ConfigSpec:
    monitor: MonitorParams
    process: ProcessParams
    sections: list[StageSection]

    def sections_for_type(self, stage_type: str) -> list[StageSection]:
        return [s for s in self.sections if s.stage_type == stage_type]

    def validate(self) -> None:
        self.monitor.validate()
        self.process.validate()
        for name in self.process.scheme:
            if not self.sections_for_type(name):
                raise UnknownSchemeType(
                    f"scheme names type {name!r} but no section declares it"
                )
        for sec in self.sections:
            for pname, values in sec.params.items():
                if not values:
                    raise EmptyValue(f"[{sec.section_name}] {pname} has no values")


def parse_scalar(token: str) -> Scalar:
    """Parse one scalar token: int, then float, then boolean, else string."""
    token = token.strip()
    if token == "":
        raise EmptyValue("empty value item")
    try:
        return int(token)
    except ValueError:
        pass
    try:
        value = float(token)
        # "nan"/"inf" satisfy float() but are never meaningful hyperparameter
        # values; keep them as strings so they fail loudly downstream.
        if math.isfinite(value):
            return value
    except ValueError:
        pass
    low = token.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    return token


def _split_top_level(raw: str) -> list[str]:
    """Split on commas that are not inside braces."""
    items: list[str] = []
    depth = 0
    current: list[str] = []
    for ch in raw:
        if ch == "{":
            depth += 1
            current.append(ch)
        elif ch == "}":
            depth -= 1
            if depth < 0:
                raise ConfigSyntaxError(f"unbalanced braces in {raw!r}")
            current.append(ch)
        elif ch == "," and depth == 0:
            items.append("".join(current))
            current = []
        else:
            current.append(ch)
    if depth != 0:
        raise ConfigSyntaxError(f"unbalanced braces in {raw!r}")
    items.append("".join(current))
    return items


_RANGE_RE = re.compile(r"^(-?\d+)\s*-\s*(-?\d+)$")


def _expand_braced(body: str, original: str) -> list[Scalar]:
    body = body.strip()
    if body == "":
        raise EmptyValue(f"empty braces in {original!r}")
    match = _RANGE_RE.match(body)
    if match:
        lo, hi = int(match.group(1)), int(match.group(2))
        if lo > hi:
            raise MalformedRange(f"range {{{body}}}: {lo} > {hi}")
        return list(range(lo, hi + 1))
    if "," in body:
        return [parse_scalar(tok) for tok in body.split(",")]
    # A dash inside braces that did not parse as an integer range is a
    # malformed range ("{2.5-4}", "{a-c}"); anything else is a one-element set.
    if "-" in body.lstrip("-"):
        raise MalformedRange(f"non-integer range bounds in {{{body}}}")
    return [parse_scalar(body)]


def expand_values(raw: str) -> list[Scalar]:
    """Expand a raw value string into its declaration-ordered scalar list.

    Grammar: comma-separated items, where an item is a scalar, an inclusive
    integer range ``{a-b}`` or an explicit set ``{v1, v2, ...}``.
    Duplicates are preserved.

    >>> expand_values("{2-4},8")
    [2, 3, 4, 8]
    """
    if raw.strip() == "":
        raise EmptyValue("empty value string")
    out: list[Scalar] = []
    for item in _split_top_level(raw):
        item = item.strip()
        if item == "":
            raise EmptyValue(f"empty item in {raw!r}")
        if item.startswith("{") and item.endswith("}"):
            out.extend(_expand_braced(item[1:-1], raw))
        else:
            out.append(parse_scalar(item))
    return out


_SIZE_RE = re.compile(r"^\s*(\d+)\s*([kKmMgG]?)\s*$")
_SIZE_FACTORS = {"": 1, "k": 1024, "m": 1024**2, "g": 1024**3}


def parse_size(raw: str) -> int:
    """Parse a byte count with optional K/M/G suffix (powers of 1024)."""
    match = _SIZE_RE.match(str(raw))
    if not match:
        raise MalformedSize(f"cannot parse size {raw!r}")
    return int(match.group(1)) * _SIZE_FACTORS[match.group(2).lower()]


def _split_names(raw: str) -> list[str]:
    """Scheme lists accept commas (canonical) or pipes as separators."""
    parts = [p.strip() for p in re.split(r"[,|]", raw)]
    return [p for p in parts if p]


def _parse_monitor(items: dict[str, str]) -> MonitorParams:
    unknown = set(items) - _MONITOR_KEYS
    if unknown:
        raise UnknownKey(f"unknown MONITOR keys: {sorted(unknown)}")
    mp = MonitorParams()
    if "need_gpu" in items:
        val = parse_scalar(items["need_gpu"])
        if not isinstance(val, bool):
            raise ConfigError(f"need_gpu must be a boolean, got {items['need_gpu']!r}")
        mp.need_gpu = val
    if "gpu_available" in items:
        mp.gpu_available = [str(v) for v in expand_values(items["gpu_available"])]
    if "nb_processus" in items:
        mp.nb_processus = int(items["nb_processus"])
    if "multiplicity" in items:
        mp.multiplicity = int(items["multiplicity"])
    if "cache_database_path" in items:
        mp.cache_database_path = items["cache_database_path"].strip()
    if "cache_size" in items:
        mp.cache_size = parse_size(items["cache_size"])
    return mp


def _parse_process(items: dict[str, str]) -> ProcessParams:
    unknown = set(items) - _PROCESS_KEYS
    if unknown:
        raise UnknownKey(f"unknown PROCESS keys: {sorted(unknown)}")
    for required in ("lr", "epochs"):
        if required not in items:
            raise ConfigError(f"PROCESS is missing {required!r}")
    return ProcessParams(
        lr=float(items["lr"]),
        epochs=int(items["epochs"]),
        loss_function=items.get("loss_function", "MSELoss").strip(),
        data_scheme=_split_names(items.get("data_scheme", "")),
        pipeline_scheme=_split_names(items.get("pipeline_scheme", "")),
        run_files_path=items.get("run_files_path", ".runs").strip(),
    )


def _parse_stage_section(name: str, items: dict[str, str]) -> StageSection:
    if "type" not in items:
        raise ConfigError(f"section [{name}] is missing 'type'")
    params: dict[str, list[Scalar]] = {}
    for key, raw in items.items():
        if key in RESERVED_STAGE_KEYS:
            continue
        params[key] = expand_values(raw)
    return StageSection(
        section_name=name,
        stage_type=items["type"].strip(),
        class_name=items.get("class", name).strip(),
        path_to_class=items.get("path_to_class", "").strip(),
        key_template=items.get("key", None),
        params=params,
    )


def parse_config(text: str) -> ConfigSpec:
    """Parse INI experiment text into a validated ConfigSpec."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigSyntaxError(str(exc.message), exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigSyntaxError(str(exc), lineno) from exc
    except configparser.Error as exc:
        raise ConfigSyntaxError(str(exc)) from exc

    section_names = list(parser.sections())
    if MONITOR_SECTION not in section_names:
        raise MissingSection("MONITOR section is required")
    if PROCESS_SECTION not in section_names:
        raise MissingSection("PROCESS section is required")

    monitor = _parse_monitor(dict(parser[MONITOR_SECTION]))
    process = _parse_process(dict(parser[PROCESS_SECTION]))
    sections = [
        _parse_stage_section(name, dict(parser[name]))
        for name in section_names
        if name not in (MONITOR_SECTION, PROCESS_SECTION)
    ]
    spec = ConfigSpec(monitor=monitor, process=process, sections=sections)
    spec.validate()
    return spec


def parse_config_file(path) -> ConfigSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _render_value(value: Scalar) -> str:
    return str(value)


def serialize_config(spec: ConfigSpec) -> str:
    """Render a ConfigSpec back to INI text.

    Value lists are written in expanded form, so parse_config(serialize_config(c))
    round-trips to an equal ConfigSpec (comments and whitespace aside).
    """
    out = io.StringIO()
    out.write(f"[{MONITOR_SECTION}]\n")
    mon = spec.monitor
    out.write(f"need_gpu = {mon.need_gpu}\n")
    if mon.gpu_available:
        out.write(f"gpu_available = {', '.join(mon.gpu_available)}\n")
    out.write(f"nb_processus = {mon.nb_processus}\n")
    out.write(f"multiplicity = {mon.multiplicity}\n")
    out.write(f"cache_database_path = {mon.cache_database_path}\n")
    out.write(f"cache_size = {mon.cache_size}\n\n")

    proc = spec.process
    out.write(f"[{PROCESS_SECTION}]\n")
    out.write(f"lr = {proc.lr}\n")
    out.write(f"epochs = {proc.epochs}\n")
    out.write(f"loss_function = {proc.loss_function}\n")
    if proc.data_scheme:
        out.write(f"data_scheme = {', '.join(proc.data_scheme)}\n")
    if proc.pipeline_scheme:
        out.write(f"pipeline_scheme = {', '.join(proc.pipeline_scheme)}\n")
    out.write(f"run_files_path = {proc.run_files_path}\n")

    for sec in spec.sections:
        out.write(f"\n[{sec.section_name}]\n")
        out.write(f"type = {sec.stage_type}\n")
        out.write(f"class = {sec.class_name}\n")
        if sec.path_to_class:
            out.write(f"path_to_class = {sec.path_to_class}\n")
        if sec.key_template is not None:
            out.write(f"key = {sec.key_template}\n")
        for pname, values in sec.params.items():
            out.write(f"{pname} = {', '.join(_render_value(v) for v in values)}\n")
    return out.getvalue()
