"""Result analysis: per-run loss plots and grouped comparison plots.

Comparison plots ("meta-plots") are driven by an INI file with a [global]
section and one [plot_N] section per figure.  Runs are filtered by
(field, match) pairs, grouped by their pipeline label after masking the
excluded parameters (mask values render as min-max ranges over the group),
and aggregated per abscissa value into mean and population std of the
ordinate.  Output is deterministic standalone SVG 1.1 text, one file per
plot, plus a JSON manifest and an optional CSV dump of the grouped points.

Filter semantics: a field is resolved against the runs columns first (with
test_loss/train_loss aliases), then the run's info fields; a field found
in neither is matched against the run's keys, where each match value acts
as a regular-expression pattern.
"""

from __future__ import annotations

import configparser
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Scalar, parse_scalar
from .errors import GridrunError
from .indicators import LossCurve
from .store import COLUMN_ALIASES, RunRecord

PLOT_TYPES = ("line", "violin")
ERRORBAR_STYLES = ("bars", "filled")


class AnalysisError(GridrunError):
    pass


class UnknownField(AnalysisError):
    pass


class ArityMismatch(AnalysisError):
    pass


class MissingAxis(AnalysisError):
    pass


class UnknownAbscissa(AnalysisError):
    pass


class UnknownOrdinate(AnalysisError):
    pass


class MixedTypes(AnalysisError):
    pass


class EmptySample(AnalysisError):
    pass


# ---------------------------------------------------------------------------
# Plot configuration


@dataclass
class PlotSpec:
    name: str
    abscissae: str
    ordinates: str
    include_keys: list[str] = field(default_factory=list)
    include_values: list[list[Scalar]] = field(default_factory=list)
    excludes: list[str] = field(default_factory=list)
    plot_type: str = "line"
    errorbars_style: str = "bars"


_PLOT_FIELDS = {
    "abscissae",
    "ordinates",
    "include_keys",
    "include_values",
    "excludes",
    "plot_type",
    "errorbars_style",
}


def _split_bracketed(raw: str) -> list[str]:
    items, depth, current = [], 0, []
    for ch in raw:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise AnalysisError(f"unbalanced brackets in {raw!r}")
        elif ch == "," and depth == 0:
            items.append("".join(current).strip())
            current = []
            continue
        current.append(ch)
    if depth != 0:
        raise AnalysisError(f"unbalanced brackets in {raw!r}")
    items.append("".join(current).strip())
    return [item for item in items if item != ""]


def _parse_match_sets(raw: str) -> list[list[Scalar]]:
    """`[a, b], 3` -> [[a, b], [3]]: brackets mean any-of."""
    sets = []
    for item in _split_bracketed(raw):
        if item.startswith("[") and item.endswith("]"):
            inner = item[1:-1].strip()
            sets.append([parse_scalar(tok) for tok in inner.split(",")] if inner else [])
        else:
            sets.append([parse_scalar(item)])
    return sets


def _split_names(raw: str) -> list[str]:
    return [tok.strip() for tok in raw.split(",") if tok.strip()]


def parse_plot_config(text: str) -> tuple[dict, list[PlotSpec]]:
    """Parse the meta-plot INI: returns ({global settings}, [PlotSpec...])."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise AnalysisError(f"bad plot config: {exc}") from exc

    global_cfg = {"file_title": "metaplots"}
    if parser.has_section("global"):
        for key, value in parser["global"].items():
            if key != "file_title":
                raise UnknownField(f"[global]: unknown field {key!r}")
            # treated as an output basename; a trailing extension is dropped
            global_cfg["file_title"] = Path(value.strip()).stem

    specs = []
    for section in parser.sections():
        if section == "global":
            continue
        items = dict(parser[section])
        unknown = set(items) - _PLOT_FIELDS
        if unknown:
            raise UnknownField(f"[{section}]: unknown fields {sorted(unknown)}")
        if "abscissae" not in items or "ordinates" not in items:
            raise MissingAxis(f"[{section}]: abscissae and ordinates are required")
        include_keys = _split_names(items.get("include_keys", ""))
        include_values = _parse_match_sets(items.get("include_values", ""))
        if len(include_keys) != len(include_values):
            raise ArityMismatch(
                f"[{section}]: {len(include_keys)} include_keys vs "
                f"{len(include_values)} include_values"
            )
        plot_type = items.get("plot_type", "line").strip()
        if plot_type not in PLOT_TYPES:
            raise UnknownField(f"[{section}]: plot_type must be one of {PLOT_TYPES}")
        errorbars = items.get("errorbars_style", "bars").strip()
        if errorbars not in ERRORBAR_STYLES:
            raise UnknownField(
                f"[{section}]: errorbars_style must be one of {ERRORBAR_STYLES}"
            )
        specs.append(
            PlotSpec(
                name=section,
                abscissae=items["abscissae"].strip(),
                ordinates=items["ordinates"].strip(),
                include_keys=include_keys,
                include_values=include_values,
                excludes=_split_names(items.get("excludes", "")),
                plot_type=plot_type,
                errorbars_style=errorbars,
            )
        )
    return global_cfg, specs


# ---------------------------------------------------------------------------
# Selection and grouping


@dataclass
class SeriesPoint:
    abscissa: Scalar
    samples: list[float]
    mean: float
    std: float


@dataclass
class Series:
    masked_label: str
    points: list[SeriesPoint]


def resolve_field(record: RunRecord, name: str):
    """Runs columns (with aliases) first, then info fields; None otherwise."""
    column = COLUMN_ALIASES.get(name, name)
    if hasattr(record, column) and column not in ("keys", "info"):
        return getattr(record, column)
    if name in record.info:
        return record.info[name]
    return None


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _match_one(value, pattern) -> bool:
    if _is_number(value) and _is_number(pattern):
        return float(value) == float(pattern)
    if _is_number(value) or _is_number(pattern):
        try:
            return float(value) == float(pattern)
        except (TypeError, ValueError):
            return False
    if value == pattern:
        return True
    try:
        return re.fullmatch(str(pattern), str(value)) is not None
    except re.error:
        return False


def _matches_keys(record: RunRecord, patterns: list[Scalar]) -> bool:
    for key in record.keys:
        for pattern in patterns:
            try:
                if re.search(str(pattern), key):
                    return True
            except re.error:
                if str(pattern) in key:
                    return True
    return False


def _survives(record: RunRecord, spec: PlotSpec) -> bool:
    for name, patterns in zip(spec.include_keys, spec.include_values):
        value = resolve_field(record, name)
        if value is not None:
            if not any(_match_one(value, p) for p in patterns):
                return False
        elif not _matches_keys(record, patterns):
            return False
    return True


def _stage_params(record: RunRecord) -> list[tuple[str, list[tuple[str, Scalar]]]]:
    pipeline = json.loads(record.pipeline_json)
    return [
        (stage["section"], list(stage["params"].items()))
        for stage in pipeline["stages"]
    ]


def _render_mask(values: list[Scalar]) -> str:
    unique = sorted(set(values), key=lambda v: (str(type(v)), v))
    if len(unique) == 1:
        return str(unique[0])
    if all(_is_number(v) for v in unique):
        return f"{min(unique)}-{max(unique)}"
    return ",".join(str(v) for v in unique)


def select_and_group(records: list[RunRecord], spec: PlotSpec) -> list[Series]:
    """Filter records, group by masked label, aggregate per abscissa value.

    Records must carry their joined keys/info.  Every selected record lands
    in exactly one series and one point; each point carries the ordinate
    samples with their mean and population standard deviation.
    """
    selected = [r for r in records if _survives(r, spec)]
    if not selected:
        return []

    groups: dict[tuple, list[RunRecord]] = {}
    for record in selected:
        key_parts = []
        for section, params in _stage_params(record):
            key_parts.append(
                (
                    section,
                    tuple(
                        (name, None if name in spec.excludes else value)
                        for name, value in params
                    ),
                )
            )
        groups.setdefault(tuple(key_parts), []).append(record)

    series_list = []
    for group_key, members in sorted(groups.items(), key=lambda kv: str(kv[0])):
        # masked label: excluded params render as the range over the group
        parts = []
        for si, (section, params) in enumerate(_stage_params(members[0])):
            rendered = []
            for pi, (name, value) in enumerate(params):
                if name in spec.excludes:
                    values = [_stage_params(m)[si][1][pi][1] for m in members]
                    rendered.append(_render_mask(values))
                else:
                    rendered.append(str(value))
            parts.append(f"{section}({','.join(rendered)})")
        masked_label = "|".join(parts)

        buckets: dict[Scalar, list[float]] = {}
        for member in members:
            abscissa = resolve_field(member, spec.abscissae)
            if abscissa is None:
                raise UnknownAbscissa(
                    f"field {spec.abscissae!r} not found for run {member.run_id}"
                )
            ordinate = resolve_field(member, spec.ordinates)
            if ordinate is None:
                raise UnknownOrdinate(
                    f"field {spec.ordinates!r} not found for run {member.run_id}"
                )
            if not _is_number(ordinate):
                raise MixedTypes(
                    f"ordinate {spec.ordinates!r} is not numeric for run "
                    f"{member.run_id}: {ordinate!r}"
                )
            buckets.setdefault(abscissa, []).append(float(ordinate))

        points = []
        for abscissa in sorted(buckets, key=lambda v: (not _is_number(v), v)):
            samples = buckets[abscissa]
            arr = np.asarray(samples, dtype=float)
            points.append(
                SeriesPoint(
                    abscissa=abscissa,
                    samples=samples,
                    mean=float(arr.mean()),
                    std=float(arr.std()),
                )
            )
        series_list.append(Series(masked_label=masked_label, points=points))
    return series_list


# ---------------------------------------------------------------------------
# Kernel density estimation


def gaussian_kde(
    samples: list[float], grid_points: int = 256
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE with Silverman bandwidth, evaluated on a uniform grid
    spanning [min - 3h, max + 3h].

    Bandwidth: 0.9 * min(std, IQR/1.34) * N^(-1/5); when the dispersion
    term vanishes (constant or singleton sample) it falls back to
    max(1e-3, 1e-3 * |mean|).
    """
    if len(samples) == 0:
        raise EmptySample("KDE needs at least one sample")
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n >= 2:
        std = float(np.std(x, ddof=1))
        q25, q75 = np.percentile(x, [25, 75])
        dispersion = min(std, (q75 - q25) / 1.34)
    else:
        dispersion = 0.0
    h = 0.9 * dispersion * n ** (-1 / 5)
    if h <= 0.0:
        h = max(1e-3, 1e-3 * abs(float(np.mean(x))))
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_points)
    z = (grid[:, None] - x[None, :]) / h
    density = np.exp(-0.5 * z**2).sum(axis=1) / (n * h * math.sqrt(2 * math.pi))
    return grid, density


# ---------------------------------------------------------------------------
# SVG rendering


PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#e377c2",
)

_W, _H = 760, 520
_ML, _MR, _MT, _MB = 72, 24, 46, 58


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _escape(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


class _Scale:
    def __init__(self, lo: float, hi: float, out_lo: float, out_hi: float):
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise AnalysisError("cannot scale non-finite data")
        if hi == lo:
            lo, hi = lo - 1.0, hi + 1.0
        pad = 0.05 * (hi - lo)
        self.lo, self.hi = lo - pad, hi + pad
        self.out_lo, self.out_hi = out_lo, out_hi

    def __call__(self, value: float) -> float:
        frac = (value - self.lo) / (self.hi - self.lo)
        return self.out_lo + frac * (self.out_hi - self.out_lo)

    def ticks(self, target: int = 5) -> list[float]:
        span = self.hi - self.lo
        raw = span / max(target, 1)
        mag = 10 ** math.floor(math.log10(raw)) if raw > 0 else 1.0
        for mult in (1, 2, 5, 10):
            if raw <= mult * mag:
                step = mult * mag
                break
        first = math.ceil(self.lo / step) * step
        out = []
        t = first
        while t <= self.hi + 1e-12 * abs(step):
            out.append(0.0 if abs(t) < 1e-12 * abs(step) else t)
            t += step
        return out


def _svg_header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<title>{_escape(title)}</title>',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]


def _axes(sx: _Scale, sy: _Scale, x_label: str, y_label: str) -> list[str]:
    parts = [f'<g class="axes" stroke="black" fill="none" stroke-width="1">']
    parts.append(
        f'<path d="M {_ML} {_MT} L {_ML} {_H - _MB} L {_W - _MR} {_H - _MB}"/>'
    )
    parts.append("</g>")
    parts.append('<g class="ticks" font-family="monospace" font-size="11">')
    for t in sx.ticks():
        px = sx(t)
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{_H - _MB}" x2="{_fmt(px)}" '
            f'y2="{_H - _MB + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_fmt(px)}" y="{_H - _MB + 18}" text-anchor="middle">'
            f"{t:.4g}</text>"
        )
    for t in sy.ticks():
        py = sy(t)
        parts.append(
            f'<line x1="{_ML - 5}" y1="{_fmt(py)}" x2="{_ML}" y2="{_fmt(py)}" '
            f'stroke="black"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{_fmt(py + 4)}" text-anchor="end">{t:.4g}</text>'
        )
    parts.append("</g>")
    parts.append(
        f'<text class="xlabel" x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 16}" '
        f'text-anchor="middle" font-family="monospace" font-size="13">'
        f"{_escape(x_label)}</text>"
    )
    parts.append(
        f'<text class="ylabel" x="18" y="{(_MT + _H - _MB) / 2:.0f}" '
        f'text-anchor="middle" font-family="monospace" font-size="13" '
        f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2:.0f})">'
        f"{_escape(y_label)}</text>"
    )
    return parts


def _path(points: list[tuple[float, float]]) -> str:
    steps = [f"{'M' if i == 0 else 'L'} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(points)]
    return " ".join(steps)


def format_indicator_legend(record: RunRecord) -> str:
    return (
        f"overfit={record.overfitting:.4g}  "
        f"trainability={record.trainability:.4g}  "
        f"slope={record.slope_mean:.4g} "
        f"(+{record.slope_sigma_plus:.4g}/-{record.slope_sigma_minus:.4g})"
    )


def render_lossplot(record: RunRecord, curve: LossCurve) -> str:
    """Per-run loss plot: solid train curve, dashed test curve, legend with
    the run label and its indicators."""
    epochs = list(range(1, curve.n + 1))
    all_losses = curve.train + curve.test
    sx = _Scale(1, max(curve.n, 2), _ML, _W - _MR)
    sy = _Scale(min(all_losses), max(all_losses), _H - _MB, _MT)

    parts = _svg_header(f"loss curves: {record.run_id}")
    parts += _axes(sx, sy, "epoch", "loss")
    train_pts = [(sx(e), sy(v)) for e, v in zip(epochs, curve.train)]
    test_pts = [(sx(e), sy(v)) for e, v in zip(epochs, curve.test)]
    if curve.n == 1:
        parts.append(
            f'<circle class="curve-train" cx="{_fmt(train_pts[0][0])}" '
            f'cy="{_fmt(train_pts[0][1])}" r="4" fill="#1f77b4"/>'
        )
        parts.append(
            f'<circle class="curve-test" cx="{_fmt(test_pts[0][0])}" '
            f'cy="{_fmt(test_pts[0][1])}" r="4" fill="#d62728"/>'
        )
    else:
        parts.append(
            f'<path class="curve-train" d="{_path(train_pts)}" fill="none" '
            f'stroke="#1f77b4" stroke-width="1.5"/>'
        )
        parts.append(
            f'<path class="curve-test" d="{_path(test_pts)}" fill="none" '
            f'stroke="#d62728" stroke-width="1.5" stroke-dasharray="6,4"/>'
        )
    parts.append(
        f'<g class="legend" font-family="monospace" font-size="12">'
        f'<text x="{_ML + 8}" y="{_MT - 24}">{_escape(record.label)} '
        f"[{_escape(record.run_id)}]</text>"
        f'<text x="{_ML + 8}" y="{_MT - 8}">{_escape(format_indicator_legend(record))}'
        f"</text></g>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _numeric_abscissae(series_list: list[Series]) -> bool:
    return all(
        _is_number(p.abscissa) for s in series_list for p in s.points
    )


def render_metaplot(series_list: list[Series], spec: PlotSpec) -> str:
    """Comparison plot: one line per series with +-1 std error bars or a
    filled band, or per-abscissa violin silhouettes from a Gaussian KDE."""
    if not series_list:
        raise AnalysisError("no series to plot")
    for series in series_list:
        for point in series.points:
            if not all(_is_number(v) for v in point.samples):
                raise MixedTypes(f"non-numeric ordinate in series {series.masked_label!r}")

    numeric_x = _numeric_abscissae(series_list)
    positions: dict[Scalar, float] = {}
    if numeric_x:
        xs = [float(p.abscissa) for s in series_list for p in s.points]
    else:
        # categorical abscissae land on integer slots in sorted order
        categories = sorted({p.abscissa for s in series_list for p in s.points}, key=str)
        positions = {c: float(i) for i, c in enumerate(categories)}
        xs = list(positions.values())

    def xval(p: SeriesPoint) -> float:
        return float(p.abscissa) if numeric_x else positions[p.abscissa]

    ys: list[float] = []
    for s in series_list:
        for p in s.points:
            if spec.plot_type == "violin":
                ys.extend(p.samples)
            else:
                ys.append(p.mean - p.std)
                ys.append(p.mean + p.std)
    sx = _Scale(min(xs), max(xs), _ML, _W - _MR)
    sy = _Scale(min(ys), max(ys), _H - _MB, _MT)

    parts = _svg_header(f"{spec.ordinates} vs {spec.abscissae}")
    parts += _axes(sx, sy, spec.abscissae, spec.ordinates)

    for si, series in enumerate(series_list):
        color = PALETTE[si % len(PALETTE)]
        cls = f"series-{si}"
        pts = [(sx(xval(p)), sy(p.mean)) for p in series.points]
        if spec.plot_type == "violin":
            parts.append(_render_violins(series, si, color, sx, sy, xval))
        else:
            if spec.errorbars_style == "filled":
                upper = [(sx(xval(p)), sy(p.mean + p.std)) for p in series.points]
                lower = [(sx(xval(p)), sy(p.mean - p.std)) for p in series.points]
                ring = upper + lower[::-1]
                parts.append(
                    f'<path class="band {cls}" d="{_path(ring)} Z" fill="{color}" '
                    f'fill-opacity="0.2" stroke="none"/>'
                )
            else:
                bars = []
                for p in series.points:
                    px = sx(xval(p))
                    y1, y2 = sy(p.mean - p.std), sy(p.mean + p.std)
                    bars.append(
                        f'<path class="errorbar {cls}" d="M {_fmt(px)} {_fmt(y1)} '
                        f'L {_fmt(px)} {_fmt(y2)} M {_fmt(px - 4)} {_fmt(y1)} '
                        f'L {_fmt(px + 4)} {_fmt(y1)} M {_fmt(px - 4)} {_fmt(y2)} '
                        f'L {_fmt(px + 4)} {_fmt(y2)}" stroke="{color}" fill="none"/>'
                    )
                parts.extend(bars)
            if len(pts) == 1:
                parts.append(
                    f'<circle class="mean {cls}" cx="{_fmt(pts[0][0])}" '
                    f'cy="{_fmt(pts[0][1])}" r="3.5" fill="{color}"/>'
                )
            else:
                parts.append(
                    f'<path class="mean {cls}" d="{_path(pts)}" fill="none" '
                    f'stroke="{color}" stroke-width="1.5"/>'
                )

    legend_y = _MT + 6
    parts.append('<g class="legend" font-family="monospace" font-size="11">')
    for si, series in enumerate(series_list):
        color = PALETTE[si % len(PALETTE)]
        y = legend_y + 15 * si
        parts.append(
            f'<line x1="{_W - _MR - 220}" y1="{y - 4}" x2="{_W - _MR - 196}" '
            f'y2="{y - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_W - _MR - 190}" y="{y}">{_escape(series.masked_label)}</text>'
        )
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _render_violins(series: Series, si: int, color: str, sx, sy, xval) -> str:
    """Symmetric KDE silhouette per abscissa value; singleton samples fall
    back to a dot marker."""
    out = []
    max_half_px = 26.0
    for p in series.points:
        px = sx(xval(p))
        if len(p.samples) < 2:
            out.append(
                f'<circle class="violin-dot series-{si}" cx="{_fmt(px)}" '
                f'cy="{_fmt(sy(p.samples[0]))}" r="3.5" fill="{color}"/>'
            )
            continue
        grid, density = gaussian_kde(p.samples)
        peak = float(density.max())
        if peak <= 0:
            continue
        half = density / peak * max_half_px
        right = [(px + h, sy(g)) for g, h in zip(grid, half)]
        left = [(px - h, sy(g)) for g, h in zip(grid[::-1], half[::-1])]
        out.append(
            f'<path class="violin series-{si}" d="{_path(right + left)} Z" '
            f'fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="0.8"/>'
        )
    return "\n".join(out)


# ---------------------------------------------------------------------------
# File outputs


def save_lossplots(records, curves, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for record, curve in zip(records, curves):
        path = out_dir / f"loss_{record.run_id.replace('#', '_')}.svg"
        path.write_text(render_lossplot(record, curve))
        written.append(path)
    return written


def save_metaplots(
    records: list[RunRecord],
    plot_config_text: str,
    out_dir: str | Path,
    dump_csv: bool = False,
) -> dict:
    """Render every configured plot; returns the manifest (also written to
    manifest.json).  Empty selections yield a manifest entry with a warning
    instead of a file."""
    global_cfg, specs = parse_plot_config(plot_config_text)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = global_cfg["file_title"]
    manifest = {"plots": []}
    for spec in specs:
        series_list = select_and_group(records, spec)
        entry = {
            "section": spec.name,
            "abscissae": spec.abscissae,
            "ordinates": spec.ordinates,
            "plot_type": spec.plot_type,
            "errorbars_style": spec.errorbars_style,
            "series": len(series_list),
        }
        if not series_list:
            entry["file"] = None
            entry["warning"] = "empty selection"
            manifest["plots"].append(entry)
            continue
        file_name = f"{base}_{spec.name}.svg"
        (out_dir / file_name).write_text(render_metaplot(series_list, spec))
        entry["file"] = file_name
        if dump_csv:
            csv_name = f"{base}_{spec.name}.csv"
            lines = ["series,abscissa,mean,std,n"]
            for series in series_list:
                for p in series.points:
                    lines.append(
                        f'"{series.masked_label}",{p.abscissa},{p.mean!r},'
                        f"{p.std!r},{len(p.samples)}"
                    )
            (out_dir / csv_name).write_text("\n".join(lines) + "\n")
            entry["csv"] = csv_name
        manifest["plots"].append(entry)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest
