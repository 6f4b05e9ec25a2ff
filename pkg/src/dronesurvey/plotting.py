"""Grouped-bar figure data and a dependency-free SVG renderer.

Bars are grouped by survey unit, one bar per method, with confidence
whiskers where both interval bounds exist. The CSV table and the SVG
figure are generated from the same BarDatum list, and every SVG bar
carries the CSV's exact density text in a data attribute, so the two
output modes cannot drift apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .data_io import _fmt, _write_csv
from .errors import ValidationError

__all__ = [
    "BarDatum", "bars_from_estimate_files", "plot_table",
    "write_plot_csv", "render_grouped_bars_svg",
]

PLOT_COLUMNS = ("survey_unit", "method", "density_per_km2",
                "ci_low", "ci_high")

# drone extrapolations in shades of green, camera-trap control in orange
_METHOD_COLORS = {"naive": "#a1d99b", "bootstrap": "#41ab5d",
                  "zinb": "#006d2c", "rem": "#d95f0e"}
_FALLBACK_COLORS = ("#6baed6", "#9e9ac8", "#fdae6b", "#969696",
                    "#e377c2", "#8c564b")


@dataclass(frozen=True)
class BarDatum:
    """One bar: a method's density estimate for one survey unit."""

    survey_unit: str
    method: str
    density_per_km2: float
    ci_low: float | None = None
    ci_high: float | None = None

    def __post_init__(self):
        if not self.survey_unit or not self.method:
            raise ValidationError("bar needs non-empty unit and method")
        if not math.isfinite(self.density_per_km2) \
                or self.density_per_km2 < 0:
            raise ValidationError(
                f"bar density must be finite and >= 0, got "
                f"{self.density_per_km2}")
        if (self.ci_low is None) != (self.ci_high is None):
            raise ValidationError(
                f"bar for {self.survey_unit}/{self.method} has only one "
                f"confidence bound; need both or neither")
        if self.ci_low is not None and self.ci_low > self.ci_high:
            raise ValidationError(
                f"confidence bounds out of order: [{self.ci_low}, "
                f"{self.ci_high}]")


def bars_from_estimate_files(paths) -> list[BarDatum]:
    """Flatten estimate files into bars, keeping file order.

    Each file is a JSON object {"survey_unit": str, "estimates": [rows]}
    as written by the estimation commands; a row needs at least `method`
    and `density_per_km2`.
    """
    bars: list[BarDatum] = []
    for path in paths:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ValidationError(f"cannot read estimate file {path}: {e}") \
                from e
        except json.JSONDecodeError as e:
            raise ValidationError(
                f"estimate file {path} is not valid JSON: {e}") from e
        unit = obj.get("survey_unit")
        rows = obj.get("estimates")
        if not unit or not isinstance(rows, list) or not rows:
            raise ValidationError(
                f"estimate file {path} must carry survey_unit and a "
                f"non-empty estimates list")
        for k, row in enumerate(rows):
            try:
                lo, hi = row.get("ci_low"), row.get("ci_high")
                bars.append(BarDatum(
                    survey_unit=str(unit), method=str(row["method"]),
                    density_per_km2=float(row["density_per_km2"]),
                    ci_low=None if lo is None else float(lo),
                    ci_high=None if hi is None else float(hi)))
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(
                    f"estimate file {path}, row {k}: {e}") from e
    if not bars:
        raise ValidationError("no estimates to plot")
    return bars


def _first_seen(items) -> list[str]:
    out: list[str] = []
    for item in items:
        if item not in out:
            out.append(item)
    return out


def plot_table(bars: list[BarDatum]) -> list[tuple[str, str, str, str, str]]:
    """The exact text table both output modes share, in render order."""
    if not bars:
        raise ValidationError("no estimates to plot")
    units = _first_seen(b.survey_unit for b in bars)
    methods = _first_seen(b.method for b in bars)
    index = {(b.survey_unit, b.method): b for b in bars}
    if len(index) != len(bars):
        dupes = len(bars) - len(index)
        raise ValidationError(
            f"{dupes} duplicate (survey_unit, method) bar(s)")
    rows = []
    for unit in units:
        for method in methods:
            b = index.get((unit, method))
            if b is None:
                continue
            rows.append((b.survey_unit, b.method, _fmt(b.density_per_km2),
                         "" if b.ci_low is None else _fmt(b.ci_low),
                         "" if b.ci_high is None else _fmt(b.ci_high)))
    return rows


def write_plot_csv(bars: list[BarDatum], target) -> None:
    _write_csv(target, PLOT_COLUMNS, plot_table(bars))


def _nice_ceiling(value: float) -> float:
    """Smallest 1/2/5 ladder number >= value, for a tidy axis maximum."""
    if value <= 0.0:
        return 1.0
    exp = math.floor(math.log10(value))
    for mult in (1.0, 2.0, 5.0, 10.0):
        cap = mult * 10.0 ** exp
        if cap >= value * (1.0 - 1e-12):
            return cap
    return 10.0 ** (exp + 1)


def _tick_values(axis_max: float, n: int = 5) -> list[float]:
    step = axis_max / n
    return [round(step * i, 10) for i in range(n + 1)]


def _color_for(method: str, methods: list[str]) -> str:
    if method in _METHOD_COLORS:
        return _METHOD_COLORS[method]
    extras = [m for m in methods if m not in _METHOD_COLORS]
    return _FALLBACK_COLORS[extras.index(method) % len(_FALLBACK_COLORS)]


def _coord(v: float) -> str:
    text = f"{v:.2f}"
    return "0.00" if text == "-0.00" else text


def render_grouped_bars_svg(bars: list[BarDatum], *, width: int = 900,
                            height: int = 480,
                            title: str = "Density by survey unit and method",
                            y_label: str = "Density (animals per km2)",
                            ) -> str:
    """Render the grouped-bar chart as a standalone SVG string.

    Geometry is derived from the same rows plot_table emits; each bar rect
    repeats its row's density text in data-density so the figure can be
    audited against the CSV byte for byte.
    """
    rows = plot_table(bars)
    units = _first_seen(r[0] for r in rows)
    methods = _first_seen(r[1] for r in rows)
    peak = max(max(float(r[2]), float(r[4] or 0.0)) for r in rows)
    axis_max = _nice_ceiling(peak * 1.05)
    margin_left, margin_right = 64.0, 16.0
    margin_top, margin_bottom = 48.0, 56.0
    plot_w = width - margin_left - margin_right
    plot_h = height - margin_top - margin_bottom
    if plot_w <= 0 or plot_h <= 0:
        raise ValidationError(f"figure {width}x{height} is too small")

    def y_of(value: float) -> float:
        return margin_top + plot_h * (1.0 - value / axis_max)

    cluster_w = plot_w / len(units)
    slot_w = cluster_w / (len(methods) + 1)  # one slot of padding per cluster
    bar_w = slot_w * 0.9

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<title>{escape(title)}</title>',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_coord(width / 2)}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{escape(title)}</text>',
        f'<text x="16" y="{_coord(margin_top + plot_h / 2)}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {_coord(margin_top + plot_h / 2)})">'
        f'{escape(y_label)}</text>',
    ]
    for tick in _tick_values(axis_max):
        y = y_of(tick)
        parts.append(
            f'<line x1="{_coord(margin_left)}" y1="{_coord(y)}" '
            f'x2="{_coord(width - margin_right)}" y2="{_coord(y)}" '
            f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(
            f'<text x="{_coord(margin_left - 6)}" y="{_coord(y + 4)}" '
            f'text-anchor="end" font-family="sans-serif" font-size="11">'
            f'{tick:g}</text>')
    by_key = {(r[0], r[1]): r for r in rows}
    for ui, unit in enumerate(units):
        x0 = margin_left + ui * cluster_w + slot_w / 2
        for mi, method in enumerate(methods):
            row = by_key.get((unit, method))
            if row is None:
                continue
            density = float(row[2])
            x = x0 + mi * slot_w + (slot_w - bar_w) / 2
            top = y_of(density)
            parts.append(
                f'<rect class="bar" x="{_coord(x)}" y="{_coord(top)}" '
                f'width="{_coord(bar_w)}" '
                f'height="{_coord(y_of(0.0) - top)}" '
                f'fill="{_color_for(method, methods)}" '
                f'data-unit={quoteattr(row[0])} '
                f'data-method={quoteattr(row[1])} '
                f'data-density={quoteattr(row[2])}/>')
            if row[3] != "":
                cx = x + bar_w / 2
                y_lo, y_hi = y_of(float(row[3])), y_of(float(row[4]))
                cap = bar_w * 0.3
                parts.append(
                    f'<g class="whisker" stroke="#333333" stroke-width="1.5" '
                    f'data-ci-low={quoteattr(row[3])} '
                    f'data-ci-high={quoteattr(row[4])}>'
                    f'<line x1="{_coord(cx)}" y1="{_coord(y_lo)}" '
                    f'x2="{_coord(cx)}" y2="{_coord(y_hi)}"/>'
                    f'<line x1="{_coord(cx - cap)}" y1="{_coord(y_lo)}" '
                    f'x2="{_coord(cx + cap)}" y2="{_coord(y_lo)}"/>'
                    f'<line x1="{_coord(cx - cap)}" y1="{_coord(y_hi)}" '
                    f'x2="{_coord(cx + cap)}" y2="{_coord(y_hi)}"/></g>')
        label_x = margin_left + (ui + 0.5) * cluster_w
        parts.append(
            f'<text class="unit-label" x="{_coord(label_x)}" '
            f'y="{_coord(height - margin_bottom + 18)}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="12">'
            f'{escape(unit)}</text>')
    parts.append(
        f'<line x1="{_coord(margin_left)}" y1="{_coord(y_of(0.0))}" '
        f'x2="{_coord(width - margin_right)}" y2="{_coord(y_of(0.0))}" '
        f'stroke="#000000" stroke-width="1"/>')
    legend_x = margin_left
    for mi, method in enumerate(methods):
        x = legend_x + mi * 130.0
        y = height - 18.0
        parts.append(
            f'<rect x="{_coord(x)}" y="{_coord(y - 10)}" width="12" '
            f'height="12" fill="{_color_for(method, methods)}"/>')
        parts.append(
            f'<text class="legend-label" x="{_coord(x + 18)}" '
            f'y="{_coord(y)}" font-family="sans-serif" font-size="12">'
            f'{escape(method)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
