"""CSV and SVG writers plus run manifests."""

from __future__ import annotations

import datetime
import hashlib
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            raise ValueError(f"refusing to write non-finite value {v!r}")
        return repr(v)
    text = str(value)
    if any(c in text for c in ',"\n'):
        raise ValueError(f"cell {text!r} needs quoting; plain tokens only")
    return text


def csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows and columns is None:
        raise ValueError("no rows and no columns: cannot determine a header")
    columns = list(columns or rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        missing = [c for c in columns if c not in row]
        if missing:
            raise ValueError(f"row lacks columns {missing}")
        lines.append(",".join(_format_cell(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def emit_csv(rows: list[dict], path, columns: list[str] | None = None) -> Path:
    """Header row first, then one record per line; floats are written with ``repr``
    so they read back bit-exact."""
    path = Path(path)
    text = csv_text(rows, columns)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_csv_rows(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for k, c in zip(header, cells):
            try:
                row[k] = float(c)
            except ValueError:
                row[k] = c
        out.append(row)
    return out


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def emit_svg_lineplot(series: list, labels: list[str], path, title: str = "", xlabel: str = "",
                      ylabel: str = "", log_y: bool = False, width: int = 640, height: int = 420) -> Path:
    """Standalone SVG line plot. ``series`` is a list of ``(xs, ys)`` pairs."""
    if not series:
        raise ValueError("nothing to plot")
    if len(labels) != len(series):
        raise ValueError("need one label per series")
    clean = []
    for xs, ys in series:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if xs.shape != ys.shape or xs.size == 0:
            raise ValueError("each series needs equal-length, non-empty x and y")
        if log_y:
            ys = np.log10(np.maximum(ys, 1e-300))
        clean.append((xs, ys))

    left, right, top, bottom = 70, 150, 40, 50
    xs_all = np.concatenate([c[0] for c in clean])
    ys_all = np.concatenate([c[1] for c in clean])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - left - right, height - top - bottom

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (1.0 - (v - y0) / (y1 - y0)) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        parts.append(f'<line x1="{sx(v):.2f}" y1="{top + ph}" x2="{sx(v):.2f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{sx(v):.2f}" y="{top + ph + 16}" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        label = f"1e{v:.2g}" if log_y else f"{v:.3g}"
        parts.append(f'<line x1="{left - 4}" y1="{sy(v):.2f}" x2="{left}" y2="{sy(v):.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{sy(v) + 4:.2f}" text-anchor="end">{escape(label)}</text>')
    if title:
        parts.append(f'<text x="{left + pw / 2}" y="{top - 15}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    if xlabel:
        parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        text = ("log10 " if log_y else "") + ylabel
        parts.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
                     f'transform="rotate(-90 15 {top + ph / 2})">{escape(text)}</text>')
    for k, ((xs, ys), label) in enumerate(zip(clean, labels)):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 * k + 10
        parts.append(f'<g class="legend-entry"><line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
                     f'<text x="{left + pw + 35}" y="{ly + 4}">{escape(label)}</text></g>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, settings: dict, seeds: list[int], inputs: list, outputs: list) -> Path:
    """JSON record of everything needed to re-run: the resolved settings, seeds
    and hashes of every input and output file."""
    doc = {
        "command": command,
        "settings": settings,
        "seeds": list(seeds),
        "inputs": {str(p): file_hash(p) for p in inputs},
        "outputs": {Path(p).name: file_hash(p) for p in outputs},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
