"""Static figures from evaluation CSVs (bars, detector curves, metric tables).

Rendering is deterministic: the Agg backend, default style and PNG metadata
without a software/timestamp field.
"""

from __future__ import annotations

import csv
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

REQUIRED = {
    "abx": ("metric", "layer", "value"),
    "pnmi": ("metric", "layer", "value"),
    "table": ("metric", "layer", "value"),
    "words": ("layer", "threshold", "tokens"),
}


def read_rows(path, kind: str) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no rows")
    missing = [c for c in REQUIRED[kind] if c not in cols]
    if missing:
        raise ValueError(f"{path}: schema mismatch for {kind!r} plot, missing columns {missing}")
    return rows


def _grouped_bars(ax, groups: Sequence[str], series: "OrderedDict[str, Dict[str, float]]", ylabel: str):
    n = max(1, len(series))
    width = 0.8 / n
    for i, (label, values) in enumerate(series.items()):
        xs = [g + (i - (n - 1) / 2) * width for g in range(len(groups))]
        ax.bar(xs, [values.get(g, 0.0) for g in groups], width=width, label=label)
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels(groups, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    if n > 1:
        ax.legend()


def render(kind: str, paths: Sequence, labels: Sequence[str], out) -> Path:
    """Draw one figure of ``kind`` with one series per CSV in ``paths``."""
    if kind not in REQUIRED:
        raise ValueError(f"unknown plot kind {kind!r}")
    data = [read_rows(p, kind) for p in paths]
    plt.rcdefaults()
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=100)
    if kind in ("abx", "pnmi"):
        series: "OrderedDict[str, Dict[str, float]]" = OrderedDict()
        groups: List[str] = []
        for label, rows in zip(labels, data):
            vals = {}
            for r in rows:
                if (kind == "pnmi" and r["metric"] != "pnmi") or (kind == "abx" and not r["metric"].startswith("abx")):
                    continue
                key = r["layer"] if kind == "pnmi" else f"{r['metric'][4:]} {r['layer']}".strip()
                vals[key] = float(r["value"])
                if key not in groups:
                    groups.append(key)
            series[label] = vals
        if not groups:
            plt.close(fig)
            raise ValueError(f"no rows with {kind} metrics")
        _grouped_bars(ax, groups, series, "ABX error" if kind == "abx" else "PNMI")
    elif kind == "words":
        for label, rows in zip(labels, data):
            by_layer: "OrderedDict[str, list]" = OrderedDict()
            for r in rows:
                by_layer.setdefault(r["layer"], []).append((float(r["threshold"]), int(r["tokens"])))
            for layer, pts in by_layer.items():
                pts.sort()
                name = layer if len(data) == 1 else f"{label} {layer}"
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
        ax.set_xlabel("F1 threshold")
        ax.set_ylabel("tokens with F1 above threshold")
        ax.legend()
    else:
        keys: List[str] = []
        cells: Dict[tuple, str] = {}
        for label, rows in zip(labels, data):
            for r in rows:
                key = f"{r['metric']} {r['layer']}".strip()
                if key not in keys:
                    keys.append(key)
                cells[(key, label)] = f"{float(r['value']):.3f}"
        ax.axis("off")
        table = ax.table(
            cellText=[[cells.get((k, l), "") for l in labels] for k in keys],
            rowLabels=keys,
            colLabels=list(labels),
            loc="center",
        )
        table.auto_set_font_size(False)
        table.set_fontsize(8)
    fig.tight_layout()
    out = Path(out)
    fig.savefig(out, format="png", metadata={"Software": None})
    plt.close(fig)
    return out
