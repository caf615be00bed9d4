"""Canonical report serialization, CSV emission, and figure rendering.

Reports serialize to canonical JSON: sorted keys, floats fixed to 12
significant digits, so identical runs produce byte-identical files suitable
for golden-file diffs.  The figure helpers render PNGs next to the
delimited output when a figures directory is requested.
"""
from __future__ import annotations

import csv
import json
import math
import os
from typing import Any, Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402


def _canonical(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): _canonical(obj[k]) for k in obj}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(format(x, ".12g"))
    return obj


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, 12-significant-digit floats."""
    return json.dumps(_canonical(obj), sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


def serialize_report(report: Any) -> bytes:
    """Canonical bytes for any report object exposing to_dict (or a dict)."""
    data = report.to_dict() if hasattr(report, "to_dict") else report
    return canonical_json(data).encode("utf-8")


def write_report(path: str, report: Any) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_report(report))


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".12g") if isinstance(v, float) else v
                        for v in row])


def scenario_csv(report, path: str) -> None:
    """Sweep data of a scenario report as one delimited table."""
    data = report.data
    keys = [k for k, v in data.items()
            if isinstance(v, list) and v and isinstance(v[0], (int, float))]
    if not keys:
        return
    n = max(len(data[k]) for k in keys)
    rows = []
    for i in range(n):
        rows.append([data[k][i] if i < len(data[k]) else "" for k in keys])
    write_csv(path, keys, rows)


# -- figures ---------------------------------------------------------------------


def _edge_offsets(graph) -> dict[str, float]:
    off = {}
    x = 0.0
    for e in graph.edges:
        off[e.id] = x
        x += e.length
    return off


def fig_eigenfunctions(res, path: str, k: int | None = None) -> None:
    """Eigenfunctions laid out edge-by-edge along one arclength axis."""
    off = _edge_offsets(res.graph)
    k = k if k is not None else res.k
    fig, ax = plt.subplots(figsize=(9, 4.5))
    colors = plt.cm.tab10.colors
    for n in range(min(k, res.k)):
        for i, e in enumerate(res.graph.edges):
            xs = res.mesh.nodes[e.id] + off[e.id]
            ax.plot(xs, res.funcs[e.id][n], color=colors[n % 10],
                    label=f"u{n + 1}" if i == 0 else None, lw=1.2)
    for e in res.graph.edges:
        ax.axvline(off[e.id], color="0.85", lw=0.8, zorder=0)
        ax.text(off[e.id] + 0.5 * e.length, ax.get_ylim()[1], e.id,
                ha="center", va="bottom", fontsize=8, color="0.4")
    ax.axhline(0.0, color="0.8", lw=0.8, zorder=0)
    ax.set_xlabel("arclength (edges laid end to end)")
    ax.set_ylabel("eigenfunction value")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_potential(q, path: str, title: str = "potential") -> None:
    off = _edge_offsets(q.graph)
    fig, ax = plt.subplots(figsize=(9, 3.2))
    for e in q.graph.edges:
        prof = q.profile(e.id)
        for i in range(len(prof.breaks) - 1):
            xs = [prof.breaks[i] + off[e.id], prof.breaks[i + 1] + off[e.id]]
            ys = [prof.outgoing[i], prof.incoming[i + 1]]
            ax.plot(xs, ys, color="tab:blue", lw=1.5)
        ax.axvline(off[e.id], color="0.85", lw=0.8, zorder=0)
    ax.set_xlabel("arclength (edges laid end to end)")
    ax.set_ylabel("q")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_scenario(report, outdir: str) -> list[str]:
    """Sweep figures for a scenario report; returns the files written."""
    data = report.data
    written = []
    xkey = "t" if "t" in data else ("n" if "n" in data else None)
    if xkey is None:
        return written
    x = data[xkey]
    series = [k for k in data
              if k != xkey and isinstance(data[k], list)
              and len(data[k]) == len(x)
              and all(isinstance(v, (int, float)) for v in data[k])]
    if not series:
        return written
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for k in series:
        ax.plot(x, data[k], marker="o", ms=3.5, lw=1.2, label=k)
    if xkey == "t" and len(x) > 1 and max(x) / max(min([v for v in x if v > 0],
                                                       default=1), 1e-12) > 50:
        ax.set_xscale("symlog", linthresh=max(min([v for v in x if v > 0],
                                                  default=1.0), 1e-12))
    ax.set_xlabel(xkey)
    ax.legend(fontsize=8)
    ax.set_title(report.name, fontsize=10)
    fig.tight_layout()
    path = os.path.join(outdir, f"{report.name}_sweep.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def fig_optimizer_trace(result, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    if result.trace:
        idx = [i for i, _ in result.trace]
        val = [v for _, v in result.trace]
        ax.plot(idx, val, ".", ms=2.5, alpha=0.4, label="feasible evaluations")
        best = np.minimum.accumulate(val) if result.direction == "min" \
            else np.maximum.accumulate(val)
        ax.plot(idx, best, lw=1.5, color="tab:red", label="best so far")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("gap")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
