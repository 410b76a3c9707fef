"""Render figures from the sweep CSVs produced by the agesched CLI.

Each figure kind matches one --sweep output schema. Rendering is a pure
function of the CSV contents: the same file always yields the same plotted
points, and render() hands those points back (pulled out of the drawn
artists, not the parser) so callers can verify them against the file.
"""

import csv
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

KINDS = ("sources", "targets", "weighted", "single-source")

# columns each figure actually draws; extra columns are ignored
REQUIRED_COLUMNS: Dict[str, Tuple[str, ...]] = {
    "sources": ("delay_kind", "gamma", "n_sources", "aaoi_mean"),
    "targets": ("alpha1", "aaoi_s1_mean", "aaoi_s3_mean", "bound_s1", "bound_s3"),
    "weighted": ("delay_kind", "mu_scale", "gamma_scale", "wsaaoi_mean", "bound_3x"),
    "single-source": ("delay_kind", "gamma", "aaoi_spacing_gamma_mean",
                      "aaoi_best_mean", "aaoi_zero_wait_mean"),
}


class SchemaMismatch(Exception):
    """CSV does not carry the columns the requested figure needs."""

    def __init__(self, missing: Sequence[str], message: str = ""):
        self.missing = list(missing)
        if not message:
            message = "missing columns: " + ", ".join(self.missing)
        super().__init__(message)


@dataclass(frozen=True)
class FigureSpec:
    csv_path: str
    kind: str
    out_path: str


Series = Tuple[str, List[float], List[float]]


def load_rows(path: str, kind: str) -> List[Dict[str, str]]:
    if kind not in KINDS:
        raise ValueError(f"unknown figure kind {kind!r}; expected one of {KINDS}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        required = REQUIRED_COLUMNS[kind]
        if header is None:
            raise SchemaMismatch(required)
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaMismatch(missing)
        rows = list(reader)
    if not rows:
        raise SchemaMismatch([], "no data rows")
    return rows


def _by(rows, column):
    keys = []
    for r in rows:
        if r[column] not in keys:
            keys.append(r[column])
    return [(k, [r for r in rows if r[column] == k]) for k in keys]


def _series_sources(rows) -> List[Series]:
    out = []
    for kind, kind_rows in _by(rows, "delay_kind"):
        for gamma, pts in _by(kind_rows, "gamma"):
            pts = sorted(pts, key=lambda r: float(r["n_sources"]))
            out.append((f"{kind}, delay mean {gamma}",
                        [float(r["n_sources"]) for r in pts],
                        [float(r["aaoi_mean"]) for r in pts]))
    return out


def _series_targets(rows) -> List[Series]:
    pts = sorted(rows, key=lambda r: float(r["alpha1"]))
    x = [float(r["alpha1"]) for r in pts]
    out = []
    for s in (1, 3):
        out.append((f"source {s} average age", x,
                    [float(r[f"aaoi_s{s}_mean"]) for r in pts]))
        out.append((f"source {s} guarantee (3x target)", x,
                    [float(r[f"bound_s{s}"]) for r in pts]))
    return out


def _series_weighted(rows) -> List[Series]:
    out = []
    for kind, kind_rows in _by(rows, "delay_kind"):
        for gs, pts in _by(kind_rows, "gamma_scale"):
            pts = sorted(pts, key=lambda r: float(r["mu_scale"]))
            x = [float(r["mu_scale"]) for r in pts]
            out.append((f"{kind}, delay scale {gs}", x,
                        [float(r["wsaaoi_mean"]) for r in pts]))
            out.append((f"{kind}, delay scale {gs}, 3x relaxation bound", x,
                        [float(r["bound_3x"]) for r in pts]))
    return out


def _series_single_source(rows) -> List[Series]:
    out = []
    for kind, pts in _by(rows, "delay_kind"):
        pts = sorted(pts, key=lambda r: float(r["gamma"]))
        x = [float(r["gamma"]) for r in pts]
        out.append((f"{kind}: wait one delay mean", x,
                    [float(r["aaoi_spacing_gamma_mean"]) for r in pts]))
        out.append((f"{kind}: searched threshold", x,
                    [float(r["aaoi_best_mean"]) for r in pts]))
        out.append((f"{kind}: zero wait", x,
                    [float(r["aaoi_zero_wait_mean"]) for r in pts]))
    return out


_BUILDERS = {
    "sources": _series_sources,
    "targets": _series_targets,
    "weighted": _series_weighted,
    "single-source": _series_single_source,
}

_AXES = {
    "sources": ("number of sources", "average age (time units)"),
    "targets": ("source 1 age target (time units)", "average age (time units)"),
    "weighted": ("generation spacing scale factor",
                 "weighted sum of average ages (time units)"),
    "single-source": ("delay mean (time units)", "average age (time units)"),
}


def render(spec: FigureSpec) -> Dict[str, Tuple[Tuple[float, ...], Tuple[float, ...]]]:
    """Write the figure for spec and return the points each drawn line holds,
    keyed by legend label."""
    rows = load_rows(spec.csv_path, spec.kind)
    series = _BUILDERS[spec.kind](rows)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, x, y in series:
        style = "--" if "bound" in label or "guarantee" in label else "-"
        ax.plot(x, y, style, marker="o", markersize=3, label=label)
    xlabel, ylabel = _AXES[spec.kind]
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()

    plotted = {
        line.get_label(): (tuple(float(v) for v in line.get_xdata()),
                           tuple(float(v) for v in line.get_ydata()))
        for line in ax.get_lines()
    }
    fig.savefig(spec.out_path, dpi=120)
    plt.close(fig)
    return plotted
