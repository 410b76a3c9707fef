"""Figure rendering from sweep CSVs: schema checks and data fidelity."""

import csv
import subprocess
import sys

import pytest

from agesched.cli import (
    sweep_single_source,
    sweep_sources,
    sweep_targets,
    sweep_weighted,
    write_rows,
)
from agesched_plots import REQUIRED_COLUMNS, FigureSpec, SchemaMismatch, render
from agesched_plots.figures import load_rows

SMALL = dict(horizon=2e4, replications=2, seed=0)


@pytest.fixture(scope="module")
def sweep_csvs(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweeps")
    paths = {}
    for kind, fn, kwargs in (
        ("sources", sweep_sources, dict(n_values=(1, 3, 5))),
        ("targets", sweep_targets, dict(n_points=4)),
        ("weighted", sweep_weighted, dict(scales=(0.5, 1.0))),
        ("single-source", sweep_single_source,
         dict(search_horizon=5e3, search_replications=1, search_points=7)),
    ):
        rows, fields = fn(**SMALL, **kwargs)
        path = root / f"{kind}.csv"
        write_rows(rows, fields, str(path))
        paths[kind] = str(path)
    return paths


def csv_floats(path, column):
    with open(path, newline="") as fh:
        return [float(r[column]) for r in csv.DictReader(fh)]


def test_criterion_12_figure_analogs_match_csv_exactly(sweep_csvs, tmp_path):
    # every figure kind renders, and the values held by the drawn lines are
    # exactly the values parsed from the CSV -- no rounding, no reordering
    plotted_columns = {
        "sources": ("aaoi_mean",),
        "targets": ("aaoi_s1_mean", "aaoi_s3_mean", "bound_s1", "bound_s3"),
        "weighted": ("wsaaoi_mean", "bound_3x"),
        "single-source": ("aaoi_spacing_gamma_mean", "aaoi_best_mean",
                          "aaoi_zero_wait_mean"),
    }
    for kind, path in sweep_csvs.items():
        out = tmp_path / f"{kind}.png"
        plotted = render(FigureSpec(path, kind, str(out)))
        assert out.exists() and out.stat().st_size > 0
        assert plotted, kind

        for column in plotted_columns[kind]:
            from_csv = sorted(csv_floats(path, column))
            from_lines = sorted(
                v for xs, ys in plotted.values() for v in ys)
            for v in from_csv:
                assert v in from_lines, f"{kind}: CSV value {v!r} not drawn"

    # the main package must stand alone: importing it cannot pull this one in
    probe = ("import sys, agesched, agesched.cli; "
             "sys.exit(1 if any(m.startswith('agesched_plots') "
             "for m in sys.modules) else 0)")
    assert subprocess.run([sys.executable, "-c", probe]).returncode == 0


def test_every_series_value_comes_from_the_csv(sweep_csvs, tmp_path):
    # stronger direction for one kind: each drawn series matches one CSV
    # column filtered the same way the figure groups rows
    path = sweep_csvs["targets"]
    plotted = render(FigureSpec(path, "targets", str(tmp_path / "t.png")))
    with open(path, newline="") as fh:
        rows = sorted(csv.DictReader(fh), key=lambda r: float(r["alpha1"]))
    x = tuple(float(r["alpha1"]) for r in rows)
    for s, column in ((1, "aaoi_s1_mean"), (3, "aaoi_s3_mean")):
        xs, ys = plotted[f"source {s} average age"]
        assert xs == x
        assert ys == tuple(float(r[column]) for r in rows)


def test_missing_column_names_are_reported(sweep_csvs, tmp_path):
    with open(sweep_csvs["targets"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    kept = [c for c in rows[0] if c not in ("bound_s3", "aaoi_s3_mean")]
    path = tmp_path / "cut.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, kept, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    with pytest.raises(SchemaMismatch) as exc:
        render(FigureSpec(str(path), "targets", str(tmp_path / "x.png")))
    assert set(exc.value.missing) == {"aaoi_s3_mean", "bound_s3"}


def test_empty_file_is_a_schema_mismatch(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(SchemaMismatch) as exc:
        load_rows(str(path), "sources")
    assert set(exc.value.missing) == set(REQUIRED_COLUMNS["sources"])


def test_header_without_rows_is_a_schema_mismatch(tmp_path):
    path = tmp_path / "bare.csv"
    path.write_text(",".join(REQUIRED_COLUMNS["weighted"]) + "\n")
    with pytest.raises(SchemaMismatch):
        load_rows(str(path), "weighted")


def test_unknown_kind_rejected(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a\n1\n")
    with pytest.raises(ValueError):
        load_rows(str(path), "pie-chart")


def test_same_csv_yields_same_points(sweep_csvs, tmp_path):
    spec1 = FigureSpec(sweep_csvs["sources"], "sources", str(tmp_path / "a.png"))
    spec2 = FigureSpec(sweep_csvs["sources"], "sources", str(tmp_path / "b.png"))
    assert render(spec1) == render(spec2)


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "agesched_plots.cli", *args],
                          capture_output=True, text=True)


def test_cli_exit_codes(sweep_csvs, tmp_path):
    out = tmp_path / "fig.png"
    ok = run_cli("sources", sweep_csvs["sources"], str(out))
    assert ok.returncode == 0 and out.exists()
    assert str(out) in ok.stdout

    mismatch = run_cli("targets", sweep_csvs["sources"], str(tmp_path / "y.png"))
    assert mismatch.returncode == 2
    assert "alpha1" in mismatch.stderr

    assert run_cli("sources", str(tmp_path / "nope.csv"),
                   str(tmp_path / "z.png")).returncode == 1
    assert run_cli("pie-chart", sweep_csvs["sources"],
                   str(tmp_path / "w.png")).returncode == 1
