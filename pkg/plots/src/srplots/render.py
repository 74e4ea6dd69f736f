"""Render experiment-artifact CSVs into the four figure kinds.

Inputs are the engine's CSV artifacts only; rendering never mutates them.

- proportions: long-format size-band traces (generation, band, proportion);
  one line per band, mean across input files, std shading when several.
- heatmap:     an evolvability matrix (crossover or mutation); absent cells
  carry the NA sentinel and render hatched with an 'x' marker.
- convergence: run_<i>.csv hypervolume columns; one labeled band per input
  group, mean across repetitions, std shading when several.
- fronts:      archive_<i>.csv scatter, size versus training error, pooling
  every archive point of each input group.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

ABSENT_SENTINEL = "NA"

FIGURE_KINDS = ("proportions", "heatmap", "convergence", "fronts")


class SchemaError(ValueError):
    """An input file does not match the expected artifact schema."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    output: str


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return reader.fieldnames, rows


def _require_columns(path, fieldnames, needed):
    for column in needed:
        if column not in fieldnames:
            raise SchemaError(f"{path}: missing required column {column!r}")


def _expand_group(path, pattern):
    """A directory stands for its matching run files; a file is itself."""
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob(pattern))
        if not files:
            raise SchemaError(f"{p}: no files matching {pattern}")
        return files
    return [p]


def _group_label(path):
    p = Path(path)
    echo = (p if p.is_dir() else p.parent) / "config.echo"
    if echo.exists():
        for line in echo.read_text(encoding="utf-8").splitlines():
            if line.startswith("algorithm="):
                return line.split("=", 1)[1]
    return p.stem


def render_proportions(inputs, ax):
    per_file = []
    bands = None
    for path in inputs:
        fieldnames, rows = _read_rows(path)
        _require_columns(path, fieldnames, ("generation", "band", "proportion"))
        table = defaultdict(dict)
        for row in rows:
            table[row["band"]][int(row["generation"])] = float(row["proportion"])
        file_bands = list(table)
        if bands is None:
            bands = file_bands
        per_file.append(table)
    generations = sorted(next(iter(per_file[0].values())))
    for band in bands:
        series = np.array(
            [[table[band].get(g, np.nan) for g in generations] for table in per_file]
        )
        mean = np.nanmean(series, axis=0)
        ax.plot(generations, mean, label=band)
        if len(per_file) > 1:
            std = np.nanstd(series, axis=0)
            ax.fill_between(generations, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("generation")
    ax.set_ylabel("proportion of population")
    ax.set_ylim(0.0, 1.0)
    ax.legend(title="solution size", fontsize=8)


def render_heatmap(inputs, ax, fig):
    if len(inputs) != 1:
        raise SchemaError("heatmap expects exactly one matrix file")
    path = inputs[0]
    fieldnames, rows = _read_rows(path)
    _require_columns(path, fieldnames, ("parent_bucket",))
    value_columns = [c for c in fieldnames if c != "parent_bucket"]
    if not value_columns:
        raise SchemaError(f"{path}: no value columns")
    labels = [row["parent_bucket"] for row in rows]
    values = np.full((len(rows), len(value_columns)), np.nan)
    for r, row in enumerate(rows):
        for c, column in enumerate(value_columns):
            cell = row[column]
            if cell != ABSENT_SENTINEL:
                values[r, c] = float(cell)
    masked = np.ma.masked_invalid(values)
    mesh = ax.pcolormesh(masked, cmap="viridis", edgecolors="0.8", linewidth=0.5)
    # Distinct marker for absent cells: hatched background plus an x.
    ax.patch.set(hatch="//", edgecolor="0.6", facecolor="white")
    for r, c in zip(*np.where(np.isnan(values))):
        ax.plot(c + 0.5, r + 0.5, marker="x", color="0.4", markersize=8)
    ax.set_yticks(np.arange(len(labels)) + 0.5, labels)
    if len(value_columns) > 1:
        ax.set_xticks(
            np.arange(len(value_columns)) + 0.5,
            [c.removeprefix("donor_") for c in value_columns],
            rotation=45,
        )
        ax.set_xlabel("donor size")
    else:
        ax.set_xticks([0.5], ["mutation"])
    ax.set_ylabel("parent size")
    ax.invert_yaxis()
    fig.colorbar(mesh, ax=ax, label="success frequency")


def render_convergence(inputs, ax):
    for group in inputs:
        files = _expand_group(group, "run_*.csv")
        curves = []
        for path in files:
            fieldnames, rows = _read_rows(path)
            _require_columns(path, fieldnames, ("generation", "train_hv"))
            curves.append([float(row["train_hv"]) for row in rows])
        generations = range(len(curves[0]))
        if any(len(c) != len(curves[0]) for c in curves):
            raise SchemaError(f"{group}: run files disagree on generation count")
        series = np.array(curves)
        mean = series.mean(axis=0)
        (line,) = ax.plot(generations, mean, label=_group_label(group))
        if len(curves) > 1:
            std = series.std(axis=0)
            ax.fill_between(
                generations, mean - std, mean + std, alpha=0.2, color=line.get_color()
            )
    ax.set_xlabel("generation")
    ax.set_ylabel("training hypervolume")
    ax.legend(fontsize=8)


def render_fronts(inputs, ax):
    for group in inputs:
        files = _expand_group(group, "archive_*.csv")
        sizes = []
        errors = []
        for path in files:
            fieldnames, rows = _read_rows(path)
            _require_columns(path, fieldnames, ("expression", "size", "train_error"))
            sizes.extend(int(row["size"]) for row in rows)
            errors.extend(float(row["train_error"]) for row in rows)
        ax.scatter(sizes, errors, s=12, alpha=0.5, label=_group_label(group))
    ax.set_xlabel("solution size")
    ax.set_ylabel("training error")
    ax.legend(fontsize=8)


def render(spec: FigureSpec) -> Path:
    """Draw the requested figure and write it to spec.output."""
    if spec.kind not in FIGURE_KINDS:
        raise SchemaError(f"unknown figure kind {spec.kind!r}; expected one of {FIGURE_KINDS}")
    if not spec.inputs:
        raise SchemaError("at least one input file is required")
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    try:
        if spec.kind == "proportions":
            render_proportions(spec.inputs, ax)
        elif spec.kind == "heatmap":
            render_heatmap(spec.inputs, ax, fig)
        elif spec.kind == "convergence":
            render_convergence(spec.inputs, ax)
        else:
            render_fronts(spec.inputs, ax)
        fig.tight_layout()
        out = Path(spec.output)
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out
