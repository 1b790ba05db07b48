"""CSV files for sampled curves, lifted curves and deformations.

Headers name the columns (``t,q1..qn[,z1..zr][,p1..pn]``); floats are written
with 17 significant digits so a write/read cycle is lossless.
"""
from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .gauge import LiftedCurve
from .geometry import GeometryError, SampledCurve
from .variation import InfinitesimalDeformation


class CurveFileError(ValueError):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_table(path, header: list[str], columns: list[np.ndarray]):
    data = np.column_stack(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([_fmt(v) for v in row])


def _names(prefix: str, k: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(k)]


def write_curve(path, curve: SampledCurve):
    header = ["t"] + _names("q", curve.n)
    cols = [curve.t, curve.q]
    if curve.z is not None:
        header += _names("z", curve.z.shape[1])
        cols.append(curve.z)
    write_table(path, header, cols)


def write_lifted(path, lifted: LiftedCurve):
    n, r = lifted.q.shape[1], lifted.z.shape[1]
    header = ["t"] + _names("q", n) + _names("z", r) + _names("p", n)
    write_table(path, header, [lifted.t, lifted.q, lifted.z, lifted.p])


def write_deformation(path, deformation: InfinitesimalDeformation):
    n, r = deformation.X.shape[1], deformation.Gamma.shape[1]
    header = ["t"] + _names("X", n) + _names("Gamma", r)
    write_table(path, header, [deformation.t, deformation.X, deformation.Gamma])


_COLUMN = re.compile(r"^(t|q|z|p|X|Gamma)(\d*)$")


def read_table(path) -> tuple[dict, np.ndarray]:
    """Return ``({group: [column indices]}, data)`` for a headed numeric CSV."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CurveFileError(f"{path}: cannot read ({exc.strerror})") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise CurveFileError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    groups: dict[str, list[tuple[int, int]]] = {}
    for col, name in enumerate(header):
        m = _COLUMN.match(name)
        if m is None:
            raise CurveFileError(f"{path}:1: unknown column '{name}'")
        kind, idx = m.group(1), m.group(2)
        groups.setdefault(kind, []).append((int(idx) if idx else 0, col))
    layout = {}
    for kind, entries in groups.items():
        entries.sort()
        if kind == "t":
            if len(entries) != 1 or entries[0][0] != 0:
                raise CurveFileError(f"{path}:1: expected a single 't' column")
        elif [e[0] for e in entries] != list(range(1, len(entries) + 1)):
            raise CurveFileError(f"{path}:1: columns {kind}1..{kind}{len(entries)} must be contiguous")
        layout[kind] = [c for _, c in entries]
    if "t" not in layout:
        raise CurveFileError(f"{path}:1: missing 't' column")
    data = np.empty((len(rows) - 1, len(header)))
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CurveFileError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data[lineno - 2] = [float(v) for v in row]
        except ValueError:
            raise CurveFileError(f"{path}:{lineno}: non-numeric field") from None
    return layout, data


def read_curve(path) -> SampledCurve:
    layout, data = read_table(path)
    if "q" not in layout:
        raise CurveFileError(f"{path}:1: missing q columns")
    z = data[:, layout["z"]] if "z" in layout else None
    try:
        return SampledCurve(data[:, layout["t"][0]], data[:, layout["q"]], z)
    except GeometryError as exc:
        raise CurveFileError(f"{path}: {exc}") from None


def read_lifted(path) -> LiftedCurve:
    layout, data = read_table(path)
    for key in ("q", "z", "p"):
        if key not in layout:
            raise CurveFileError(f"{path}:1: lifted curve needs {key} columns")
    try:
        curve = SampledCurve(data[:, layout["t"][0]], data[:, layout["q"]], data[:, layout["z"]])
        return LiftedCurve(curve, data[:, layout["p"]])
    except GeometryError as exc:
        raise CurveFileError(f"{path}: {exc}") from None


def write_key_values(path, lines: list[str]):
    Path(path).write_text("".join(line + "\n" for line in lines))
