"""Plot-ready output: legacy VTK, convergence tables and midline profiles."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import TriMesh


class PointLocationError(RuntimeError):
    pass


def _num(v: float) -> str:
    return "%.17g" % v


def _check_finite(name, values):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.isfinite(values)))
        raise ValueError(f"field {name!r} has a non-finite value at index {bad}")
    return values


def vertex_values(V, u) -> np.ndarray:
    """P2B coefficients sampled at the geometric mesh vertices.

    Edge and bubble contributions vanish at vertices, so this is exact there
    (and drops the higher-order information in between).
    """
    _, vdof = np.unique(V.mesh.vertex_map, return_inverse=True)
    return np.asarray(u)[vdof]


def export_vtk(mesh: TriMesh, path, point_data: dict | None = None,
               cell_data: dict | None = None, title: str = "obstakl") -> Path:
    """Legacy ASCII unstructured grid with scalar point and cell fields."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    for name, vals in point_data.items():
        if np.shape(vals) != (mesh.nvertices,):
            raise ValueError(f"point field {name!r} has shape {np.shape(vals)}, "
                             f"expected ({mesh.nvertices},)")
    for name, vals in cell_data.items():
        if np.shape(vals) != (mesh.ntriangles,):
            raise ValueError(f"cell field {name!r} has shape {np.shape(vals)}, "
                             f"expected ({mesh.ntriangles},)")
    for name in list(point_data) + list(cell_data):
        if not name or any(c.isspace() for c in name):
            raise ValueError(f"invalid field name {name!r}")
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.nvertices} double"]
    _check_finite("POINTS", mesh.vertices)
    lines += [f"{_num(x)} {_num(y)} 0" for x, y in mesh.vertices]
    nt = mesh.ntriangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    for header, data, n in (("POINT_DATA", point_data, mesh.nvertices),
                            ("CELL_DATA", cell_data, nt)):
        if not data:
            continue
        lines.append(f"{header} {n}")
        for name in sorted(data):
            vals = _check_finite(name, data[name])
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_num(v) for v in vals]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path) -> dict:
    """Minimal reader for files written by :func:`export_vtk`."""
    tokens = Path(path).read_text().splitlines()
    if not tokens or not tokens[0].startswith("# vtk DataFile"):
        raise ValueError("not a legacy VTK file")
    if tokens[2].strip() != "ASCII" or tokens[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise ValueError("only ASCII unstructured grids are supported")
    out = {"points": None, "cells": None, "cell_types": None, "point_data": {}, "cell_data": {}}
    i = 4
    section = None
    while i < len(tokens):
        parts = tokens[i].split()
        i += 1
        if not parts:
            continue
        key = parts[0]
        if key == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([[float(v) for v in tokens[i + k].split()] for k in range(n)])
            i += n
        elif key == "CELLS":
            n = int(parts[1])
            rows = [[int(v) for v in tokens[i + k].split()] for k in range(n)]
            if any(r[0] != len(r) - 1 for r in rows):
                raise ValueError("malformed CELLS block")
            out["cells"] = np.array([r[1:] for r in rows])
            i += n
        elif key == "CELL_TYPES":
            n = int(parts[1])
            out["cell_types"] = np.array([int(tokens[i + k]) for k in range(n)])
            i += n
        elif key in ("POINT_DATA", "CELL_DATA"):
            section = ("point_data" if key == "POINT_DATA" else "cell_data", int(parts[1]))
        elif key == "SCALARS":
            if section is None:
                raise ValueError("SCALARS outside a data block")
            name = parts[1]
            i += 1  # LOOKUP_TABLE
            n = section[1]
            out[section[0]][name] = np.array([float(tokens[i + k]) for k in range(n)])
            i += n
        else:
            raise ValueError(f"unexpected token {key!r} on line {i}")
    return out


CONVERGENCE_HEADER = "N,eta_total,eta_int,eta_edge,eta_contact,pdas_iters,seconds"


def _plain(v: float) -> str:
    if not np.isfinite(v):
        raise ValueError(f"non-finite value {v} in convergence table")
    return np.format_float_positional(float(v), unique=True, trim="-")


def export_convergence(records, path, timing: bool = True) -> Path:
    """One CSV row per adaptive level.  With ``timing=False`` seconds are written as 0."""
    records = list(records)
    if not records:
        raise ValueError("no records to export")
    lines = [CONVERGENCE_HEADER]
    for r in records:
        secs = r.seconds if timing else 0.0
        lines.append(",".join([str(int(r.N)), _plain(r.eta_total), _plain(r.eta_int),
                               _plain(r.eta_edge), _plain(r.eta_contact), str(int(r.pdas_iters)),
                               _plain(secs)]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_convergence(path) -> dict:
    rows = Path(path).read_text().strip().splitlines()
    if rows[0] != CONVERGENCE_HEADER:
        raise ValueError("unexpected convergence header")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    return {k: data[:, j] for j, k in enumerate(CONVERGENCE_HEADER.split(","))}


def extract_midline(solution, problem, y: float | None = None, samples: int = 201,
                    path=None) -> np.ndarray:
    """Absolute pressure along y (default mid-width) at equispaced x over one period.

    Returns an array (samples, 2) of (x, p); also written as CSV when ``path`` is given.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    V = solution.V
    verts = V.mesh.vertices
    y = 0.5 * (verts[:, 1].min() + verts[:, 1].max()) if y is None else float(y)
    xs = np.linspace(verts[:, 0].min(), verts[:, 0].max(), samples)
    pts = np.column_stack([xs, np.full(samples, y)])
    vals, loc = V.evaluate_at(solution.u, pts)
    if loc.outside:
        raise PointLocationError("points outside the mesh: "
                                 + ", ".join(f"({pts[i, 0]:.6g}, {pts[i, 1]:.6g})"
                                             for i in loc.missed[:5]))
    p = vals + problem.meta.get("shift", 0.0)
    table = np.column_stack([xs, p])
    if path is not None:
        _check_finite("p", p)
        lines = ["x,p"] + [f"{_plain(a)},{_plain(b)}" for a, b in table]
        Path(path).write_text("\n".join(lines) + "\n")
    return table
