"""History and field exports. Every file is written to a temporary name and then renamed."""
from __future__ import annotations

import csv
import io as _io
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgument
from .levelset import heaviside

HISTORY_COLUMNS = ("iteration", "J", "J_over_J0", "G", "vol_frac", "max_vm", "C_v", "lambda", "wall_ms")
HISTORY_VERSION = 1

BACKGROUND = 128
FIELD_FORMATS = ("NodalText", "Raster")


def _atomic_write(path, data):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        if isinstance(data, bytes):
            tmp.write_bytes(data)
        else:
            tmp.write_text(data)
        tmp.replace(path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def export_history(history, path):
    """Write the history table as CSV (header only when empty)."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for row in history.rows:
        writer.writerow([_fmt(row[c]) for c in HISTORY_COLUMNS])
    return _atomic_write(path, buf.getvalue())


def read_history(path):
    """Columns of a history CSV as float arrays (``iteration`` as int)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HISTORY_COLUMNS:
            raise InvalidArgument(f"{path}: unexpected header {reader.fieldnames}")
        rows = list(reader)
    out = {c: np.array([float(r[c]) for r in rows]) for c in HISTORY_COLUMNS}
    out["iteration"] = out["iteration"].astype(int)
    return out


def raster(mesh, phi):
    """Grayscale image with one pixel per grid cell.

    A cell is material (255) when the mean of its corner level set values is
    nonnegative, void (0) otherwise, and background gray outside the domain.
    Row 0 is the top of the domain.
    """
    grid = mesh.grid
    if grid is None:
        raise InvalidArgument("rasterising needs a structured mesh")
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (mesh.n_nodes,):
        raise InvalidArgument(f"phi has shape {phi.shape}, expected ({mesh.n_nodes},)")
    idx = grid.node_index
    padded = np.append(phi, 0.0)  # index -1 picks the padding value
    corners = [padded[idx[:-1, :-1]], padded[idx[:-1, 1:]], padded[idx[1:, :-1]], padded[idx[1:, 1:]]]
    center = sum(corners) / 4.0
    img = np.where(center >= 0.0, 255, 0).astype(np.uint8)
    img[~grid.cell_mask] = BACKGROUND
    return img[::-1]


def export_fields(mesh, phi, displacement, stress, path, fmt="NodalText", beta=5.0):
    """Write a field snapshot.

    ``NodalText`` writes a legacy VTK unstructured grid with point data phi,
    Theta, sigma_M and |u|; ``Raster`` writes a PNG of the material domain.
    """
    if fmt not in FIELD_FORMATS:
        raise InvalidArgument(f"unknown field format {fmt!r}; expected one of {FIELD_FORMATS}")
    phi = np.asarray(phi, dtype=float)
    path = Path(path)
    if fmt == "Raster":
        buf = _io.BytesIO()
        Image.fromarray(raster(mesh, phi), mode="L").save(buf, format="PNG")
        return _atomic_write(path, buf.getvalue())
    u = np.asarray(displacement, dtype=float).reshape(-1, 2)
    data = {"phi": phi, "Theta": heaviside(phi, beta), "sigma_M": np.asarray(stress, dtype=float),
            "u_magnitude": np.linalg.norm(u, axis=1)}
    try:
        return mesh.write_vtk(path, point_data=data)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def export_run(result, out_dir, beta=5.0, stamp=None):
    """Final history, VTK snapshot and raster of a finished run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = result.history
    stamp = len(h) - 1 if stamp is None else stamp
    paths = {"history": export_history(h, out_dir / "history.csv")}
    paths["fields"] = export_fields(h.mesh, result.state.phi, result.displacement, h.final_sigma,
                                    out_dir / f"fields_{stamp:04d}.vtk", "NodalText", beta)
    paths["raster"] = export_fields(h.mesh, result.state.phi, result.displacement, h.final_sigma,
                                    out_dir / f"layout_{stamp:04d}.png", "Raster", beta)
    return paths
