import io
import logging
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.physics import GasModel, conserved_to_primitive

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]

logger = logging.getLogger(__name__)

VTK_TRIANGLE = 5
CSV_COLUMNS = (
    "cell",
    "x",
    "y",
    "r",
    "rho",
    "rho_u",
    "rho_v",
    "rho_E",
    "u",
    "v",
    "p",
)


def _write_scalars(out: io.StringIO, name: str, values: FloatArray) -> None:
    out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
    np.savetxt(out, values.reshape(-1, 1), fmt="%.16e")


def export_vtk(
    path: Union[str, Path],
    corners: FloatArray,
    averages: FloatArray,
    flags: BoolArray,
    model: GasModel,
    time: float = 0.0,
) -> Path:
    """Write subcells as triangles to a legacy ASCII VTK file.

    Every subcell becomes its own triangle with unshared points, carrying
    density, velocity and pressure of its average plus the limiter flag of
    its main cell.

    Args:
        path (Union[str, Path]): Output file; parent folders are created.
        corners (FloatArray): Subcell corners, (C, S, 3, 2).
        averages (FloatArray): Conserved subcell averages, (C, S, 4).
        flags (BoolArray): Limiter flag per main cell, (C,).
        model (GasModel): Gas model for the primitive variables.
        time (float): Physical time, written into the header.

    Returns:
        Path: The written file.

    Raises:
        OSError: If the file cannot be written.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    n_cells, n_sub = corners.shape[:2]
    n_tri = n_cells * n_sub
    points = np.zeros((3 * n_tri, 3))
    points[:, :2] = corners.reshape(-1, 2)
    connectivity = np.column_stack(
        [np.full(n_tri, 3), np.arange(3 * n_tri).reshape(n_tri, 3)]
    )
    prim = conserved_to_primitive(averages.reshape(-1, 4), model)
    cell_flags = np.repeat(np.asarray(flags, dtype=float), n_sub)

    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\n")
    out.write(f"aledg subcells t={time:.16e}\nASCII\n")
    out.write("DATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {3 * n_tri} double\n")
    np.savetxt(out, points, fmt="%.16e")
    out.write(f"CELLS {n_tri} {4 * n_tri}\n")
    np.savetxt(out, connectivity, fmt="%d")
    out.write(f"CELL_TYPES {n_tri}\n")
    np.savetxt(out, np.full((n_tri, 1), VTK_TRIANGLE), fmt="%d")
    out.write(f"CELL_DATA {n_tri}\n")
    _write_scalars(out, "rho", prim[:, 0])
    out.write("VECTORS velocity double\n")
    velocity = np.column_stack([prim[:, 1:3], np.zeros(n_tri)])
    np.savetxt(out, velocity, fmt="%.16e")
    _write_scalars(out, "p", prim[:, 3])
    _write_scalars(out, "limiter", cell_flags)
    target.write_text(out.getvalue())
    logger.info(f"💾 Wrote {n_tri} subcells to {target}")
    return target


def export_scatter_csv(
    path: Union[str, Path],
    cell_vertices: FloatArray,
    means: FloatArray,
    model: GasModel,
) -> Path:
    """Write one row per main cell for scatter plots against the radius.

    Args:
        path (Union[str, Path]): Output file; parent folders are created.
        cell_vertices (FloatArray): Vertices of the main cells, (C, 3, 2).
        means (FloatArray): Cell-mean conserved states, (C, 4).
        model (GasModel): Gas model for the primitive variables.

    Returns:
        Path: The written file.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    barycenters = cell_vertices.mean(axis=1)
    radius = np.linalg.norm(barycenters, axis=-1)
    prim = conserved_to_primitive(means, model)
    table = np.column_stack(
        [
            np.arange(means.shape[0]),
            barycenters,
            radius,
            means,
            prim[:, 1:4],
        ]
    )
    fmt = ["%d"] + ["%.16e"] * (len(CSV_COLUMNS) - 1)
    np.savetxt(
        target,
        table,
        fmt=fmt,
        delimiter=",",
        header=",".join(CSV_COLUMNS),
        comments="",
    )
    logger.info(f"💾 Wrote {means.shape[0]} cell rows to {target}")
    return target
