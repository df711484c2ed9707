import logging
import os
from pathlib import Path

import numpy as np
import rasterio
from rasterio.transform import Affine, from_origin

from .fespace import FeFunction

logger = logging.getLogger(__name__)

_GRID_PROFILE = {"driver": "AAIGrid", "count": 1, "dtype": "float64", "significant_digits": 17}


def node_grid(function: FeFunction) -> tuple[np.ndarray, Affine]:
    """
    Nodal values as a north-up grid, nodes at cell centres.

    A 1D function becomes a single-row grid centred on y = 0.
    """
    mesh = function.space.mesh
    counts = [n + 1 for n in mesh.divisions]
    spacing = mesh.edge_lengths
    if mesh.dim == 1:
        grid = function.coeffs.reshape(1, counts[0])
        dx = dy = float(spacing[0])
        north = 0.5 * dy
    else:
        # Node numbering runs x fastest from the south edge, rasters start at the north edge
        grid = function.coeffs.reshape(counts[1], counts[0])[::-1]
        dx, dy = float(spacing[0]), float(spacing[1])
        north = mesh.domain.upper[1] + 0.5 * dy
    west = mesh.domain.lower[0] - 0.5 * dx
    return np.ascontiguousarray(grid), from_origin(west, north, dx, dy)


def write_grid(function: FeFunction, path: str | os.PathLike) -> Path:
    """Write the nodal values of `function` as an ESRI ASCII grid."""
    grid, transform = node_grid(function)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    profile = dict(_GRID_PROFILE, height=grid.shape[0], width=grid.shape[1], transform=transform)
    with rasterio.open(path, "w", **profile) as dst:
        dst.write(grid, 1)
    logger.debug("Wrote grid", extra={"path": str(path), "shape": grid.shape})
    return path


def read_grid(path: str | os.PathLike) -> tuple[np.ndarray, Affine]:
    # GDAL reads ASCII grids as Float32 unless told otherwise
    with rasterio.Env(AAIGRID_DATATYPE="Float64"), rasterio.open(path) as src:
        return src.read(1), src.transform


def write_snapshot(
    u: FeFunction, sigma: FeFunction, out_dir: str | os.PathLike, stem: str, t: float
) -> tuple[Path, Path]:
    """Write U_h and Sigma_h at time `t` to `<stem>_u_t<t>.asc` and `<stem>_sigma_t<t>.asc`."""
    out_dir = Path(out_dir)
    label = f"{t:.6g}"
    return (
        write_grid(u, out_dir / f"{stem}_u_t{label}.asc"),
        write_grid(sigma, out_dir / f"{stem}_sigma_t{label}.asc"),
    )
