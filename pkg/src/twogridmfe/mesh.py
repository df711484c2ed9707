"""Uniform tensor-product meshes of an interval or a rectangle."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .constants import BOUNDARY_TOL, LOCATE_TOL
from .errors import InvalidArgumentError, OutOfDomainError

logger = logging.getLogger(__name__)

# Local vertex offsets per element, counterclockwise in 2D
_LOCAL_VERTICES = {
    1: np.array([[0], [1]]),
    2: np.array([[0, 0], [1, 0], [1, 1], [0, 1]]),
}


@dataclass(frozen=True)
class Domain:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper) or len(self.lower) not in (1, 2):
            raise InvalidArgumentError("Domain must be 1D or 2D with matching bounds")
        for lo, up in zip(self.lower, self.upper, strict=True):
            if not lo < up:
                raise InvalidArgumentError(f"Domain bounds must satisfy lower < upper, got [{lo}, {up}]")
        # Normalize to plain floats so domains compare equal regardless of input types
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))

    @classmethod
    def interval(cls, lower: float, upper: float) -> "Domain":
        return cls((lower,), (upper,))

    @classmethod
    def rectangle(cls, x_bounds: tuple[float, float], y_bounds: tuple[float, float]) -> "Domain":
        return cls((x_bounds[0], y_bounds[0]), (x_bounds[1], y_bounds[1]))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(up - lo for lo, up in zip(self.lower, self.upper, strict=True))

    @property
    def measure(self) -> float:
        return math.prod(self.extent)

    def divisions_for(self, edge: float) -> tuple[int, ...]:
        """Number of elements per axis giving (approximately) the edge length `edge`."""
        if edge <= 0:
            raise InvalidArgumentError(f"Edge length must be positive, got {edge}")
        return tuple(max(1, round(length / edge)) for length in self.extent)


@dataclass(frozen=True)
class Mesh:
    """
    Uniform partition of a Domain into intervals (1D) or rectangles (2D).

    Nodes are numbered lexicographically with x fastest, elements likewise. Element connectivity
    uses a fixed local ordering: (left, right) in 1D and counterclockwise starting at the
    lower-left corner in 2D.
    """

    domain: Domain
    divisions: tuple[int, ...]
    node_coords: np.ndarray = field(repr=False, compare=False)
    element_to_nodes: np.ndarray = field(repr=False, compare=False)
    boundary_nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def num_nodes(self) -> int:
        return int(self.node_coords.shape[0])

    @property
    def num_elements(self) -> int:
        return int(self.element_to_nodes.shape[0])

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.array([length / n for length, n in zip(self.domain.extent, self.divisions, strict=True)])

    @property
    def h_hat(self) -> float:
        """Largest element edge length."""
        return float(self.edge_lengths.max())

    @property
    def diameter(self) -> float:
        """Element diameter; equals sqrt(2) times the edge length for square elements."""
        return float(np.sqrt(np.sum(self.edge_lengths**2)))

    @property
    def element_measure(self) -> float:
        return float(np.prod(self.edge_lengths))

    @cached_property
    def element_origins(self) -> np.ndarray:
        """Lower-left corner of every element, shape (num_elements, dim)."""
        return self.node_coords[self.element_to_nodes[:, 0]]

    def map_to_physical(self, elements: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Map local coordinates in [-1, 1]^dim of the given elements to physical points."""
        return self.element_origins[elements] + 0.5 * (np.asarray(xi) + 1.0) * self.edge_lengths


def make_uniform_mesh(domain: Domain, divisions: int | Sequence[int]) -> Mesh:
    """
    Build a uniform mesh of `domain`.

    Args:
        domain (Domain): Interval or rectangle to partition.
        divisions (int | Sequence[int]): Elements per axis. A single integer is used for every axis.

    Returns:
        Mesh: The immutable mesh.
    """
    if isinstance(divisions, int | np.integer):
        divisions = (int(divisions),) * domain.dim
    divisions = tuple(int(n) for n in divisions)
    if len(divisions) != domain.dim:
        raise InvalidArgumentError(f"Expected {domain.dim} division counts, got {len(divisions)}")
    if any(n < 1 for n in divisions):
        raise InvalidArgumentError(f"Divisions must be at least 1 per axis, got {divisions}")

    axes = [np.linspace(lo, up, n + 1) for lo, up, n in zip(domain.lower, domain.upper, divisions, strict=True)]
    # meshgrid with indexing="xy" reversed so that x varies fastest in the flattened order
    grids = np.meshgrid(*axes[::-1], indexing="ij")[::-1]
    node_coords = np.stack([g.ravel() for g in grids], axis=1)

    strides = np.cumprod((1, *[n + 1 for n in divisions[:-1]]))
    element_index = np.stack(
        [g.ravel() for g in np.meshgrid(*[np.arange(n) for n in divisions[::-1]], indexing="ij")[::-1]],
        axis=1,
    )
    local = _LOCAL_VERTICES[domain.dim]
    element_to_nodes = ((element_index[:, None, :] + local[None, :, :]) * strides).sum(axis=2)

    on_boundary = np.zeros(node_coords.shape[0], dtype=bool)
    for axis, (lo, up) in enumerate(zip(domain.lower, domain.upper, strict=True)):
        x = node_coords[:, axis]
        on_boundary |= (np.abs(x - lo) <= BOUNDARY_TOL) | (np.abs(x - up) <= BOUNDARY_TOL)

    mesh = Mesh(
        domain=domain,
        divisions=divisions,
        node_coords=node_coords,
        element_to_nodes=element_to_nodes.astype(np.int64),
        boundary_nodes=np.flatnonzero(on_boundary),
    )
    logger.debug(
        "Created uniform mesh",
        extra={"divisions": divisions, "num_nodes": mesh.num_nodes, "num_elements": mesh.num_elements},
    )
    return mesh


def locate_points(mesh: Mesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Vectorized point location.

    Points on a face shared by two elements resolve to the lower-index element.

    Args:
        mesh (Mesh): Mesh to search.
        points (np.ndarray): Array of shape (m, dim) (or (dim,) for a single point).

    Returns:
        tuple[np.ndarray, np.ndarray]: Element indices of shape (m,) and local coordinates in
            [-1, 1]^dim of shape (m, dim).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != mesh.dim:
        raise InvalidArgumentError(f"Points must have {mesh.dim} coordinates, got shape {pts.shape}")

    lower = np.array(mesh.domain.lower)
    upper = np.array(mesh.domain.upper)
    slack = LOCATE_TOL * np.maximum(1.0, np.abs(np.stack([lower, upper])).max(axis=0))
    outside = np.any((pts < lower - slack) | (pts > upper + slack), axis=1)
    if np.any(outside):
        bad = pts[np.flatnonzero(outside)[0]]
        raise OutOfDomainError(f"Point {bad.tolist()} lies outside the domain {mesh.domain}")

    divisions = np.array(mesh.divisions)
    scaled = (pts - lower) / mesh.edge_lengths
    # ceil(t) - 1 sends faces (integer t, up to rounding) to the lower neighbour
    cell = np.clip(np.ceil(scaled - LOCATE_TOL).astype(np.int64) - 1, 0, divisions - 1)
    xi = np.clip(2.0 * (scaled - cell) - 1.0, -1.0, 1.0)

    strides = np.cumprod((1, *divisions[:-1]))
    elements = (cell * strides).sum(axis=1)
    return elements, xi


def locate_point(mesh: Mesh, point: Sequence[float] | np.ndarray) -> tuple[int, np.ndarray]:
    """Locate a single point, returning its element index and local coordinates."""
    elements, xi = locate_points(mesh, np.asarray(point, dtype=float).reshape(1, -1))
    return int(elements[0]), xi[0]
