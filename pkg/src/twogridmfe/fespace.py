"""Conforming P1 / Q1 finite element spaces with homogeneous Dirichlet constraints."""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np
import scipy.sparse as sp

from .constants import QUADRATURE_POINTS
from .errors import InvalidArgumentError
from .mesh import Mesh, locate_points
from .sparse import AssemblyPattern

logger = logging.getLogger(__name__)

PointField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Tensorized Gauss-Legendre rule on [-1, 1]^dim, x index fastest."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, points_per_axis: int, dim: int) -> "QuadratureRule":
        if points_per_axis < 1:
            raise InvalidArgumentError(f"Need at least one quadrature point, got {points_per_axis}")
        x, w = np.polynomial.legendre.leggauss(points_per_axis)
        if dim == 1:
            return cls(points=x[:, None], weights=w)
        xx, yy = np.meshgrid(x, x)
        wx, wy = np.meshgrid(w, w)
        return cls(points=np.stack([xx.ravel(), yy.ravel()], axis=1), weights=(wx * wy).ravel())

    @property
    def num_points(self) -> int:
        return int(self.weights.size)

    def integrate_reference(self, func: PointField) -> float:
        """Integrate `func` over the reference element."""
        return float(np.dot(self.weights, func(self.points)))


def reference_shapes(dim: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Nodal P1 (1D) or Q1 (2D) shape functions on the reference element.

    Returns:
        tuple[np.ndarray, np.ndarray]: Values of shape (m, n_local) and reference gradients of
            shape (m, n_local, dim) at the points `xi` (shape (m, dim)).
    """
    xi = np.atleast_2d(xi)
    signs = np.array([[-1.0], [1.0]]) if dim == 1 else np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    # factors[m, a, d] = (1 + s_ad xi_md) / 2
    factors = 0.5 * (1.0 + signs[None, :, :] * xi[:, None, :])
    values = np.prod(factors, axis=2)
    grads = np.empty((xi.shape[0], signs.shape[0], dim))
    for d in range(dim):
        others = np.prod(np.delete(factors, d, axis=2), axis=2) if dim > 1 else 1.0
        grads[:, :, d] = 0.5 * signs[None, :, d] * others
    return values, grads


class FeSpace:
    """
    Continuous piecewise linear (1D) or bilinear (2D) functions on a uniform mesh.

    Boundary nodes are constrained to zero; the remaining nodes are the free unknowns. All
    quadrature data (points, shape values, physical gradients) is computed once at construction.
    """

    def __init__(self, mesh: Mesh, quadrature_points: int = QUADRATURE_POINTS) -> None:
        self.mesh = mesh
        self.dim = mesh.dim
        self.quadrature = QuadratureRule.gauss_legendre(quadrature_points, self.dim)

        self.constrained_nodes = mesh.boundary_nodes
        free_mask = np.ones(mesh.num_nodes, dtype=bool)
        free_mask[self.constrained_nodes] = False
        self.free_nodes = np.flatnonzero(free_mask)
        self.free_index = np.full(mesh.num_nodes, -1, dtype=np.int64)
        self.free_index[self.free_nodes] = np.arange(self.free_nodes.size)

        self.shape_values, ref_grads = reference_shapes(self.dim, self.quadrature.points)
        half_edges = 0.5 * mesh.edge_lengths
        self.shape_grads = ref_grads / half_edges
        self.jacobian_det = float(np.prod(half_edges))
        self.quad_weights = self.quadrature.weights * self.jacobian_det

        self.quad_points = mesh.map_to_physical(
            np.arange(mesh.num_elements)[:, None], self.quadrature.points[None, :, :]
        )

        elements = mesh.element_to_nodes
        n_local = elements.shape[1]
        rows = np.broadcast_to(elements[:, :, None], (mesh.num_elements, n_local, n_local))
        cols = np.broadcast_to(elements[:, None, :], (mesh.num_elements, n_local, n_local))
        self.pattern = AssemblyPattern.from_index_pairs(rows, cols, (mesh.num_nodes, mesh.num_nodes))
        logger.debug(
            "Built finite element space",
            extra={"family": self.family, "num_nodes": mesh.num_nodes, "num_free": self.num_free},
        )

    @property
    def family(self) -> Literal["P1", "Q1"]:
        return "P1" if self.dim == 1 else "Q1"

    @property
    def degree(self) -> int:
        return 1

    @property
    def num_nodes(self) -> int:
        return self.mesh.num_nodes

    @property
    def num_free(self) -> int:
        return int(self.free_nodes.size)

    def zero(self) -> "FeFunction":
        return FeFunction(self, np.zeros(self.num_nodes))

    def interpolate(self, func: PointField, constrain: bool = True) -> "FeFunction":
        """Nodal interpolant of `func`; constrained nodes are set to zero unless `constrain` is False."""
        coeffs = np.asarray(func(self.mesh.node_coords), dtype=float).copy()
        if constrain:
            coeffs[self.constrained_nodes] = 0.0
        return FeFunction(self, coeffs)

    def from_free(self, free_values: np.ndarray) -> "FeFunction":
        """Zero-pad a vector over the free nodes to a full finite element function."""
        return FeFunction(self, extend_by_zero(self, free_values))

    def values_at_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        """Values of the function with nodal `coeffs` at every quadrature point, shape (n_el, n_q)."""
        return coeffs[self.mesh.element_to_nodes] @ self.shape_values.T

    def gradients_at_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        """Gradients at every quadrature point, shape (n_el, n_q, dim)."""
        return np.einsum("ea,qad->eqd", coeffs[self.mesh.element_to_nodes], self.shape_grads)

    def same_mesh(self, other: "FeSpace") -> bool:
        return self is other or self.mesh == other.mesh

    def field_at_quadrature(self, values: "Field") -> np.ndarray:
        """Evaluate a scalar field at this space's quadrature points, shape (n_el, n_q)."""
        shape = self.quad_points.shape[:2]
        if isinstance(values, FeFunction):
            if self.same_mesh(values.space):
                return self.values_at_quadrature(values.coeffs)
            return QuadratureSampler(values.space, self).sample(values.coeffs)
        if callable(values):
            points = self.quad_points.reshape(-1, self.dim)
            return np.broadcast_to(np.asarray(values(points), dtype=float), (points.shape[0],)).reshape(shape)
        array = np.asarray(values, dtype=float)
        return np.broadcast_to(array, shape)


@dataclass(eq=False)
class FeFunction:
    """A finite element function: coefficient vector over all mesh nodes of its space."""

    space: FeSpace
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.num_nodes,):
            raise InvalidArgumentError(
                f"Expected {self.space.num_nodes} coefficients, got array of shape {self.coeffs.shape}"
            )

    @property
    def free_values(self) -> np.ndarray:
        return self.coeffs[self.space.free_nodes]

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at physical points of shape (m, dim); raises OutOfDomainError outside the domain."""
        elements, xi = locate_points(self.space.mesh, points)
        values, _ = reference_shapes(self.space.dim, xi)
        return np.sum(self.coeffs[self.space.mesh.element_to_nodes[elements]] * values, axis=1)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.eval(points)

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.coeffs.copy())


Field = Union[PointField, FeFunction, np.ndarray, float]


class QuadratureSampler:
    """
    Evaluates functions of a source space at the quadrature points of a target space.

    Point location runs once at construction; `sample` is then a gather plus a weighted sum, so a
    coarse solution can be evaluated on the fine quadrature every time step at negligible cost.
    """

    def __init__(self, source: FeSpace, target: FeSpace) -> None:
        if source.mesh.domain != target.mesh.domain:
            raise InvalidArgumentError("Source and target spaces must share the same domain")
        self.source = source
        self.target_shape = target.quad_points.shape[:2]
        elements, xi = locate_points(source.mesh, target.quad_points.reshape(-1, target.dim))
        self.nodes = source.mesh.element_to_nodes[elements]
        self.weights, _ = reference_shapes(source.dim, xi)

    def sample(self, coeffs: np.ndarray) -> np.ndarray:
        return np.sum(coeffs[self.nodes] * self.weights, axis=1).reshape(self.target_shape)


def _assemble_local(space: FeSpace, local: np.ndarray) -> sp.csr_matrix:
    """Scatter element matrices of shape (n_el, n_loc, n_loc) (or one shared matrix) into a CSR matrix."""
    n_el = space.mesh.num_elements
    if local.ndim == 2:
        local = np.broadcast_to(local, (n_el, *local.shape))
    return space.pattern.assemble(local)


def element_mass(space: FeSpace) -> np.ndarray:
    return np.einsum("q,qa,qb->ab", space.quad_weights, space.shape_values, space.shape_values)


def element_stiffness(space: FeSpace) -> np.ndarray:
    return np.einsum("q,qad,qbd->ab", space.quad_weights, space.shape_grads, space.shape_grads)


def assemble_mass(space: FeSpace) -> sp.csr_matrix:
    """Full (unconstrained) mass matrix M_ij = (phi_i, phi_j)."""
    return _assemble_local(space, element_mass(space))


def assemble_stiffness(space: FeSpace) -> sp.csr_matrix:
    """Full (unconstrained) stiffness matrix A_ij = (grad phi_i, grad phi_j)."""
    return _assemble_local(space, element_stiffness(space))


def assemble_weighted_mass(space: FeSpace, weight: Field) -> sp.csr_matrix:
    """
    Weighted mass matrix N_ij = (w phi_i, phi_j) by quadrature.

    Args:
        space (FeSpace): Space to assemble on.
        weight (Field): Callable on points, FeFunction (possibly on another mesh of the same
            domain), array of values at the quadrature points, or a constant.
    """
    w = space.field_at_quadrature(weight)
    local = np.einsum("eq,q,qa,qb->eab", w, space.quad_weights, space.shape_values, space.shape_values)
    return _assemble_local(space, local)


def assemble_load(space: FeSpace, source: Field) -> np.ndarray:
    """Load vector b_i = (s, phi_i) by quadrature, over all nodes."""
    s = space.field_at_quadrature(source)
    local = np.einsum("eq,q,qa->ea", s, space.quad_weights, space.shape_values)
    return np.bincount(space.mesh.element_to_nodes.ravel(), weights=local.ravel(), minlength=space.num_nodes)


def apply_dirichlet(operand: sp.spmatrix | np.ndarray, constrained: np.ndarray) -> sp.csr_matrix | np.ndarray:
    """
    Eliminate homogeneous Dirichlet nodes.

    Matrices keep their free x free block, vectors their free entries. Constrained values are zero,
    so no lifting term enters the right-hand side.
    """
    size = operand.shape[0]
    keep = np.ones(size, dtype=bool)
    keep[np.asarray(constrained, dtype=np.int64)] = False
    free = np.flatnonzero(keep)
    if sp.issparse(operand):
        if operand.shape[0] != operand.shape[1]:
            raise InvalidArgumentError(f"Matrix must be square, got shape {operand.shape}")
        return sp.csr_matrix(operand)[free][:, free]
    return np.asarray(operand)[free]


def extend_by_zero(space: FeSpace, free_values: np.ndarray) -> np.ndarray:
    """Inverse of `apply_dirichlet` on vectors: full coefficient vector with zero constrained entries."""
    free_values = np.asarray(free_values, dtype=float)
    if free_values.shape != (space.num_free,):
        raise InvalidArgumentError(f"Expected {space.num_free} free values, got shape {free_values.shape}")
    coeffs = np.zeros(space.num_nodes)
    coeffs[space.free_nodes] = free_values
    return coeffs
