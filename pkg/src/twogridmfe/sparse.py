"""Sparse matrix assembly, block composition and linear solves with a residual contract."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constants import DEFAULT_LINEAR_MAX_ITER, DEFAULT_LINEAR_TOL, DIRECT_SOLVER_LIMIT, ROUNDING_SLACK
from .errors import InvalidArgumentError, LinearSolverError

logger = logging.getLogger(__name__)

SparseMatrix = sp.csr_matrix


def _finalize(matrix: sp.csr_matrix) -> sp.csr_matrix:
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return matrix


@dataclass(frozen=True, eq=False)
class AssemblyPattern:
    """
    Fixed sparsity pattern together with the slot every triplet is summed into.

    Building the pattern once per index layout lets repeated assemblies (e.g. a weighted mass
    matrix reassembled every time step) skip sorting and deduplication.
    """

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    slots: np.ndarray

    @classmethod
    def from_index_pairs(cls, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]) -> "AssemblyPattern":
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise InvalidArgumentError("Row and column index arrays must have the same length")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]):
            raise InvalidArgumentError(f"Triplet indices out of range for shape {shape}")
        keys = rows * shape[1] + cols
        unique_keys, slots = np.unique(keys, return_inverse=True)
        unique_rows = unique_keys // shape[1]
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(unique_rows, minlength=shape[0]), out=indptr[1:])
        return cls(shape=shape, indptr=indptr, indices=unique_keys % shape[1], slots=slots.ravel())

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def assemble(self, values: np.ndarray) -> sp.csr_matrix:
        """Sum `values` (one per triplet, in pattern order) into a finalized CSR matrix."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size != self.slots.size:
            raise InvalidArgumentError(f"Expected {self.slots.size} triplet values, got {values.size}")
        data = np.bincount(self.slots, weights=values, minlength=self.nnz)
        matrix = sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        return _finalize(matrix)


def from_triplets(rows: np.ndarray, cols: np.ndarray, values: np.ndarray, shape: tuple[int, int]) -> sp.csr_matrix:
    """
    Build a CSR matrix from (row, col, value) triplets, summing duplicates.

    Triplets are put into a canonical order first so that any permutation of the input yields a
    bit-identical matrix.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not rows.size == cols.size == values.size:
        raise InvalidArgumentError("Triplet arrays must have equal length")
    order = np.lexsort((values, cols, rows))
    pattern = AssemblyPattern.from_index_pairs(rows[order], cols[order], shape)
    return pattern.assemble(values[order])


BlockEntry = tuple[sp.spmatrix | None, float]


def compose_block(blocks: Sequence[Sequence[BlockEntry]]) -> sp.csr_matrix:
    """
    Assemble a 2x2 arrangement of scaled sparse blocks into one monolithic matrix.

    Args:
        blocks: ``[[(A11, c11), (A12, c12)], [(A21, c21), (A22, c22)]]``. A block that is None or has
            factor 0 is structurally absent.

    Returns:
        sp.csr_matrix: The monolithic matrix.
    """
    if len(blocks) != 2 or any(len(row) != 2 for row in blocks):
        raise InvalidArgumentError("compose_block expects a 2x2 arrangement of blocks")

    row_sizes: list[int | None] = [None, None]
    col_sizes: list[int | None] = [None, None]
    for i, row in enumerate(blocks):
        for j, (matrix, _) in enumerate(row):
            if matrix is None:
                continue
            for sizes, index, size in ((row_sizes, i, matrix.shape[0]), (col_sizes, j, matrix.shape[1])):
                if sizes[index] is None:
                    sizes[index] = size
                elif sizes[index] != size:
                    raise InvalidArgumentError(
                        f"Block ({i}, {j}) with shape {matrix.shape} is not conformal with its row/column"
                    )
    if any(size is None for size in (*row_sizes, *col_sizes)):
        raise InvalidArgumentError("Every block row and column needs at least one sized block")

    grid = []
    for i, row in enumerate(blocks):
        grid_row = []
        for j, (matrix, factor) in enumerate(row):
            if matrix is None or factor == 0:
                grid_row.append(sp.csr_matrix((row_sizes[i], col_sizes[j])))
            else:
                grid_row.append(factor * sp.csr_matrix(matrix))
        grid.append(grid_row)
    return _finalize(sp.csr_matrix(sp.bmat(grid, format="csr")))


@dataclass
class BlockSystem:
    """Coupled (u, sigma) system: 2x2 scaled blocks plus a two-part right-hand side."""

    blocks: Sequence[Sequence[BlockEntry]]
    rhs: tuple[np.ndarray, np.ndarray]

    def matrix(self) -> sp.csr_matrix:
        return compose_block(self.blocks)

    def rhs_vector(self) -> np.ndarray:
        return np.concatenate(self.rhs)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_first = self.rhs[0].size
        return x[:n_first], x[n_first:]

    def solve(
        self, tol: float = DEFAULT_LINEAR_TOL, max_iter: int = DEFAULT_LINEAR_MAX_ITER
    ) -> tuple[np.ndarray, np.ndarray]:
        return self.split(solve(self.matrix(), self.rhs_vector(), tol=tol, max_iter=max_iter))


def residual_scale(b: np.ndarray) -> float:
    """Scale the residual of ``A @ x = b`` is measured against, ``max(1, ||b||)``."""
    return max(1.0, float(np.linalg.norm(b)))


def rounding_floor(matrix: sp.spmatrix, x: np.ndarray) -> float:
    """Size of the rounding error made when evaluating ``matrix @ x`` in double precision."""
    return ROUNDING_SLACK * float(np.finfo(float).eps) * float(np.linalg.norm(abs(matrix) @ np.abs(x)))


def solve(
    matrix: sp.spmatrix,
    b: np.ndarray,
    tol: float = DEFAULT_LINEAR_TOL,
    max_iter: int = DEFAULT_LINEAR_MAX_ITER,
) -> np.ndarray:
    """
    Solve ``matrix @ x = b`` and verify the residual bound.

    Systems up to DIRECT_SOLVER_LIMIT unknowns use a sparse LU factorization followed by up to three
    steps of iterative refinement; larger ones use ILU-preconditioned GMRES with `max_iter` restarts.

    Raises:
        LinearSolverError: singular factorization, non-convergence, or a residual above both
            ``tol * max(1, ||b||)`` and the rounding floor. A residual only above the first is accepted
            with a warning.
    """
    if matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgumentError(f"Matrix must be square, got shape {matrix.shape}")
    b = np.asarray(b, dtype=float)
    if b.shape != (matrix.shape[0],):
        raise InvalidArgumentError(f"Right-hand side of shape {b.shape} does not match matrix {matrix.shape}")
    if tol <= 0:
        raise InvalidArgumentError(f"Tolerance must be positive, got {tol}")

    csc = sp.csc_matrix(matrix)
    if matrix.shape[0] <= DIRECT_SOLVER_LIMIT:
        x = _solve_direct(csc, b, tol)
    else:
        x = _solve_iterative(csc, b, tol, max_iter)

    residual = float(np.linalg.norm(matrix @ x - b))
    bound = tol * residual_scale(b)
    if np.isfinite(residual) and bound < residual <= rounding_floor(matrix, x):
        logger.warning(
            "Residual bound is below the rounding floor of the system, accepting the solution",
            extra={"residual": residual, "bound": bound, "size": matrix.shape[0]},
        )
    elif not np.isfinite(residual) or residual > bound:
        logger.error("Linear solve missed residual bound", extra={"residual": residual, "bound": bound})
        raise LinearSolverError("Residual bound not met", residual)
    logger.debug("Linear solve finished", extra={"size": matrix.shape[0], "residual": residual})
    return x


def _solve_direct(csc: sp.csc_matrix, b: np.ndarray, tol: float) -> np.ndarray:
    try:
        lu = spla.splu(csc)
    except RuntimeError as e:
        raise LinearSolverError(f"Sparse factorization failed: {e}") from e
    x = lu.solve(b)
    for _ in range(3):
        r = b - csc @ x
        if np.linalg.norm(r) <= tol * residual_scale(b):
            break
        x = x + lu.solve(r)
    return x


def _solve_iterative(csc: sp.csc_matrix, b: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    try:
        preconditioner = spla.LinearOperator(csc.shape, spla.spilu(csc).solve)
    except RuntimeError as e:
        raise LinearSolverError(f"Incomplete factorization failed: {e}") from e
    atol = tol * residual_scale(b)
    x, info = spla.gmres(csc, b, rtol=0.0, atol=atol, restart=200, maxiter=max_iter, M=preconditioner)
    if info != 0:
        raise LinearSolverError(
            f"GMRES did not converge within {max_iter} restarts", float(np.linalg.norm(csc @ x - b))
        )
    return x
