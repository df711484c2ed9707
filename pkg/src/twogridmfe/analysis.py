"""Error norms, convergence orders and tabulation of run results."""

import math
import os
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any, Literal

import numpy as np
import pandas as pd

from .constants import CSV_COLUMNS
from .errors import InvalidArgumentError
from .fespace import FeFunction, Field

GradientField = Callable[[np.ndarray], np.ndarray]


def l2_error(fh: FeFunction, ref: Field) -> float:
    """
    L2 norm of fh - ref by quadrature on the elements of fh's mesh.

    Args:
        fh (FeFunction): Discrete function.
        ref (Field): Analytic callable, constant, or FeFunction on any mesh of the same domain.
    """
    space = fh.space
    diff = space.values_at_quadrature(fh.coeffs) - space.field_at_quadrature(ref)
    return float(np.sqrt(np.sum(diff**2 * space.quad_weights)))


def h1_seminorm_error(fh: FeFunction, grad_ref: GradientField) -> float:
    """L2 norm of grad(fh) - grad_ref, with `grad_ref` mapping (m, dim) points to (m, dim) gradients."""
    space = fh.space
    grads = space.gradients_at_quadrature(fh.coeffs)
    reference = np.asarray(grad_ref(space.quad_points.reshape(-1, space.dim)), dtype=float).reshape(grads.shape)
    return float(np.sqrt(np.sum(np.sum((grads - reference) ** 2, axis=2) * space.quad_weights)))


def reference_error(fh: FeFunction, ref_fh: FeFunction) -> float:
    """
    L2 distance between two discrete functions on possibly different meshes of the same domain.

    Quadrature runs on whichever mesh has fewer elements; the other function is evaluated through point
    location.
    """
    if fh.space.mesh.domain != ref_fh.space.mesh.domain:
        raise InvalidArgumentError("Reference and test functions live on different domains")
    if fh.space.mesh.num_elements <= ref_fh.space.mesh.num_elements:
        return l2_error(fh, ref_fh)
    return l2_error(ref_fh, fh)


def convergence_order(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float:
    """log(e_coarse / e_fine) / log(h_coarse / h_fine)."""
    if min(e_coarse, e_fine, h_coarse, h_fine) <= 0:
        raise InvalidArgumentError("Errors and step sizes must be positive")
    if h_coarse == h_fine:
        raise InvalidArgumentError("Step sizes must differ")
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def format_step(value: float | None) -> str:
    """Write a step size as a fraction ("1/25") when it is one, else as a float."""
    if value is None:
        return ""
    fraction = Fraction(value).limit_denominator(1_000_000)
    if not math.isclose(float(fraction), value, rel_tol=1e-12):
        return repr(value)
    return str(fraction)


def _format_number(value: float | None, spec: str) -> str:
    if value is None:
        return ""
    if math.isnan(value):
        return "nan"
    return format(value, spec)


@dataclass
class ErrorRecord:
    """One result row: grid labels, final-time errors, orders against the previous row, cost."""

    method: str
    problem: str
    gamma: float
    theta: float
    dt: float
    H_hat: float | None
    h_hat: float
    err_u: float = math.nan
    err_sigma: float = math.nan
    cpu_seconds: float = math.nan
    newton_total_iters: int | None = None
    order_u: float | None = None
    order_sigma: float | None = None
    failure: str | None = None

    def __post_init__(self) -> None:
        for name in ("err_u", "err_sigma"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise InvalidArgumentError(f"{name} must be nonnegative, got {value}")

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_row(self) -> dict[str, str]:
        """CSV cells; missing orders stay empty, failed numbers read "nan"."""
        return {
            "method": self.method,
            "problem": self.problem,
            "gamma": f"{self.gamma:g}",
            "theta": f"{self.theta:g}",
            "dt": format_step(self.dt),
            "H_hat": format_step(self.H_hat),
            "h_hat": format_step(self.h_hat),
            "err_u": _format_number(self.err_u, ".5E"),
            "order_u": _format_number(self.order_u, ".5f"),
            "err_sigma": _format_number(self.err_sigma, ".5E"),
            "order_sigma": _format_number(self.order_sigma, ".5f"),
            "cpu_seconds": _format_number(self.cpu_seconds, ".2f"),
            "newton_total_iters": "nan" if self.newton_total_iters is None else str(self.newton_total_iters),
        }


def _order_or_none(e_coarse: float | None, e_fine: float | None, h_coarse: float, h_fine: float) -> float | None:
    if e_coarse is None or e_fine is None or not (e_coarse > 0 and e_fine > 0) or h_coarse == h_fine:
        return None
    return convergence_order(e_coarse, e_fine, h_coarse, h_fine)


def fill_orders(records: Sequence[ErrorRecord], refine_by: Literal["h_hat", "dt"] = "h_hat") -> None:
    """
    Set the order columns of a refinement sequence in place.

    Each order compares a row with its predecessor using the ratio of `refine_by`; the first row and
    rows next to a failed one get no order.
    """
    for previous, current in zip(records, records[1:], strict=False):
        h_coarse, h_fine = getattr(previous, refine_by), getattr(current, refine_by)
        current.order_u = _order_or_none(previous.err_u, current.err_u, h_coarse, h_fine)
        current.order_sigma = _order_or_none(previous.err_sigma, current.err_sigma, h_coarse, h_fine)


def records_frame(records: Sequence[ErrorRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.to_row() for record in records], columns=list(CSV_COLUMNS))


def write_records(records: Sequence[ErrorRecord], path: str | os.PathLike) -> None:
    """Write records as CSV, replacing any existing file."""
    records_frame(records).to_csv(path, index=False)
