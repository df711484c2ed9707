"""PDE data for u_t + gamma * lap^2 u - lap u + f(u) = g with homogeneous Dirichlet data."""

import logging
from collections.abc import Callable
from dataclasses import dataclass
from functools import partial
from typing import get_args

import numpy as np

from .constants import ProblemIds
from .errors import InvalidArgumentError
from .mesh import Domain

logger = logging.getLogger(__name__)

ScalarMap = Callable[[np.ndarray], np.ndarray]
SpaceField = Callable[[np.ndarray], np.ndarray]
SpaceTimeField = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """
    Coefficients and data of one problem instance.

    Every field callable is vectorized: `points` has shape (m, dim) and the result shape (m,).
    Closures must be pure, since runs may evaluate them from several processes.
    """

    name: str
    domain: Domain
    final_time: float
    gamma: float
    f: ScalarMap
    f_prime: ScalarMap
    g: SpaceTimeField
    u0: SpaceField
    exact_u: SpaceTimeField | None = None
    exact_sigma: SpaceTimeField | None = None

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise InvalidArgumentError(f"gamma must be positive, got {self.gamma}")
        if not self.final_time > 0:
            raise InvalidArgumentError(f"Final time must be positive, got {self.final_time}")
        if self.exact_sigma is not None and self.exact_u is None:
            raise InvalidArgumentError("An exact sigma requires an exact u")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def has_exact_solution(self) -> bool:
        return self.exact_u is not None

    def source_at(self, t: float) -> SpaceField:
        return partial(self.g, t=t)

    def exact_u_at(self, t: float) -> SpaceField:
        if self.exact_u is None:
            raise InvalidArgumentError(f"Problem {self.name} has no exact solution")
        return partial(self.exact_u, t=t)

    def exact_sigma_at(self, t: float) -> SpaceField:
        if self.exact_sigma is None:
            raise InvalidArgumentError(f"Problem {self.name} has no exact sigma")
        return partial(self.exact_sigma, t=t)


def efk_f(u: np.ndarray) -> np.ndarray:
    """Extended Fisher-Kolmogorov nonlinearity u^3 - u."""
    return u**3 - u


def efk_f_prime(u: np.ndarray) -> np.ndarray:
    return 3.0 * u**2 - 1.0


def _sine_mode(points: np.ndarray) -> np.ndarray:
    return np.prod(np.sin(2.0 * np.pi * points), axis=1)


def _decaying_mode(points: np.ndarray, t: float) -> np.ndarray:
    return np.exp(-t) * _sine_mode(points)


def _scaled_mode(points: np.ndarray, t: float, factor: float) -> np.ndarray:
    return factor * _decaying_mode(points, t)


def _manufactured_source(points: np.ndarray, t: float, linear_factor: float) -> np.ndarray:
    mode = _sine_mode(points)
    return linear_factor * np.exp(-t) * mode + np.exp(-3.0 * t) * mode**3


def _sine_problem(name: str, domain: Domain, gamma: float) -> ProblemSpec:
    # Each axis contributes -(2 pi)^2 to the Laplacian of the sine mode
    lap = -4.0 * np.pi**2 * domain.dim
    linear_factor = -2.0 + gamma * lap**2 - lap
    return ProblemSpec(
        name=name,
        domain=domain,
        final_time=1.0,
        gamma=gamma,
        f=efk_f,
        f_prime=efk_f_prime,
        g=partial(_manufactured_source, linear_factor=linear_factor),
        u0=_sine_mode,
        exact_u=_decaying_mode,
        exact_sigma=partial(_scaled_mode, factor=lap),
    )


def example41(gamma: float) -> ProblemSpec:
    """
    2D manufactured solution u = exp(-t) sin(2 pi x1) sin(2 pi x2) on [-1, 1]^2 up to T = 1.

    g = (8 pi^2 - 2 + 64 gamma pi^4) u + u^3 and sigma = -8 pi^2 u.
    """
    return _sine_problem("example41", Domain.rectangle((-1.0, 1.0), (-1.0, 1.0)), gamma)


def _bump(points: np.ndarray) -> np.ndarray:
    return np.prod(points**3 * (1.0 - points) ** 3, axis=1)


def _zero_source(points: np.ndarray, t: float) -> np.ndarray:
    return np.zeros(points.shape[0])


def example42(gamma: float) -> ProblemSpec:
    """Unforced EFK equation on [0, 1]^2 started from x^3(1-x)^3 y^3(1-y)^3; no exact solution."""
    return ProblemSpec(
        name="example42",
        domain=Domain.rectangle((0.0, 1.0), (0.0, 1.0)),
        final_time=1.0,
        gamma=gamma,
        f=efk_f,
        f_prime=efk_f_prime,
        g=_zero_source,
        u0=_bump,
    )


def example43(gamma: float) -> ProblemSpec:
    """
    1D manufactured solution u = exp(-t) sin(2 pi x) on [-1, 1] up to T = 1.

    g = (4 pi^2 - 2 + 16 gamma pi^4) u + u^3 and sigma = -4 pi^2 u.
    """
    return _sine_problem("example43", Domain.interval(-1.0, 1.0), gamma)


PROBLEMS: dict[str, Callable[[float], ProblemSpec]] = {
    "example41": example41,
    "example42": example42,
    "example43": example43,
}

# Assert that the problem registry and the id type don't go out of sync
assert set(get_args(ProblemIds)) == set(PROBLEMS)


def get_problem(problem_id: str, gamma: float) -> ProblemSpec:
    try:
        factory = PROBLEMS[problem_id]
    except KeyError as e:
        raise InvalidArgumentError(f"Unknown problem '{problem_id}', expected one of {sorted(PROBLEMS)}") from e
    return factory(gamma)


def finite_difference_laplacian(func: SpaceField, points: np.ndarray, step: float) -> np.ndarray:
    """Central second differences of `func` summed over the axes."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = -2.0 * points.shape[1] * func(points)
    for axis in range(points.shape[1]):
        offset = np.zeros(points.shape[1])
        offset[axis] = step
        total = total + func(points + offset) + func(points - offset)
    return total / step**2


def _interior_samples(domain: Domain, rng: np.random.Generator, samples: int) -> np.ndarray:
    lower = np.array(domain.lower)
    extent = np.array(domain.extent)
    # Stay clear of the boundary so finite-difference stencils remain inside the domain
    return lower + extent * rng.uniform(0.05, 0.95, size=(samples, domain.dim))


def check_consistency(
    problem: ProblemSpec,
    samples: int = 100,
    seed: int = 0,
    fd_step: float = 1e-4,
    tol: float = 1e-6,
) -> None:
    """
    Spot-check a problem's data at random interior points.

    Verifies u0 = exact_u(., 0) to 1e-12 and exact_sigma = lap(exact_u) against central differences
    (relative tolerance `tol`). Problems without exact fields pass trivially.

    Raises:
        InvalidArgumentError: The first failed check.
    """
    if problem.exact_u is None:
        return
    rng = np.random.default_rng(seed)
    points = _interior_samples(problem.domain, rng, samples)

    initial_gap = np.max(np.abs(problem.u0(points) - problem.exact_u(points, 0.0)))
    if initial_gap > 1e-12:
        raise InvalidArgumentError(f"u0 differs from exact_u at t=0 by {initial_gap:.3e}")

    if problem.exact_sigma is None:
        return
    for t in rng.uniform(0.0, problem.final_time, size=3):
        sigma = problem.exact_sigma(points, t)
        laplacian = finite_difference_laplacian(problem.exact_u_at(t), points, fd_step)
        scale = max(1.0, float(np.max(np.abs(sigma))))
        gap = float(np.max(np.abs(sigma - laplacian)))
        if gap > tol * scale:
            raise InvalidArgumentError(f"exact_sigma differs from the Laplacian of exact_u by {gap:.3e} at t={t:.3f}")
    logger.debug("Problem data consistent", extra={"problem": problem.name, "samples": samples})
