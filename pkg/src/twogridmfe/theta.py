"""Second-order theta time discretization: difference quotients, weighted values and the discrete energy."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

ArrayOrFloat = np.ndarray | float


@dataclass(frozen=True)
class ThetaScheme:
    """
    Uniform time grid t_n = n * dt, n = 0..num_steps, discretized at the shifted points t_{n-theta}.

    theta = 1/2 is Crank-Nicolson, theta = 0 the two-step backward difference.
    """

    theta: float
    dt: float
    num_steps: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 0.5:
            raise InvalidArgumentError(f"theta must lie in [0, 1/2], got {self.theta}")
        if not self.dt > 0:
            raise InvalidArgumentError(f"Time step must be positive, got {self.dt}")
        if self.num_steps < 1:
            raise InvalidArgumentError(f"Need at least one time step, got {self.num_steps}")

    @classmethod
    def from_final_time(cls, theta: float, dt: float, final_time: float) -> "ThetaScheme":
        """Derive the number of steps from T = N * dt; rejects grids that do not end at T."""
        if not dt > 0 or not final_time > 0:
            raise InvalidArgumentError(f"Time step and final time must be positive, got dt={dt}, T={final_time}")
        ratio = final_time / dt
        steps = round(ratio)
        if steps < 1 or not math.isclose(ratio, steps, rel_tol=1e-9):
            raise InvalidArgumentError(f"Final time {final_time} is not a positive integer multiple of dt={dt}")
        return cls(theta=theta, dt=dt, num_steps=steps)

    @property
    def final_time(self) -> float:
        return self.num_steps * self.dt

    @property
    def coefficients(self) -> tuple[float, float, float]:
        """(a0, a1, a2) of the three-level difference quotient; they sum to zero."""
        two_dt = 2.0 * self.dt
        return (
            (3.0 - 2.0 * self.theta) / two_dt,
            -(4.0 - 4.0 * self.theta) / two_dt,
            (1.0 - 2.0 * self.theta) / two_dt,
        )

    def time(self, n: int) -> float:
        return n * self.dt

    def shifted_time(self, n: int) -> float:
        """t_{n-theta}."""
        return (n - self.theta) * self.dt


def dt_apply(scheme: ThetaScheme, phi_n: ArrayOrFloat, phi_nm1: ArrayOrFloat, phi_nm2: ArrayOrFloat) -> ArrayOrFloat:
    """Three-level difference quotient approximating the time derivative at t_{n-theta}."""
    a0, a1, a2 = scheme.coefficients
    return a0 * np.asarray(phi_n) + a1 * np.asarray(phi_nm1) + a2 * np.asarray(phi_nm2)


def theta_combine(scheme: ThetaScheme, phi_n: ArrayOrFloat, phi_nm1: ArrayOrFloat) -> ArrayOrFloat:
    """(1 - theta) phi^n + theta phi^{n-1}."""
    return (1.0 - scheme.theta) * np.asarray(phi_n) + scheme.theta * np.asarray(phi_nm1)


def energy_H(scheme: ThetaScheme, norm_n: float, norm_nm1: float, norm_diff: float) -> float:
    """
    Discrete energy of a two-level history.

    (3 - 2 theta)|phi^n|^2 - (1 - 2 theta)|phi^{n-1}|^2 + (2 - theta)(1 - 2 theta)|phi^n - phi^{n-1}|^2.
    Every norm must come from the same inner product.
    """
    if min(norm_n, norm_nm1, norm_diff) < 0:
        raise InvalidArgumentError("Norms must be nonnegative")
    theta = scheme.theta
    return (
        (3.0 - 2.0 * theta) * norm_n**2
        - (1.0 - 2.0 * theta) * norm_nm1**2
        + (2.0 - theta) * (1.0 - 2.0 * theta) * norm_diff**2
    )


@dataclass(frozen=True)
class StepForm:
    """
    Coefficients of one time step.

    `derivative` holds (a0, a1, a2) acting on levels n, n-1, n-2, `weights` the pair multiplying the
    spatial terms at levels n and n-1. The source enters with the same weights, sampled at
    `source_times` = (t_n, t_{n-1}).
    """

    n: int
    derivative: tuple[float, float, float]
    weights: tuple[float, float]
    source_times: tuple[float, float]

    @property
    def a0(self) -> float:
        return self.derivative[0]

    @property
    def w_n(self) -> float:
        return self.weights[0]

    @property
    def w_nm1(self) -> float:
        return self.weights[1]

    @property
    def uses_second_history(self) -> bool:
        return self.derivative[2] != 0.0


@dataclass(frozen=True)
class StartupForm:
    derivative: tuple[float, float]
    weights: tuple[float, float]


def startup_residual_form(scheme: ThetaScheme) -> StartupForm:
    """Crank-Nicolson coefficients for the first step, used whatever the scheme's theta."""
    return StartupForm(derivative=(1.0 / scheme.dt, -1.0 / scheme.dt), weights=(0.5, 0.5))


def step_form(scheme: ThetaScheme, n: int) -> StepForm:
    """Coefficients for step n >= 1; step 1 is the Crank-Nicolson startup."""
    if not 1 <= n <= scheme.num_steps:
        raise InvalidArgumentError(f"Step index {n} outside 1..{scheme.num_steps}")
    if n == 1:
        startup = startup_residual_form(scheme)
        return StepForm(
            n=1,
            derivative=(*startup.derivative, 0.0),
            weights=startup.weights,
            source_times=(scheme.time(1), scheme.time(0)),
        )
    return StepForm(
        n=n,
        derivative=scheme.coefficients,
        weights=(1.0 - scheme.theta, scheme.theta),
        source_times=(scheme.time(n), scheme.time(n - 1)),
    )
