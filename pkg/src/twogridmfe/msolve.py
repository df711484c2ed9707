"""
Mixed finite element time steppers.

The fourth-order equation is split with sigma = lap(u) into the coupled pair

    (D_t u, v) - gamma (grad sigma, grad v) + (grad u, grad v) + (f(u), v) = (g, v)
    (sigma, w) + (grad u, grad w) = 0

whose discrete unknowns are the free nodal values of U and S stacked as [U, S]. The first equation is
taken at t_{n-theta}: the time derivative there, and every other term (source included) weighted
(1 - theta, theta) between levels n and n - 1. The second equation holds at level n.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import get_args

import numpy as np
import scipy.sparse as sp

from .analysis import l2_error
from .constants import (
    DEFAULT_LINEAR_MAX_ITER,
    DEFAULT_LINEAR_TOL,
    DEFAULT_NEWTON_MAX,
    DEFAULT_NEWTON_TOL,
    STABILITY_FACTOR,
    MethodTypes,
)
from .errors import InvalidArgumentError, LinearSolverError, NewtonConvergenceError, StepFailureError
from .fespace import (
    FeFunction,
    FeSpace,
    Field,
    QuadratureSampler,
    apply_dirichlet,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    extend_by_zero,
)
from .problems import ProblemSpec, ScalarMap
from .sparse import BlockEntry, BlockSystem, compose_block, residual_scale, rounding_floor, solve
from .theta import StepForm, ThetaScheme, energy_H, step_form
from .timing import PhaseTimer, RunGuard

logger = logging.getLogger(__name__)

# Constraint residuals above this multiple of the linear tolerance are reported
CONSTRAINT_FACTOR = 10.0
# A Newton residual that shrinks by less than this factor per iteration has stopped converging
STAGNATION_RATIO = 0.5


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = DEFAULT_NEWTON_TOL
    newton_max: int = DEFAULT_NEWTON_MAX
    linear_tol: float = DEFAULT_LINEAR_TOL
    linear_max_iter: int = DEFAULT_LINEAR_MAX_ITER
    stability_factor: float = STABILITY_FACTOR

    def __post_init__(self) -> None:
        for name in ("newton_tol", "linear_tol", "stability_factor"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("newton_max", "linear_max_iter"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be at least 1, got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class StepState:
    """Solution pair at level n together with the history the next step needs."""

    n: int
    u: FeFunction
    sigma: FeFunction
    u_prev: FeFunction | None = None
    sigma_prev: FeFunction | None = None
    u_prev2: FeFunction | None = None
    newton_residuals: tuple[float, ...] = ()

    @property
    def newton_iterations(self) -> int:
        return max(0, len(self.newton_residuals) - 1)

    def advance(self, u: FeFunction, sigma: FeFunction, newton_residuals: tuple[float, ...] = ()) -> "StepState":
        return StepState(
            n=self.n + 1,
            u=u,
            sigma=sigma,
            u_prev=self.u,
            sigma_prev=self.sigma,
            u_prev2=self.u_prev,
            newton_residuals=newton_residuals,
        )


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Mass and stiffness matrices of a space restricted to its free nodes, assembled once per run."""

    space: FeSpace
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix

    @classmethod
    def build(cls, space: FeSpace) -> "DiscreteOperators":
        return cls(
            space=space,
            mass=_restrict(space, assemble_mass(space)),
            stiffness=_restrict(space, assemble_stiffness(space)),
        )

    @property
    def num_free(self) -> int:
        return self.space.num_free

    def load(self, source: Field) -> np.ndarray:
        return assemble_load(self.space, source)[self.space.free_nodes]

    def nonlinear_load(self, func: ScalarMap, coeffs: np.ndarray) -> np.ndarray:
        """(func(u_h), phi_i) over the free nodes for the function with nodal values `coeffs`."""
        return self.load(func(self.space.values_at_quadrature(coeffs)))

    def weighted_mass(self, weight: Field) -> sp.csr_matrix:
        return _restrict(self.space, assemble_weighted_mass(self.space, weight))

    def m_norm(self, free_values: np.ndarray) -> float:
        return float(np.sqrt(max(0.0, float(free_values @ (self.mass @ free_values)))))

    def constraint_residual(self, u_free: np.ndarray, s_free: np.ndarray) -> tuple[float, float]:
        """Residual of M S + A U = 0 and the scale it is measured against."""
        stiff_u = self.stiffness @ u_free
        residual = float(np.linalg.norm(self.mass @ s_free + stiff_u))
        return residual, residual_scale(stiff_u)


def _restrict(space: FeSpace, matrix: sp.spmatrix) -> sp.csr_matrix:
    reduced = apply_dirichlet(matrix, space.constrained_nodes)
    assert sp.issparse(reduced)
    return sp.csr_matrix(reduced)


@dataclass
class RunReport:
    """Per-step diagnostics, final errors and timings of one run."""

    method: str
    problem: str
    num_steps: int
    newton_iterations: list[int] = field(default_factory=list)
    newton_residuals: list[list[float]] = field(default_factory=list)
    constraint_residuals: list[float] = field(default_factory=list)
    l2_norms: list[float] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    timer: PhaseTimer = field(default_factory=PhaseTimer)
    steps_completed: int = 0
    err_u: float | None = None
    err_sigma: float | None = None
    failed: bool = False
    failure: str | None = None

    @property
    def cpu_seconds(self) -> float:
        return self.timer.cpu("total")

    @property
    def wall_seconds(self) -> float:
        return self.timer.wall("total")

    @property
    def newton_total_iters(self) -> int:
        return sum(self.newton_iterations)

    def mark_failed(self, exc: BaseException) -> None:
        self.failed = True
        self.failure = str(exc)

    def record_newton(self, state: StepState) -> None:
        self.newton_iterations.append(state.newton_iterations)
        self.newton_residuals.append(list(state.newton_residuals))


def init_state(
    space: FeSpace,
    problem: ProblemSpec,
    cfg: SolverConfig | None = None,
    ops: DiscreteOperators | None = None,
) -> StepState:
    """
    Level-0 state: U0 is the nodal interpolant of u0 with zero boundary values, S0 solves M S0 = -A U0.
    """
    cfg = cfg or SolverConfig()
    ops = ops or DiscreteOperators.build(space)
    u = space.interpolate(problem.u0)
    s_free = solve(ops.mass, -(ops.stiffness @ u.free_values), tol=cfg.linear_tol, max_iter=cfg.linear_max_iter)
    return StepState(n=0, u=u, sigma=space.from_free(s_free))


def _source_load(ops: DiscreteOperators, problem: ProblemSpec, form: StepForm) -> np.ndarray:
    """Weighted source w_n (g(t_n), v) + w_{n-1} (g(t_{n-1}), v)."""
    load = np.zeros(ops.num_free)
    for weight, t in zip(form.weights, form.source_times, strict=True):
        if weight != 0.0:
            load += weight * ops.load(problem.source_at(t))
    return load


def _history_rhs(ops: DiscreteOperators, problem: ProblemSpec, form: StepForm, state: StepState) -> np.ndarray:
    """Right-hand side of the u-row: source plus every term at levels n-1 and n-2."""
    _, a1, a2 = form.derivative
    u1 = state.u.free_values
    rhs = _source_load(ops, problem, form) - a1 * (ops.mass @ u1)
    if a2 != 0.0:
        if state.u_prev is None:
            raise InvalidArgumentError(f"Step {form.n} needs two previous levels")
        rhs -= a2 * (ops.mass @ state.u_prev.free_values)
    if form.w_nm1 != 0.0:
        spatial = (
            ops.stiffness @ u1
            - problem.gamma * (ops.stiffness @ state.sigma.free_values)
            + ops.nonlinear_load(problem.f, state.u.coeffs)
        )
        rhs -= form.w_nm1 * spatial
    return rhs


def _step_blocks(
    ops: DiscreteOperators, problem: ProblemSpec, form: StepForm, reaction: sp.spmatrix | None = None
) -> list[list[BlockEntry]]:
    diagonal = form.a0 * ops.mass + form.w_n * ops.stiffness
    if reaction is not None:
        diagonal = diagonal + form.w_n * reaction
    return [
        [(diagonal, 1.0), (ops.stiffness, -problem.gamma * form.w_n)],
        [(ops.stiffness, 1.0), (ops.mass, 1.0)],
    ]


def mfe_step(
    state: StepState,
    scheme: ThetaScheme,
    problem: ProblemSpec,
    ops: DiscreteOperators,
    cfg: SolverConfig | None = None,
    timer: PhaseTimer | None = None,
) -> StepState:
    """
    Advance the nonlinear mixed system by one step with Newton's method.

    The initial guess is the previous level. The iteration stops once the residual 2-norm drops below
    ``newton_tol * max(1, ||rhs||)``. A residual that stops decreasing while already inside the rounding
    floor of the linear part is accepted with a warning.

    Raises:
        NewtonConvergenceError: No convergence within `newton_max` iterations or a non-finite residual.
        LinearSolverError: A Newton correction could not be solved for.
    """
    cfg = cfg or SolverConfig()
    timer = timer or PhaseTimer()
    space = ops.space
    n_free = ops.num_free
    form = step_form(scheme, state.n + 1)

    with timer.phase("assembly"):
        rhs = np.concatenate([_history_rhs(ops, problem, form, state), np.zeros(n_free)])
        linear_part = compose_block(_step_blocks(ops, problem, form))
    x = np.concatenate([state.u.free_values, state.sigma.free_values])
    bound = cfg.newton_tol * residual_scale(rhs)

    history: list[float] = []
    for iteration in range(cfg.newton_max + 1):
        with timer.phase("assembly"):
            u_coeffs = extend_by_zero(space, x[:n_free])
            residual = linear_part @ x - rhs
            residual[:n_free] += form.w_n * ops.nonlinear_load(problem.f, u_coeffs)
        norm = float(np.linalg.norm(residual))
        history.append(norm)
        logger.debug("Newton iteration", extra={"step": form.n, "iteration": iteration, "residual": norm})
        if not np.isfinite(norm):
            raise NewtonConvergenceError(form.n, history)
        if norm <= bound:
            break
        if len(history) > 1 and norm > STAGNATION_RATIO * history[-2] and norm <= rounding_floor(linear_part, x):
            logger.warning(
                "Newton residual stagnated at the rounding floor above the tolerance",
                extra={"step": form.n, "residual": norm, "bound": bound},
            )
            break
        if iteration == cfg.newton_max:
            logger.error("Newton iteration failed", extra={"step": form.n, "residual": norm})
            raise NewtonConvergenceError(form.n, history)
        with timer.phase("assembly"):
            reaction = ops.weighted_mass(problem.f_prime(space.values_at_quadrature(u_coeffs)))
            system = BlockSystem(
                blocks=_step_blocks(ops, problem, form, reaction),
                rhs=(-residual[:n_free], -residual[n_free:]),
            )
            jacobian = system.matrix()
        with timer.phase("solve"):
            x = x + solve(jacobian, system.rhs_vector(), tol=cfg.linear_tol, max_iter=cfg.linear_max_iter)

    return state.advance(space.from_free(x[:n_free]), space.from_free(x[n_free:]), tuple(history))


def tg_coarse_run(
    problem: ProblemSpec,
    coarse_space: FeSpace,
    scheme: ThetaScheme,
    cfg: SolverConfig | None = None,
    timer: PhaseTimer | None = None,
    ops: DiscreteOperators | None = None,
) -> list[StepState]:
    """Nonlinear coarse-grid run; returns the whole trajectory, index n holding level n."""
    cfg = cfg or SolverConfig()
    timer = timer or PhaseTimer()
    if ops is None:
        with timer.phase("assembly"):
            ops = DiscreteOperators.build(coarse_space)
    states = [init_state(coarse_space, problem, cfg, ops)]
    for _ in range(scheme.num_steps):
        states.append(mfe_step(states[-1], scheme, problem, ops, cfg, timer))
    logger.info("Coarse run finished", extra={"problem": problem.name, "steps": scheme.num_steps})
    return states


def tg_fine_step(
    state: StepState,
    coarse_u: FeFunction,
    scheme: ThetaScheme,
    problem: ProblemSpec,
    ops: DiscreteOperators,
    cfg: SolverConfig | None = None,
    sampler: QuadratureSampler | None = None,
    timer: PhaseTimer | None = None,
) -> StepState:
    """
    One linear fine-grid step, linearizing f about the coarse solution of the same level.

    f(U) is replaced by f(u_H) + f'(u_H)(U - u_H) with u_H evaluated at the fine quadrature points, so
    f'(u_H) enters the u-row as a weighted mass block and f(u_H) - f'(u_H) u_H moves to the right-hand
    side. The level n-1 nonlinearity uses the fine solution itself.

    Raises:
        LinearSolverError: The fine system could not be solved.
    """
    cfg = cfg or SolverConfig()
    timer = timer or PhaseTimer()
    space = ops.space
    n_free = ops.num_free
    form = step_form(scheme, state.n + 1)

    with timer.phase("assembly"):
        sampler = sampler or QuadratureSampler(coarse_u.space, space)
        coarse_values = sampler.sample(coarse_u.coeffs)
        slope = problem.f_prime(coarse_values)
        offset = ops.load(problem.f(coarse_values) - slope * coarse_values)
        system = BlockSystem(
            blocks=_step_blocks(ops, problem, form, ops.weighted_mass(slope)),
            rhs=(_history_rhs(ops, problem, form, state) - form.w_n * offset, np.zeros(n_free)),
        )
        matrix = system.matrix()
    with timer.phase("solve"):
        x = solve(matrix, system.rhs_vector(), tol=cfg.linear_tol, max_iter=cfg.linear_max_iter)
    return state.advance(space.from_free(x[:n_free]), space.from_free(x[n_free:]))


StepCallback = Callable[[StepState], None]


def _record_step(
    report: RunReport, ops: DiscreteOperators, scheme: ThetaScheme, state: StepState, cfg: SolverConfig
) -> None:
    u_free = state.u.free_values
    residual, scale = ops.constraint_residual(u_free, state.sigma.free_values)
    report.constraint_residuals.append(residual)
    if residual > CONSTRAINT_FACTOR * cfg.linear_tol * scale:
        logger.warning("Constraint residual above bound", extra={"step": state.n, "residual": residual})
    report.l2_norms.append(ops.m_norm(u_free))
    if state.u_prev is not None:
        prev = state.u_prev.free_values
        report.energies.append(
            energy_H(scheme, report.l2_norms[-1], ops.m_norm(prev), ops.m_norm(u_free - prev))
        )
    report.steps_completed = state.n


def _run_mfe(
    problem: ProblemSpec,
    scheme: ThetaScheme,
    fine_space: FeSpace,
    coarse_space: FeSpace | None,
    cfg: SolverConfig,
    report: RunReport,
    callback: StepCallback | None,
) -> StepState:
    timer = report.timer
    with timer.phase("assembly"):
        ops = DiscreteOperators.build(fine_space)
    state = init_state(fine_space, problem, cfg, ops)
    _record_step(report, ops, scheme, state, cfg)
    if callback:
        callback(state)
    for _ in range(scheme.num_steps):
        state = mfe_step(state, scheme, problem, ops, cfg, timer)
        report.record_newton(state)
        _record_step(report, ops, scheme, state, cfg)
        if callback:
            callback(state)
    return state


def _run_tgmfe(
    problem: ProblemSpec,
    scheme: ThetaScheme,
    fine_space: FeSpace,
    coarse_space: FeSpace | None,
    cfg: SolverConfig,
    report: RunReport,
    callback: StepCallback | None,
) -> StepState:
    if coarse_space is None:
        raise InvalidArgumentError("The two-grid method needs a coarse space")
    timer = report.timer
    with timer.phase("coarse"):
        coarse_states = tg_coarse_run(problem, coarse_space, scheme, cfg, timer)
    for coarse_state in coarse_states[1:]:
        report.record_newton(coarse_state)

    with timer.phase("fine"):
        with timer.phase("assembly"):
            ops = DiscreteOperators.build(fine_space)
            sampler = QuadratureSampler(coarse_space, fine_space)
        state = init_state(fine_space, problem, cfg, ops)
        _record_step(report, ops, scheme, state, cfg)
        if callback:
            callback(state)
        for coarse_state in coarse_states[1:]:
            state = tg_fine_step(state, coarse_state.u, scheme, problem, ops, cfg, sampler, timer)
            _record_step(report, ops, scheme, state, cfg)
            if callback:
                callback(state)
    return state


_DRIVERS = {"mfe": _run_mfe, "tgmfe": _run_tgmfe}

# Assert that the drivers and the method type don't go out of sync
assert set(get_args(MethodTypes)) == set(_DRIVERS)


def _check_stability(report: RunReport, cfg: SolverConfig) -> None:
    if not report.l2_norms:
        return
    ceiling = cfg.stability_factor * report.l2_norms[0]
    peak = max(report.l2_norms)
    if report.l2_norms[0] > 0 and peak > ceiling:
        logger.warning("Solution norm exceeded stability ceiling", extra={"peak": peak, "ceiling": ceiling})


def run(
    problem: ProblemSpec,
    scheme: ThetaScheme,
    method: MethodTypes,
    fine_space: FeSpace,
    coarse_space: FeSpace | None = None,
    cfg: SolverConfig | None = None,
    callback: StepCallback | None = None,
) -> tuple[StepState, RunReport]:
    """
    Integrate from t = 0 to t = num_steps * dt.

    Args:
        problem (ProblemSpec): PDE data.
        scheme (ThetaScheme): Time discretization; step 1 always uses the Crank-Nicolson startup.
        method (MethodTypes): "mfe" solves the nonlinear system on `fine_space`; "tgmfe" solves it on
            `coarse_space` and then one linear system per step on `fine_space`.
        fine_space (FeSpace): Space the returned state lives on.
        coarse_space (FeSpace, optional): Required for "tgmfe".
        cfg (SolverConfig, optional): Solver tolerances.
        callback (StepCallback, optional): Called with every accepted fine state, level 0 included.

    Returns:
        tuple[StepState, RunReport]: Final state and diagnostics. Errors are filled in when the problem
            has an exact solution; they are computed outside the timed region.

    Raises:
        StepFailureError: A step failed; the exception carries the partial report.
    """
    if method not in _DRIVERS:
        raise InvalidArgumentError(f"Unknown method '{method}', expected one of {sorted(_DRIVERS)}")
    if method == "tgmfe" and coarse_space is None:
        raise InvalidArgumentError("The two-grid method needs a coarse space")
    if problem.domain != fine_space.mesh.domain:
        raise InvalidArgumentError("The fine space does not cover the problem domain")
    cfg = cfg or SolverConfig()
    report = RunReport(method=method, problem=problem.name, num_steps=scheme.num_steps)
    logger.info(
        "Starting run",
        extra={"method": method, "problem": problem.name, "theta": scheme.theta, "steps": scheme.num_steps},
    )

    try:
        with RunGuard(report.timer, on_failure_callback=report.mark_failed):
            state = _DRIVERS[method](problem, scheme, fine_space, coarse_space, cfg, report, callback)
    except (NewtonConvergenceError, LinearSolverError) as e:
        logger.error("Run aborted", extra={"method": method, "steps_completed": report.steps_completed})
        raise StepFailureError(f"{method} run of {problem.name} failed: {e}", report) from e

    _check_stability(report, cfg)
    if problem.exact_u is not None:
        report.err_u = l2_error(state.u, problem.exact_u_at(scheme.final_time))
    if problem.exact_sigma is not None:
        report.err_sigma = l2_error(state.sigma, problem.exact_sigma_at(scheme.final_time))
    logger.info(
        "Run finished",
        extra={"method": method, "cpu_seconds": report.cpu_seconds, "err_u": report.err_u},
    )
    return state, report
