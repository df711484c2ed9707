from typing import Any

from .analysis import (
    ErrorRecord,
    convergence_order,
    fill_orders,
    h1_seminorm_error,
    l2_error,
    reference_error,
)
from .constants import MethodTypes, ProblemIds
from .errors import (
    ConfigError,
    InvalidArgumentError,
    LinearSolverError,
    NewtonConvergenceError,
    OutOfDomainError,
    StepFailureError,
    TwoGridError,
)
from .experiment_params import ExperimentConfig, parse_step
from .fespace import (
    FeFunction,
    FeSpace,
    QuadratureRule,
    QuadratureSampler,
    apply_dirichlet,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    extend_by_zero,
)
from .mesh import Domain, Mesh, locate_point, locate_points, make_uniform_mesh
from .msolve import (
    DiscreteOperators,
    RunReport,
    SolverConfig,
    StepState,
    init_state,
    mfe_step,
    run,
    tg_coarse_run,
    tg_fine_step,
)
from .problems import ProblemSpec, check_consistency, example41, example42, example43, get_problem
from .sparse import BlockSystem, compose_block, from_triplets, solve
from .theta import ThetaScheme, dt_apply, energy_H, startup_residual_form, step_form, theta_combine


def simulate(
    problem: ProblemIds | ProblemSpec,
    theta: float,
    dt: float | str,
    fine_div: int | list[int],
    method: MethodTypes = "mfe",
    coarse_div: int | list[int] | None = None,
    gamma: float = 1.0,
    **solver_kwargs: Any,
) -> tuple[StepState, RunReport]:
    """
    Run one of the built-in problems (or a custom ProblemSpec) to its final time.

    Parameters:
        problem (ProblemIds | ProblemSpec): Built-in id such as "example41", or a custom problem.
        theta (float): Scheme parameter in [0, 1/2].
        dt (float | str): Time step, a fraction string like "1/25" is accepted.
        fine_div (int | list[int]): Elements per axis of the fine (or only) mesh.
        method (MethodTypes): "mfe" or "tgmfe".
        coarse_div (int | list[int], optional): Elements per axis of the coarse mesh, needed for "tgmfe".
        gamma (float): Coefficient of the fourth-order term for built-in problems.
        **solver_kwargs: Fields of SolverConfig.

    Returns:
        tuple[StepState, RunReport]: Final state and run diagnostics.
    """
    spec = problem if isinstance(problem, ProblemSpec) else get_problem(problem, gamma)
    scheme = ThetaScheme.from_final_time(theta, parse_step(dt), spec.final_time)
    fine_space = FeSpace(make_uniform_mesh(spec.domain, fine_div))
    coarse_space = FeSpace(make_uniform_mesh(spec.domain, coarse_div)) if coarse_div is not None else None
    return run(spec, scheme, method, fine_space, coarse_space, SolverConfig(**solver_kwargs))


__all__ = [
    "BlockSystem",
    "ConfigError",
    "DiscreteOperators",
    "Domain",
    "ErrorRecord",
    "ExperimentConfig",
    "FeFunction",
    "FeSpace",
    "InvalidArgumentError",
    "LinearSolverError",
    "Mesh",
    "NewtonConvergenceError",
    "OutOfDomainError",
    "ProblemSpec",
    "QuadratureRule",
    "QuadratureSampler",
    "RunReport",
    "SolverConfig",
    "StepFailureError",
    "StepState",
    "ThetaScheme",
    "TwoGridError",
    "apply_dirichlet",
    "assemble_load",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "check_consistency",
    "compose_block",
    "convergence_order",
    "dt_apply",
    "energy_H",
    "example41",
    "example42",
    "example43",
    "extend_by_zero",
    "fill_orders",
    "from_triplets",
    "get_problem",
    "h1_seminorm_error",
    "init_state",
    "l2_error",
    "locate_point",
    "locate_points",
    "make_uniform_mesh",
    "mfe_step",
    "reference_error",
    "run",
    "simulate",
    "solve",
    "startup_residual_form",
    "step_form",
    "tg_coarse_run",
    "tg_fine_step",
    "theta_combine",
]
