import numpy as np
import pytest

import twogridmfe as tg
from twogridmfe.problems import efk_f, efk_f_prime, finite_difference_laplacian


def _pde_residual(problem, points, t, fd_step=1e-3, dt_step=1e-5):
    """u_t + gamma lap^2 u - lap u + f(u) - g of the exact solution by finite differences."""
    u = problem.exact_u_at(t)
    u_t = (problem.exact_u(points, t + dt_step) - problem.exact_u(points, t - dt_step)) / (2 * dt_step)
    lap = finite_difference_laplacian(u, points, fd_step)
    bilap = finite_difference_laplacian(lambda p: finite_difference_laplacian(u, p, fd_step), points, fd_step)
    return u_t + problem.gamma * bilap - lap + problem.f(u(points)) - problem.g(points, t)


@pytest.mark.parametrize(("problem_id", "gamma"), [("example41", 1.0), ("example41", 0.1), ("example43", 10.0)])
def test_manufactured_source_solves_the_equation(problem_id, gamma, rng):
    problem = tg.get_problem(problem_id, gamma)
    lower = np.array(problem.domain.lower)
    points = lower + np.array(problem.domain.extent) * rng.uniform(0.05, 0.95, size=(50, problem.dim))
    for t in (0.1, 0.5, 0.9):
        residual = _pde_residual(problem, points, t)
        scale = max(1.0, float(np.max(np.abs(problem.g(points, t)))))
        assert np.max(np.abs(residual)) <= 1e-4 * scale, f"PDE residual too large at t={t}"


def test_example41_source_value():
    problem = tg.example41(1.0)
    value = problem.g(np.array([[0.25, 0.25]]), 0.0)[0]
    assert value == pytest.approx(8 * np.pi**2 - 2 + 64 * np.pi**4 + 1, rel=1e-12)
    assert value == pytest.approx(6312.1, abs=0.1)


def test_example41_sigma():
    problem = tg.example41(1.0)
    points = np.array([[0.25, 0.25], [0.1, -0.3]])
    np.testing.assert_allclose(problem.exact_sigma(points, 0.5), -8 * np.pi**2 * problem.exact_u(points, 0.5))


def test_example42_data():
    problem = tg.example42(1.0)
    assert not problem.has_exact_solution
    assert problem.u0(np.array([[0.5, 0.5]]))[0] == pytest.approx(2.44140625e-4, rel=1e-14)
    edges = np.array([[0.0, 0.3], [1.0, 0.7], [0.4, 0.0], [0.2, 1.0]])
    np.testing.assert_array_equal(problem.u0(edges), 0.0)
    np.testing.assert_array_equal(problem.g(edges, 0.3), 0.0)
    with pytest.raises(tg.InvalidArgumentError):
        problem.exact_u_at(0.0)


def test_example43_data():
    problem = tg.example43(1.0)
    assert problem.dim == 1
    points = np.linspace(-1, 1, 11)[:, None]
    np.testing.assert_allclose(problem.u0(points), problem.exact_u(points, 0.0))
    np.testing.assert_allclose(problem.exact_sigma(points, 0.2), -4 * np.pi**2 * problem.exact_u(points, 0.2))


def test_nonlinearity():
    u = np.array([-1.0, 0.0, 0.5, 1.0])
    np.testing.assert_allclose(efk_f(u), [0.0, 0.0, -0.375, 0.0])
    np.testing.assert_allclose(efk_f_prime(u), [2.0, -1.0, -0.25, 2.0])


@pytest.mark.parametrize("gamma", [0.0, -1.0])
def test_gamma_must_be_positive(gamma):
    with pytest.raises(tg.InvalidArgumentError):
        tg.example43(gamma)


def test_unknown_problem():
    with pytest.raises(tg.InvalidArgumentError):
        tg.get_problem("example44", 1.0)


def test_sigma_requires_u():
    problem = tg.example43(1.0)
    with pytest.raises(tg.InvalidArgumentError):
        tg.ProblemSpec(
            name="broken",
            domain=problem.domain,
            final_time=1.0,
            gamma=1.0,
            f=efk_f,
            f_prime=efk_f_prime,
            g=problem.g,
            u0=problem.u0,
            exact_sigma=problem.exact_sigma,
        )


@pytest.mark.parametrize("problem_id", ["example41", "example42", "example43"])
def test_builtin_problems_are_consistent(problem_id):
    tg.check_consistency(tg.get_problem(problem_id, 1.0))


def test_consistency_check_catches_wrong_sigma():
    problem = tg.example43(1.0)
    broken = tg.ProblemSpec(
        name="wrong-sigma",
        domain=problem.domain,
        final_time=1.0,
        gamma=1.0,
        f=efk_f,
        f_prime=efk_f_prime,
        g=problem.g,
        u0=problem.u0,
        exact_u=problem.exact_u,
        exact_sigma=lambda p, t: 2.0 * problem.exact_sigma(p, t),
    )
    with pytest.raises(tg.InvalidArgumentError):
        tg.check_consistency(broken)


def test_consistency_check_catches_wrong_initial_value():
    problem = tg.example43(1.0)
    broken = tg.ProblemSpec(
        name="wrong-u0",
        domain=problem.domain,
        final_time=1.0,
        gamma=1.0,
        f=efk_f,
        f_prime=efk_f_prime,
        g=problem.g,
        u0=lambda p: problem.u0(p) + 1e-6,
        exact_u=problem.exact_u,
    )
    with pytest.raises(tg.InvalidArgumentError):
        tg.check_consistency(broken)


def test_laplacian_of_quadratic():
    points = np.array([[0.3, -0.2], [0.0, 0.5]])
    lap = finite_difference_laplacian(lambda p: p[:, 0] ** 2 + 3 * p[:, 1] ** 2, points, 1e-3)
    np.testing.assert_allclose(lap, 8.0, rtol=1e-6)
