import numpy as np
import pytest

import twogridmfe as tg


@pytest.mark.parametrize(
    ("theta", "expected"),
    [(0.5, (1.0, -1.0, 0.0)), (0.0, (1.5, -2.0, 0.5)), (0.25, (1.25, -1.5, 0.25))],
)
def test_coefficients(theta, expected):
    scheme = tg.ThetaScheme(theta=theta, dt=0.1, num_steps=10)
    np.testing.assert_allclose(scheme.coefficients, np.array(expected) / 0.1)
    assert sum(scheme.coefficients) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("theta", [-0.1, 0.6])
def test_theta_out_of_range(theta):
    with pytest.raises(tg.InvalidArgumentError):
        tg.ThetaScheme(theta=theta, dt=0.1, num_steps=10)


def test_invalid_grid():
    with pytest.raises(tg.InvalidArgumentError):
        tg.ThetaScheme(theta=0.2, dt=0.0, num_steps=10)
    with pytest.raises(tg.InvalidArgumentError):
        tg.ThetaScheme(theta=0.2, dt=0.1, num_steps=0)
    with pytest.raises(tg.InvalidArgumentError):
        tg.ThetaScheme.from_final_time(0.2, 0.3, 1.0)


def test_from_final_time():
    scheme = tg.ThetaScheme.from_final_time(0.1, 1 / 25, 1.0)
    assert scheme.num_steps == 25
    assert scheme.final_time == pytest.approx(1.0)
    assert scheme.shifted_time(3) == pytest.approx(2.9 / 25)


@pytest.mark.parametrize("theta", [0.0, 0.1, 0.25, 0.5])
def test_exact_on_affine_functions(theta):
    scheme = tg.ThetaScheme(theta=theta, dt=0.05, num_steps=20)
    for n in range(2, 21):
        t = [scheme.time(k) for k in (n, n - 1, n - 2)]
        assert tg.dt_apply(scheme, 7.0, 7.0, 7.0) == pytest.approx(0.0, abs=1e-12)
        assert tg.dt_apply(scheme, *(3.0 * tk - 1.0 for tk in t)) == pytest.approx(3.0)
        assert tg.theta_combine(scheme, 3.0 * t[0] - 1.0, 3.0 * t[1] - 1.0) == pytest.approx(
            3.0 * scheme.shifted_time(n) - 1.0
        )


@pytest.mark.parametrize("theta", [0.0, 0.2, 0.5])
def test_exact_on_quadratics(theta):
    scheme = tg.ThetaScheme(theta=theta, dt=0.1, num_steps=10)
    for n in range(2, 11):
        t = [scheme.time(k) for k in (n, n - 1, n - 2)]
        assert tg.dt_apply(scheme, *(tk**2 for tk in t)) == pytest.approx(2.0 * scheme.shifted_time(n))


@pytest.mark.parametrize("theta", [0.0, 0.1, 0.3, 0.5])
def test_truncation_is_second_order(theta):
    errors = []
    for dt in (0.1, 0.05):
        scheme = tg.ThetaScheme.from_final_time(theta, dt, 1.0)
        worst = 0.0
        for n in range(2, scheme.num_steps + 1):
            values = np.exp([scheme.time(k) for k in (n, n - 1, n - 2)])
            worst = max(worst, abs(tg.dt_apply(scheme, *values) - np.exp(scheme.shifted_time(n))))
        errors.append(worst)
    assert tg.convergence_order(errors[0], errors[1], 0.1, 0.05) >= 1.9


def test_vector_arguments():
    scheme = tg.ThetaScheme(theta=0.0, dt=1.0, num_steps=3)
    values = tg.dt_apply(scheme, np.array([4.0, 1.0]), np.array([1.0, 1.0]), np.zeros(2))
    np.testing.assert_allclose(values, [4.0, -0.5])
    np.testing.assert_allclose(tg.theta_combine(scheme, np.array([4.0, 1.0]), np.zeros(2)), [4.0, 1.0])


@pytest.mark.parametrize(
    ("theta", "norms", "expected"),
    [(0.5, (1.0, 1.0, 1.0), 2.0), (0.0, (1.0, 0.0, 1.0), 5.0), (0.0, (0.0, 0.0, 0.0), 0.0)],
)
def test_energy_examples(theta, norms, expected):
    scheme = tg.ThetaScheme(theta=theta, dt=0.1, num_steps=1)
    assert tg.energy_H(scheme, *norms) == pytest.approx(expected)


def test_energy_rejects_negative_norms():
    scheme = tg.ThetaScheme(theta=0.2, dt=0.1, num_steps=1)
    with pytest.raises(tg.InvalidArgumentError):
        tg.energy_H(scheme, -1.0, 0.0, 0.0)


def test_energy_inequalities(rng):
    for _ in range(1000):
        theta = rng.uniform(0.0, 0.5)
        dt = rng.uniform(1e-3, 1.0)
        scheme = tg.ThetaScheme(theta=theta, dt=dt, num_steps=2)
        a, b, c = rng.normal(size=3)

        energy_n = tg.energy_H(scheme, abs(a), abs(b), abs(a - b))
        energy_nm1 = tg.energy_H(scheme, abs(b), abs(c), abs(b - c))
        scale = max(1.0, a * a, b * b, c * c)
        # The energy controls the newest level
        assert energy_n >= a * a / (1.0 - theta) - 1e-12 * scale
        # and its increment bounds the discrete derivative paired with the weighted level
        pairing = tg.dt_apply(scheme, a, b, c) * tg.theta_combine(scheme, a, b)
        assert pairing >= (energy_n - energy_nm1) / (4.0 * dt) - 1e-12 * scale / dt


def test_step_forms():
    scheme = tg.ThetaScheme(theta=0.2, dt=0.1, num_steps=3)
    first = tg.step_form(scheme, 1)
    assert first.derivative == pytest.approx((10.0, -10.0, 0.0))
    assert first.weights == (0.5, 0.5)
    assert first.source_times == pytest.approx((0.1, 0.0))
    assert not first.uses_second_history

    second = tg.step_form(scheme, 2)
    assert second.derivative == pytest.approx(scheme.coefficients)
    assert (second.w_n, second.w_nm1) == pytest.approx((0.8, 0.2))
    assert second.source_times == pytest.approx((0.2, 0.1))
    assert second.uses_second_history
    assert second.a0 == pytest.approx(2.6 / 0.2)

    startup = tg.startup_residual_form(scheme)
    assert startup.derivative == pytest.approx((10.0, -10.0))
    assert startup.weights == (0.5, 0.5)

    for n in (0, 4):
        with pytest.raises(tg.InvalidArgumentError):
            tg.step_form(scheme, n)


def test_crank_nicolson_second_step_has_no_second_history():
    scheme = tg.ThetaScheme(theta=0.5, dt=0.1, num_steps=3)
    assert not tg.step_form(scheme, 2).uses_second_history
