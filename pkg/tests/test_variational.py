import json

import numpy as np
import pytest
from scipy.linalg import expm

from stochflow import presets
from stochflow.fields import DiffusionSpec, DriftSpec
from stochflow.paths import TimeGrid, generate
from stochflow.solver import euler_maruyama
from stochflow.variational import (bel_gradient, bel_weights, fd_gradient_mc, gradient_direction,
                                   jacobian_flow, jacobian_moment, malliavin_covariance,
                                   malliavin_derivative)


def _run(b, s, x0, n, steps, seed=0, horizon=1.0):
    noise = generate(seed, n, b.dim, TimeGrid(0.0, horizon, steps))
    return euler_maruyama(x0, b, s, noise), noise


def test_identity_jacobian_without_coefficient_gradients():
    b, s = DriftSpec.zero(2), DiffusionSpec.scalar(1.3, 2)
    paths, noise = _run(b, s, [0.0, 0.0], 10, 20)
    jac = jacobian_flow(paths, b, s, noise)
    assert np.array_equal(jac.J, np.broadcast_to(np.eye(2), jac.J.shape))
    assert jacobian_moment(jac, 2.0) == (pytest.approx(2.0), 0.0)


def test_linear_drift_jacobian_is_the_euler_matrix_power():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    b, s = presets.linear(A), DiffusionSpec.scalar(0.5, 2)
    paths, noise = _run(b, s, [1.0, 0.0], 5, 1000)
    J = jacobian_flow(paths, b, s, noise).final
    np.testing.assert_allclose(J, np.broadcast_to(np.linalg.matrix_power(np.eye(2) + A * 1e-3, 1000), J.shape),
                               atol=1e-12)
    assert np.linalg.norm(J[0] - expm(A)) < 5e-3


def test_one_dimensional_closed_form_jacobian():
    # b = 0, sigma = 1 + a sin x: J = exp(int sigma'(X) dW - 1/2 int sigma'(X)^2 dr)
    a = 0.4
    b, s = DriftSpec.zero(1), presets.multiplicative(1, a)
    gaps = []
    for steps in (64, 256, 1024):
        paths, noise = _run(b, s, [0.3], 4000, steps, seed=5)
        J = jacobian_flow(paths, b, s, noise).final[:, 0, 0]
        X = paths.X[:, :-1, 0]
        ds = a * np.cos(X)
        dW = noise.materialize()[:, :, 0]
        closed = np.exp(np.sum(ds * dW, axis=1) - 0.5 * np.sum(ds**2, axis=1) * noise.dt)
        gaps.append(np.mean(np.abs(J - closed)))
    assert gaps[0] > gaps[1] > gaps[2]
    # strong order one half: quartering the step roughly halves the gap
    assert 1.5 < gaps[0] / gaps[1] < 3.0 and 1.5 < gaps[1] / gaps[2] < 3.0


def test_jacobian_matches_finite_difference_of_paths():
    b, s = presets.smooth_2d(0.5), presets.multiplicative(2, 0.2)
    x0, h = np.array([0.3, -0.4]), 1e-6
    paths, noise = _run(b, s, x0, 50, 200, seed=2)
    J = jacobian_flow(paths, b, s, noise).final
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        up = euler_maruyama(x0 + e, b, s, noise, record="final").final
        dn = euler_maruyama(x0 - e, b, s, noise, record="final").final
        np.testing.assert_allclose(J[:, :, j], (up - dn) / (2 * h), atol=1e-6)


def test_malliavin_derivative_with_constant_coefficients():
    b, s = DriftSpec.zero(2), DiffusionSpec.constant([[1.0, 0.5], [0.0, 2.0]])
    paths, noise = _run(b, s, [0.0, 0.0], 3, 40)
    hdot = np.stack([np.linspace(0, 1, 40), np.ones(40)], axis=1)
    D = malliavin_derivative(paths, b, s, noise, hdot).DhX[:, -1]
    expect = s.matrix @ hdot.sum(axis=0) * noise.dt
    np.testing.assert_allclose(D, np.broadcast_to(expect, D.shape), atol=1e-13)


def test_variation_of_constants_identity():
    b, s = presets.smooth_2d(0.5), presets.multiplicative(2, 0.2)
    paths, noise = _run(b, s, [0.5, -0.2], 100, 500, seed=4)
    jac = jacobian_flow(paths, b, s, noise)
    for v in (np.array([1.0, 0.0]), np.array([0.3, -0.8])):
        hdot = gradient_direction(paths, jac, s, v)
        D = malliavin_derivative(paths, b, s, noise, hdot).DhX[:, -1]
        assert np.max(np.abs(D - jac.final @ v)) < 1e-2


def test_malliavin_covariance_is_symmetric_positive():
    b, s = presets.smooth_2d(0.5), presets.multiplicative(2, 0.2)
    paths, noise = _run(b, s, [0.5, -0.2], 30, 100, seed=6)
    cov = malliavin_covariance(paths, jacobian_flow(paths, b, s, noise), s)
    np.testing.assert_allclose(cov, np.swapaxes(cov, 1, 2))
    assert np.linalg.eigvalsh(cov).min() > 0


def test_malliavin_argument_checks():
    b, s = DriftSpec.zero(1), DiffusionSpec.scalar(1.0, 1)
    paths, noise = _run(b, s, [0.0], 4, 10)
    with pytest.raises(ValueError):
        malliavin_derivative(paths, b, s, noise, np.zeros((9, 1)))
    with pytest.raises(ValueError):
        malliavin_derivative(paths, b, s, noise, np.zeros((3, 10, 1)))
    with pytest.raises(ValueError):
        malliavin_derivative(paths, b, s, noise, np.full((10, 1), np.nan))
    other = generate(0, 4, 1, TimeGrid(0.0, 1.0, 11))
    with pytest.raises(ValueError):
        jacobian_flow(paths, b, s, other)
    final = euler_maruyama([0.0], b, s, noise, record="final")
    with pytest.raises(ValueError):
        jacobian_flow(final, b, s, noise)


def test_bel_sin_benchmark_small():
    b, s = DriftSpec.zero(1), DiffusionSpec.scalar(1.0, 1)
    paths, noise = _run(b, s, [0.4], 20_000, 20, seed=8)
    est = bel_gradient(paths, jacobian_flow(paths, b, s, noise), s, presets.named_function("sin"), noise)
    assert abs(est.estimate[0] - np.cos(0.4) * np.exp(-0.5)) < 4 * est.std_error[0]
    doc = json.loads(json.dumps(est.to_json()))
    assert set(doc) == {"point", "horizon", "estimate", "std_error", "n_paths", "dt"}


def test_fd_gradient_of_linear_observable_is_exact():
    rate, steps = 0.7, 50
    noise = generate(9, 100, 1, TimeGrid(0.0, 1.0, steps))
    est = fd_gradient_mc([0.2], presets.ou(1, rate), DiffusionSpec.scalar(1.0, 1),
                         presets.named_function("coord0"), noise)
    assert est.estimate[0] == pytest.approx((1 - rate / steps) ** steps, rel=1e-8)
    assert est.std_error[0] < 1e-8


def test_bel_flags_near_singular_diffusion():
    # sigma vanishes near x = 1 while the declared ellipticity constant is K = 1
    fn = lambda t, x: (np.abs(x[..., 0] - 1.0) + 1e-3)[..., None, None] * np.ones((1, 1))
    s = DiffusionSpec(fn, 1, 1.0, 0.5, False, None, "degenerate")
    b = DriftSpec.zero(1)
    paths, noise = _run(b, s, [0.95], 200, 20, seed=10)
    _, flagged = bel_weights(paths, jacobian_flow(paths, b, s, noise), s, noise)
    assert flagged.any()
