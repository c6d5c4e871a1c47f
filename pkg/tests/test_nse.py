import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochflow.errors import HorizonTooLongError
from stochflow.grids import GridField
from stochflow.nse import (NsState, VelocityLevels, biot_savart, biot_savart_free, curl, divergence,
                           fixed_point_solve, heat_decay, k3_kernel, leray_project, pushforward_velocity,
                           random_vortex, taylor_green, vorticity_representation, w1p_norm)
from stochflow.nse import _frozen_noise

modes = st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.floats(-1, 1), st.floats(0, 6.3)),
                 min_size=1, max_size=5)


def _field(terms, m=16, ncomp=2):
    g = GridField.periodic_box(2 * np.pi, (m, m), np.zeros((ncomp, m, m)))
    x, y = g.mesh()
    vals = np.zeros((ncomp, m, m))
    for c in range(ncomp):
        for k, l, a, ph in terms:
            vals[c] += a * np.cos((c + 1) * ph + k * x + l * y)
    return g.with_values(vals)


def _mean_zero(f):
    return f.with_values(f.values - f.values.mean(axis=(1, 2), keepdims=True))


@given(modes)
def test_leray_removes_gradients(terms):
    g = _field(terms, ncomp=1)
    pot = g.from_fft(g.fft())
    grad = pot.with_values(pot.gradient()[0])
    assert np.abs(leray_project(grad).values).max() < 1e-10


@given(modes, modes)
def test_leray_is_an_idempotent_projection(t1, t2):
    v = _field(t1)
    p = leray_project(v)
    assert np.abs(leray_project(p).values - p.values).max() < 1e-12
    assert np.abs(divergence(p).values).max() < 1e-8
    # a divergence-free field plus a gradient splits back into its parts
    g = _field(t2, ncomp=1)
    grad = g.with_values(g.gradient()[0])
    np.testing.assert_allclose(leray_project(p.with_values(p.values + grad.values)).values, p.values,
                               atol=1e-10)


def test_leray_keeps_divergence_free_field():
    tg = taylor_green(16)
    np.testing.assert_allclose(leray_project(tg).values, tg.values, atol=1e-13)


@given(modes)
def test_curl_inverts_biot_savart_2d(terms):
    w = _mean_zero(_field(terms, ncomp=1))
    assert np.abs(curl(biot_savart(w)).values - w.values).max() < 1e-8


def test_curl_inverts_biot_savart_3d():
    m = 12
    g = GridField.periodic_box(2 * np.pi, (m, m, m), np.zeros((3, m, m, m)))
    x, y, z = g.mesh()
    a = g.with_values(np.stack([np.sin(y + 2 * z), np.cos(x - z), np.sin(2 * x + y)]))
    w = curl(a)
    assert np.abs(curl(biot_savart(w)).values - w.values).max() < 1e-8


def test_biot_savart_edge_cases():
    g = GridField.periodic_box(2 * np.pi, (8, 8), np.ones((1, 8, 8)))
    with pytest.raises(ValueError):
        biot_savart(g)
    assert np.all(biot_savart(g.with_values(np.zeros((1, 8, 8)))).values == 0)


def test_k3_kernel_example():
    np.testing.assert_allclose(k3_kernel([1.0, 0.0, 0.0], [0.0, -1.0, 0.0]), [0, 0, -1 / (4 * np.pi)])
    np.testing.assert_allclose(k3_kernel([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), [0, 0, 1 / (4 * np.pi)])


def test_point_vortex_speed_outside_three_blob_radii():
    m, L = 33, 2.0
    g = GridField(np.full(2, -L), np.full(2, L), np.zeros((1, m, m)), periodic=False)
    vals = np.zeros((1, m, m))
    vals[0, m // 2, m // 2] = 1.0 / g.cell_volume
    w = g.with_values(vals)
    delta = 2 * g.spacing.max()
    for r in (3 * delta, 4 * delta, 8 * delta):
        u = biot_savart_free(w, [[r, 0.0]], delta)[0]
        assert u[0] == pytest.approx(0.0, abs=1e-14)
        assert u[1] == pytest.approx(1 / (2 * np.pi * r), rel=1e-2)


def test_zero_data_pushes_forward_to_zero():
    phi = taylor_green(8).with_values(np.zeros((2, 8, 8)))
    st_ = fixed_point_solve(phi, 0.1, 0.1, 10, 0.02)
    assert st_.iterations == 1 and st_.distances == [0.0]
    assert np.all(st_.velocity.values == 0)


def _zero_levels(phi, horizon, n):
    return VelocityLevels.zeros(phi, np.linspace(-horizon, 0.0, n + 1))


def test_pushforward_without_velocity_is_the_heat_flow():
    m, nu, stride = 32, 0.1, 5
    phi = taylor_green(m)
    u = _zero_levels(phi, 0.25, 2)
    noise = _frozen_noise(u, 4000, 7, stride, nu)
    got, se = pushforward_velocity(u, phi, 0, noise, stride, return_se=True)
    exact = heat_decay(phi, nu, -0.25)
    # bilinear interpolation error of a unit-wavenumber field is at most h^2 / 4
    h = 2 * np.pi / m
    assert np.abs(got.values - exact.values).max() < 3 * se.values.max() + h**2 / 4


def test_generic_and_planar_kernels_agree():
    phi = taylor_green(12)
    times = np.linspace(-0.1, 0.0, 3)
    u = VelocityLevels(times, np.stack([heat_decay(phi, 0.1, t).values for t in times]), phi.lo, phi.hi)
    noise = _frozen_noise(u, 30, 3, 5, 0.1)
    a = pushforward_velocity(u, phi, 0, noise, 5)
    b = pushforward_velocity(u, phi, 0, noise, 5, generic=True)
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_heat_decay_energy_decreases_in_time():
    phi = leray_project(taylor_green(16).with_values(taylor_green(16).values + 0.3 * np.cos(
        taylor_green(16).mesh()[0] * 2)[None]))
    energies = [heat_decay(phi, 0.1, t).norm(2) for t in (0.0, -0.1, -0.2, -0.4)]
    assert all(a > b for a, b in zip(energies, energies[1:]))


def test_small_taylor_green_fixed_point():
    st_ = fixed_point_solve(taylor_green(16), 0.1, 0.1, 500, 0.01, stride=5)
    assert all(a > b for a, b in zip(st_.distances, st_.distances[1:]))
    assert st_.distances[-1] < 1e-4
    for j, t in enumerate(st_.velocity.times):
        exact = np.exp(-0.2 * abs(t)) * st_.phi.values
        assert np.linalg.norm(st_.velocity.values[j] - exact) / np.linalg.norm(exact) < 0.05
    assert np.all(st_.contraction_ratios() < 1)


def test_long_horizon_raises():
    phi = taylor_green(8)
    big = phi.with_values(30 * phi.values)
    with pytest.raises(HorizonTooLongError) as err:
        fixed_point_solve(big, 0.01, 1.0, 50, 0.05, stride=2, max_iter=12)
    assert err.value.payload["horizon"] == -1.0


def test_fixed_point_argument_checks():
    with pytest.raises(ValueError):
        fixed_point_solve(taylor_green(8), 0.0, 0.1, 10, 0.01)
    with pytest.raises(ValueError):
        fixed_point_solve(taylor_green(8), 0.1, 0.1, 10, 0.03, stride=5)


def test_vorticity_without_velocity_is_heat_flow():
    phi = taylor_green(16)
    state = NsState(_zero_levels(phi, 0.2, 2), phi, 0.1, 3000, 0.02, 5, 11)
    w = vorticity_representation(state)
    exact = heat_decay(curl(phi), 0.1, -0.2)
    h = 2 * np.pi / 16
    assert np.abs(w.values - exact.values).max() < 0.05 + h**2 / 2


def test_vorticity_3d_warns():
    m = 6
    g = GridField.periodic_box(2 * np.pi, (m, m, m), np.zeros((3, m, m, m)))
    x, y, z = g.mesh()
    phi = g.with_values(np.stack([np.sin(z), np.sin(x), np.sin(y)]))
    state = NsState(_zero_levels(phi, 0.02, 1), phi, 0.1, 20, 0.02, 1, 0)
    with pytest.warns(RuntimeWarning):
        w = vorticity_representation(state)
    assert w.values.shape == (3, m, m, m)


def test_random_vortex_angular_impulse_grows_linearly():
    # sum G_i |X_i|^2 is invariant for the blob dynamics; the noise adds 4 nu t sum G_i
    m, nu, T = 16, 0.05, 0.5
    g = GridField(np.full(2, -2.0), np.full(2, 2.0), np.zeros((1, m, m)), periodic=False)
    x, y = g.mesh()
    w0 = g.with_values(np.exp(-(x**2 + y**2) / 0.5)[None])
    total = []
    for seed in range(20):
        run = random_vortex(w0, nu, T, 0.01, seed=seed, cutoff=1e-3)
        imp = np.sum(run.circulation * np.sum(run.positions**2, axis=-1), axis=1)
        total.append(imp[-1] - imp[0])
    gam = run.circulation.sum()
    se = np.std(total, ddof=1) / np.sqrt(len(total))
    assert abs(np.mean(total) - 4 * nu * T * gam) < 3 * se
    assert run.velocity([[0.0, 0.0]]).shape == (1, 2)
    inviscid = random_vortex(w0, 0.0, T, 0.01, cutoff=1e-3)
    imp = np.sum(inviscid.circulation * np.sum(inviscid.positions**2, axis=-1), axis=1)
    assert abs(imp[-1] - imp[0]) < 1e-3 * imp[0]


def test_w1p_norm_of_constant_field():
    g = GridField.periodic_box(2.0, (8, 8), np.full((1, 8, 8), 3.0))
    assert w1p_norm(g, 4.0) == pytest.approx(3.0 * 4.0 ** 0.25)


def test_export_manifest(tmp_path):
    st_ = fixed_point_solve(taylor_green(8), 0.1, 0.04, 20, 0.02, stride=1)
    files = st_.export(tmp_path)
    man = json.loads((tmp_path / "nse_manifest.json").read_text())
    assert man["grid"] == [8, 8] and man["T"] == -0.04 and len(man["distances"]) == st_.iterations
    back = GridField.load(files[0])
    np.testing.assert_array_equal(back.values, st_.velocity.values[0])
