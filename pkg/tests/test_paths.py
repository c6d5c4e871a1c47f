import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochflow._philox import philox4x32, standard_normals
from stochflow.paths import BrownianEnsemble, PathEnsemble, TimeGrid, generate

from oracles import normal_reference, philox_reference

KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    got = philox4x32(*[np.uint64(v) for v in ctr], *[np.uint64(v) for v in key])
    assert tuple(int(v) for v in got) == expected
    assert philox_reference(ctr, key) == expected


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 50), st.integers(0, 3))
def test_normals_match_reference(seed, path, step, comp):
    z = standard_normals(seed, path, 1, step, 1, comp + 1)
    assert z[0, 0, comp] == normal_reference(seed, path, step, comp)


def test_time_grid_validation():
    g = TimeGrid(0.0, 1.0, 10)
    assert g.dt == pytest.approx(0.1)
    assert g.horizon == 1.0
    assert len(g.nodes) == 11
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)


def test_seed_and_size_validation():
    g = TimeGrid(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        generate(-1, 10, 1, g)
    with pytest.raises(ValueError):
        generate(2**64, 10, 1, g)
    with pytest.raises(ValueError):
        generate(0, 0, 1, g)


def test_same_seed_same_increments():
    g = TimeGrid(0.0, 1.0, 37)
    a = generate(11, 50, 3, g).materialize()
    b = generate(11, 50, 3, g).materialize()
    c = generate(12, 50, 3, g).materialize()
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


@given(st.integers(0, 30), st.integers(1, 10), st.integers(0, 40), st.integers(1, 9))
def test_sub_block_regeneration_is_exact(p0, np_, k0, nk):
    g = TimeGrid(0.0, 1.0, 50)
    ens = generate(5, 40, 2, g)
    full = ens.materialize()
    p1, k1 = min(40, p0 + np_), min(50, k0 + nk)
    assert np.array_equal(ens.increments(k0, k1, p0, p1), full[p0:p1, k0:k1])


def test_path_offset_shifts_paths():
    g = TimeGrid(0.0, 1.0, 8)
    full = generate(3, 20, 2, g).materialize()
    part = BrownianEnsemble(3, 5, 2, g, path_offset=10).materialize()
    assert np.array_equal(part, full[10:15])
    assert np.array_equal(generate(3, 20, 2, g).subset(10, 15).materialize(), full[10:15])


def test_increment_statistics():
    # mean 0 and variance dt within 4 standard errors, no cross correlation
    g = TimeGrid(0.0, 2.0, 8)
    dW = generate(2024, 50_000, 2, g).materialize().reshape(-1, 2)
    n = dW.shape[0]
    assert np.all(np.abs(dW.mean(axis=0)) < 4 * np.sqrt(g.dt / n))
    var_se = g.dt * np.sqrt(2.0 / n)
    assert np.all(np.abs(dW.var(axis=0) - g.dt) < 4 * var_se)
    corr = np.mean(dW[:, 0] * dW[:, 1]) / g.dt
    assert abs(corr) < 4 / np.sqrt(n)


def test_brownian_motion_and_coarsen():
    g = TimeGrid(0.0, 1.0, 16)
    ens = generate(9, 30, 2, g)
    W = ens.brownian_motion()
    assert W.shape == (30, 17, 2)
    assert np.all(W[:, 0] == 0)
    c = ens.coarsen(4)
    assert c.steps == 4 and c.dt == pytest.approx(0.25)
    np.testing.assert_allclose(c.materialize(), ens.materialize().reshape(30, 4, 4, 2).sum(axis=2),
                               rtol=0, atol=1e-15)
    np.testing.assert_allclose(c.brownian_motion()[:, -1], W[:, -1], atol=1e-14)
    with pytest.raises(ValueError):
        ens.coarsen(3)


def test_save_load_roundtrip(tmp_path):
    ens = generate(77, 12, 3, TimeGrid(0.5, 1.5, 9))
    ens.save(tmp_path / "w.bin")
    back = BrownianEnsemble.load(tmp_path / "w.bin")
    assert back.grid == ens.grid and back.seed == ens.seed
    assert np.array_equal(back.materialize(), ens.materialize())


def test_path_ensemble_final_requires_record():
    g = TimeGrid(0.0, 1.0, 3)
    X = np.zeros((3, 3, 1))
    pe = PathEnsemble(X, g, np.array([0, 2, 3]), np.zeros(3, bool))
    assert pe.final.shape == (3, 1)
    assert not pe.is_full
    with pytest.raises(ValueError):
        pe.require_full()
    with pytest.raises(ValueError):
        PathEnsemble(X, g, np.array([0, 1, 2]), np.zeros(3, bool)).final
