import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallball.white_noise import (Grid, NoisePath, coarsen_noise, dump_noise, load_noise, path_seed,
                                   rescale_noise, sample_noise, sample_noise_batch)


def test_grid_validation_and_geometry():
    g = Grid(2.0, 0.5, 8, 4)
    assert g.dx == 0.25 and g.dt == 0.125
    assert g.x[-1] == pytest.approx(1.75)
    assert g.times[-1] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        Grid(1.0, 1.0, 1, 4)
    with pytest.raises(ValueError):
        Grid(1.0, 0.0, 4, 4)


def test_moments_and_independence():
    g = Grid(1.0, 1.0, 1000, 1000)
    z = sample_noise(g, 1, 7).increments.ravel()
    var = g.dt * g.dx
    se = np.sqrt(var / z.size)
    assert abs(z.mean()) < 4 * se
    assert z.var() == pytest.approx(var, rel=0.01)
    a, b = z[:-1:2], z[1::2]
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 4 / np.sqrt(a.size)


def test_replay_is_bitwise():
    g = Grid(1.0, 0.1, 16, 8)
    a = sample_noise(g, 2, 123)
    b = sample_noise(g, 2, 123)
    assert np.array_equal(a.increments, b.increments)
    assert not a.increments.flags.writeable


def test_batch_independent_of_chunking():
    g = Grid(1.0, 0.1, 8, 4)
    full = sample_noise_batch(g, 1, 5, range(6))
    part = sample_noise_batch(g, 1, 5, range(3, 6))
    assert np.array_equal(full[3:], part)
    assert np.array_equal(full[2], sample_noise(g, 1, path_seed(5, 2)).increments)


@given(st.integers(0, 2**63), st.integers(0, 10**6), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_path_seeds_distinct(master, i, j):
    if i != j:
        assert path_seed(master, i) != path_seed(master, j)


def test_replicates_uncorrelated():
    g = Grid(1.0, 1.0, 100, 100)
    a = sample_noise(g, 1, path_seed(3, 0)).increments.ravel()
    b = sample_noise(g, 1, path_seed(3, 1)).increments.ravel()
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(a.size)


def test_rescale_identity_and_variance():
    g = Grid(2.0, 4.0, 64, 64)
    p = sample_noise(g, 1, 1)
    assert np.array_equal(rescale_noise(p, 1.0).increments, p.increments)
    r = rescale_noise(p, 2.0)
    assert r.grid.J == 1.0 and r.grid.T == 1.0
    assert np.allclose(r.increments, p.increments * 2.0**-1.5)
    assert r.grid.dt * r.grid.dx == pytest.approx(g.dt * g.dx / 8)


def test_rescaled_matches_fresh_unit_sampling():
    g = Grid(3.0, 9.0, 200, 200)
    r = rescale_noise(sample_noise(g, 1, 11), 3.0).increments.ravel()
    f = sample_noise(Grid(1.0, 1.0, 200, 200), 1, 12).increments.ravel()
    # two-sample comparison of the second moment
    se = np.sqrt(np.var(r**2) / r.size + np.var(f**2) / f.size)
    assert abs(np.mean(r**2) - np.mean(f**2)) < 4 * se


def test_coarsening_adds_variance():
    g = Grid(1.0, 1.0, 200, 200)
    p = sample_noise(g, 1, 2)
    c = coarsen_noise(p)
    assert c.increments.var() == pytest.approx(4 * g.dt * g.dx, rel=0.03)
    assert c.increments.sum() == pytest.approx(p.increments.sum())
    with pytest.raises(ValueError):
        coarsen_noise(p, 3, 1)


def test_dump_round_trip(tmp_path):
    p = sample_noise(Grid(1.5, 0.2, 6, 3), 2, 2**63 + 5)
    f = tmp_path / "noise.bin"
    dump_noise(p, f)
    q = load_noise(f)
    assert q.grid == p.grid and q.seed == p.seed
    assert np.array_equal(q.increments, p.increments)
    raw = f.read_bytes()
    assert len(raw) == 48 + 8 * 6 * 3 * 2
    f.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_noise(f)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        NoisePath(Grid(1.0, 1.0, 4, 4), np.zeros((4, 5, 1)))
