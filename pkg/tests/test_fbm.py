import numpy as np
import pytest
from scipy import stats

from conftest import table_for
from fbmchaos.errors import DomainError, GridMismatchError
from fbmchaos.fbm import (BrownianDriver, PathKind, fbm_exact, fbm_exact_paths, fbm_from_driver,
                          fbm_paths, sample_driver, sample_increments)
from fbmchaos.kernel import TimeGrid, fbm_covariance
from fbmchaos.streams import map_chunks, standard_normals, stream_generator


def test_streams_reproducible():
    a = stream_generator(5, 7).standard_normal(10)
    b = stream_generator(5, 7).standard_normal(10)
    c = stream_generator(5, 8).standard_normal(10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(DomainError):
        stream_generator(-1, 0)
    with pytest.raises(DomainError):
        stream_generator(0, 2 ** 64)


def test_map_chunks_independent_of_workers():
    fn = lambda a, b: standard_normals(3, np.arange(a, b), 4)
    one = np.concatenate(map_chunks(fn, 5000, 1))
    many = np.concatenate(map_chunks(fn, 5000, 8))
    np.testing.assert_array_equal(one, many)


def test_driver_determinism_and_moments():
    g = TimeGrid.uniform(16)
    d1, d2 = sample_driver(g, (1, 2)), sample_driver(g, (1, 2))
    np.testing.assert_array_equal(d1.dW, d2.dW)
    dW = sample_increments(g, 11, 100_000)
    np.testing.assert_array_equal(dW[2], sample_driver(g, (11, 2)).dW)
    n = dW.shape[0]
    mean = dW.mean(axis=0)
    assert np.all(np.abs(mean) <= 3 * np.sqrt(g.dt / n))
    var = dW.var(axis=0, ddof=1)
    se = np.sqrt(2 * g.dt ** 2 / n)
    assert np.all(np.abs(var - g.dt) <= 3 * se)
    with pytest.raises(GridMismatchError):
        BrownianDriver(g, np.zeros(3), (0, 0))


def test_standard_regime_path_is_cumulative_sum():
    t = table_for(0.5, 32)
    d = sample_driver(t.grid, (0, 0))
    path = fbm_from_driver(t, d)
    assert path.kind is PathKind.FBM and path.values[0] == 0.0
    np.testing.assert_allclose(path.values, np.concatenate([[0], np.cumsum(d.dW)]), atol=1e-14)


def test_fbm_covariance_and_variance():
    t = table_for(0.75, 256)
    X = fbm_paths(t, sample_increments(t.grid, 3, 10_000))
    i, j = t.grid.index_of(0.5), t.grid.index_of(1.0)
    prod = X[:, i] * X[:, j]
    assert abs(prod.mean() - 0.5) <= 3 * prod.std(ddof=1) / np.sqrt(prod.size)
    t3 = table_for(0.3, 256)
    Y = fbm_paths(t3, sample_increments(t3.grid, 4, 10_000))[:, -1] ** 2
    assert abs(Y.mean() - 1.0) <= 3 * Y.std(ddof=1) / np.sqrt(Y.size)


def test_batch_matches_single():
    t = table_for(0.3, 64)
    dW = sample_increments(t.grid, 9, 3)
    X = fbm_paths(t, dW)
    for k in range(3):
        np.testing.assert_allclose(X[k], fbm_from_driver(t, sample_driver(t.grid, (9, k))).values,
                                   rtol=1e-13, atol=1e-14)


def test_exact_sampler():
    g = TimeGrid.uniform(32)
    p = fbm_exact(g, 0.75, (0, 1))
    assert p.values[0] == 0.0
    X = fbm_exact_paths(g, 0.75, 0, 4)
    np.testing.assert_allclose(X[1], p.values, rtol=1e-13)
    # H = 1/2: independent increments of variance Δt
    inc = np.diff(fbm_exact_paths(g, 0.5, 2, 20_000), axis=1)
    C = np.cov(inc.T)
    assert np.max(np.abs(C - np.diag(g.dt))) < 5 * np.sqrt(2 / 20_000) * g.dt[0]
    with pytest.raises(DomainError):
        fbm_exact(TimeGrid.uniform(8192), 0.75, (0, 0))


def test_exact_sampler_covariance_matrix():
    g = TimeGrid.uniform(16)
    X = fbm_exact_paths(g, 0.3, 1, 40_000)[:, 1:]
    C = np.cov(X.T)
    R = fbm_covariance(0.3, g.points[1:, None], g.points[None, 1:])
    assert np.max(np.abs(C - R)) < 0.04


def test_volterra_vs_exact_ks():
    t = table_for(0.75, 512)
    a = fbm_paths(t, sample_increments(t.grid, 21, 10_000))[:, -1]
    b = fbm_exact_paths(t.grid, 0.75, 22, 10_000)[:, -1]
    assert stats.ks_2samp(a, b).pvalue > 0.01
