import itertools
import math

import numpy as np
import pytest

from conftest import params_for, table_for
from fbmchaos.chaos_mc import (McEstimate, PathEngine, coarsen_increments, evaluation_indices,
                               exact_increment_slope, holder_regression, increment_tensor,
                               integral_path, mc_increment_moments, off_diagonal_sum,
                               sample_chaos, scale_family, variance_oracle, wiener_ito_sum)
from fbmchaos.errors import DomainError, GridMismatchError, InsufficientDataError
from fbmchaos.fbm import fbm_from_driver, sample_driver, sample_increments
from fbmchaos.integrands import integrand_from_descriptor
from fbmchaos.kernel import TimeGrid
from fbmchaos.simplex_kernel import SimplexKernelTensor, kstar_n, l2_norm


def spec(desc, n, H, **kw):
    return integrand_from_descriptor(desc, n, params=params_for(H), **kw)


def direct_sum(values, x):
    n = values.ndim
    total = 0.0
    for tup in itertools.product(range(values.shape[0]), repeat=n):
        if len(set(tup)) == n:
            total += values[tup] * np.prod(x[list(tup)])
    return total


def test_mc_estimate():
    e = McEstimate.from_samples([1.0, 2.0, 3.0, 4.0], seed=3)
    assert e.mean == 2.5 and e.stderr == pytest.approx(math.sqrt(e.variance / 4))
    with pytest.raises(InsufficientDataError):
        McEstimate.from_samples([1.0], 0)


def test_first_chaos_is_fbm():
    t = table_for(0.3, 64)
    d = sample_driver(t.grid, (2, 5))
    tensor = kstar_n(t, spec("const", 1, 0.3), 0.0, 1.0)
    assert wiener_ito_sum(tensor, d) == pytest.approx(fbm_from_driver(t, d).values[-1], rel=1e-13)


def test_second_chaos_brownian_backdoor():
    t = table_for(0.5, 16)
    d = sample_driver(t.grid, (0, 3))
    tri = SimplexKernelTensor(2, 0.0, 1.0, t.grid, np.tril(np.ones((16, 16)), -1))
    W = d.dW.sum()
    assert wiener_ito_sum(tri, d) == pytest.approx((W ** 2 - np.sum(d.dW ** 2)) / 2, rel=1e-12)
    assert wiener_ito_sum(tri, d) == pytest.approx(direct_sum(tri.values, d.dW), rel=1e-12)


def test_off_diagonal_sum_against_direct_loops():
    rng = np.random.default_rng(1)
    for n in (2, 3):
        v = rng.standard_normal((7,) * n)
        x = rng.standard_normal(7)
        assert off_diagonal_sum(v, x) == pytest.approx(direct_sum(v, x), rel=1e-12)
        X = rng.standard_normal((4, 7))
        np.testing.assert_allclose(off_diagonal_sum(v, X), [direct_sum(v, r) for r in X], rtol=1e-12)


def test_grid_mismatch():
    t = table_for(0.75, 16)
    tensor = kstar_n(t, spec("const", 1, 0.75), 0.0, 1.0)
    with pytest.raises(GridMismatchError):
        wiener_ito_sum(tensor, sample_driver(TimeGrid.uniform(8), (0, 0)))


def test_variance_oracle_examples():
    t = table_for(0.75, 16)
    one = kstar_n(t, spec("poly:1", 1, 0.75), 0.0, 1.0)
    assert variance_oracle(one) == pytest.approx(l2_norm(one) ** 2, rel=1e-14)
    rng = np.random.default_rng(2)
    a = rng.standard_normal((16, 16))
    sym = SimplexKernelTensor(2, 0.0, 1.0, t.grid, a + a.T)
    w = np.outer(t.grid.dt, t.grid.dt)
    off = ~np.eye(16, dtype=bool)
    assert variance_oracle(sym) == pytest.approx(2 * np.sum(((a + a.T) ** 2 * w)[off]), rel=1e-13)
    low = SimplexKernelTensor(2, 0.0, 1.0, t.grid, np.tril(a, -1))
    assert variance_oracle(low) == pytest.approx(np.sum(np.tril(a, -1) ** 2 * w), rel=1e-13)


def test_variance_oracle_exact_enumeration():
    # E[(Σ_distinct v x..)²] for independent N(0, Δ) increments, by enumerating tuple pairings
    g = TimeGrid.uniform(5)
    rng = np.random.default_rng(3)
    v = rng.standard_normal((5, 5, 5))
    tensor = SimplexKernelTensor(3, 0.0, 1.0, g, v)
    d = g.dt
    total = 0.0
    for a in itertools.permutations(range(5), 3):
        for b in itertools.permutations(range(5), 3):
            if sorted(a) == sorted(b):
                total += v[a] * v[b] * np.prod(d[list(a)])
    assert variance_oracle(tensor) == pytest.approx(total, rel=1e-12)


def test_zero_mean():
    t = table_for(0.75, 32)
    tensor = kstar_n(t, spec("const", 2, 0.75), 0.0, 1.0)
    x = wiener_ito_sum(tensor, sample_increments(t.grid, 5, 10_000))
    assert abs(x.mean()) <= 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_path_engine_matches_direct_tensors():
    t = table_for(0.3, 32)
    s = spec("poly:0.5", 1, 0.3)
    dW = sample_increments(t.grid, 1, 5)
    eng = PathEngine(t, s, evaluation_indices(32, 4))
    vals = eng.evaluate(dW)
    for c, i in enumerate(eng.indices):
        ref = wiener_ito_sum(kstar_n(t, s, 0.0, t.grid.points[i]), dW) if i else 0.0
        np.testing.assert_allclose(vals[:, c], ref, rtol=1e-12, atol=1e-14)


def test_integral_path_and_increments():
    for n, H in ((1, 0.75), (2, 0.3), (2, 0.75)):
        t = table_for(H, 32)
        s = spec("const", n, H)
        d = sample_driver(t.grid, (4, 0))
        path = integral_path(t, s, d)
        assert path.values[0] == 0.0
        i, j = 8, 24
        inc = wiener_ito_sum(increment_tensor(t, s, t.grid.points[i], t.grid.points[j]), d)
        assert path.values[j] - path.values[i] == pytest.approx(inc, abs=1e-12)


def test_time_dependent_path():
    t = table_for(0.75, 32)
    s = spec("time_dep:0.5", 1, 0.75)
    d = sample_driver(t.grid, (0, 0))
    path = integral_path(t, s, d)
    # h(θ; t) = t^β with n = 1 is t^β times the fBm value
    np.testing.assert_allclose(path.values, t.grid.points ** 0.5 * fbm_from_driver(t, d).values,
                               rtol=1e-12, atol=1e-14)
    with pytest.raises(DomainError):
        increment_tensor(t, s, 0.0, 0.5)


def test_sample_chaos_shift_and_scale():
    t = table_for(0.75, 32)
    s = spec("const", 1, 0.75)
    base = sample_chaos(t, s, 7, 10, stride=4)
    shifted = sample_chaos(t, s, 7, 10, stride=4, phidot=np.ones(32))
    np.testing.assert_allclose(shifted.samples - base.samples,
                               np.broadcast_to(t.K[::4] @ t.grid.dt, base.samples.shape), atol=1e-13)
    sc = scale_family(base, 0.25)
    np.testing.assert_allclose(sc.samples, 0.5 * base.samples)
    assert sc.eps == 0.25
    with pytest.raises(DomainError):
        scale_family(base, 0.0)


def test_mc_increment_moments():
    t = table_for(0.75, 64)
    rep = mc_increment_moments(t, spec("const", 2, 0.75), 0.25, 0.75, 2, 20_000, 3)
    assert abs(rep.estimate.mean - rep.exact) <= 3 * rep.estimate.stderr
    with pytest.raises(DomainError):
        mc_increment_moments(t, spec("const", 2, 0.75), 0.5, 0.5, 2, 100, 0)


def test_exact_increment_slope_first_chaos():
    t = table_for(0.75, 256)
    slope, widths, v = exact_increment_slope(t, spec("const", 1, 0.75))
    assert slope == pytest.approx(1.5, abs=0.02)


def test_coarsen_and_regression_brownian():
    dW = sample_increments(TimeGrid.uniform(512), 0, 200)
    c = coarsen_increments(dW, 2)
    np.testing.assert_allclose(c.sum(axis=1), dW.sum(axis=1), atol=1e-12)
    levels = {}
    for N, inc in ((256, c), (512, dW)):
        levels[N] = (TimeGrid.uniform(N).points, np.hstack([np.zeros((200, 1)), np.cumsum(inc, axis=1)]))
    rep = holder_regression(levels, [0.3, 0.7], threshold=0.5)
    assert rep.rows[0].expected == "stable" and rep.rows[0].passed
    assert rep.rows[1].expected == "divergent" and rep.rows[1].growth > 0.1
    with pytest.raises(InsufficientDataError):
        holder_regression({256: (levels[256][0], levels[256][1][:50])}, [0.3], 0.5)
