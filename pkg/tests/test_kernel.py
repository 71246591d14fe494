import math

import numpy as np
import pytest
from scipy import integrate

from conftest import params_for, table_for
from fbmchaos.errors import DomainError
from fbmchaos.kernel import (HurstParams, Regime, TimeGrid, build_kernel_table, calibrate_cH,
                             covariance_check, eval_kernel, eval_kernel_dt, fbm_covariance,
                             kernel_increment, literature_cH, regime_of, validate_hurst)


def adaptive_kernel(H, cH, t, theta):
    """Independent oracle: adaptive quadrature of the integral term with u = θ + v²."""
    a = 0.5 - H
    f = lambda v: 2 * v * v ** (2 * H - 3) * (1 - (theta / (theta + v * v)) ** a)
    val, _ = integrate.quad(f, 0.0, math.sqrt(t - theta), epsabs=1e-15, epsrel=1e-12, limit=500)
    return cH * ((t - theta) ** (H - 0.5) + a * val)


def test_regimes():
    assert regime_of(0.3) is Regime.ROUGH
    assert regime_of(0.75) is Regime.SMOOTH
    assert regime_of(0.5) is Regime.STANDARD
    for bad in (0.25, 0.2, 1.0, float("nan")):
        with pytest.raises(DomainError):
            validate_hurst(bad)


def test_time_grid():
    g = TimeGrid.uniform(8, 2.0)
    assert g.N == 8 and g.T == 2.0 and g.points[0] == 0.0
    assert g.index_of(0.5) == 2
    with pytest.raises(DomainError):
        TimeGrid([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(DomainError):
        g.index_of(0.3)


def test_standard_regime_kernel_is_constant():
    p = HurstParams.calibrated(0.5)
    assert p.cH == 1.0
    assert eval_kernel(p, 1.0, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert eval_kernel_dt(p, 0.8, 0.4) == 0.0
    assert kernel_increment(p, 0.5, 1.0, 0.25) == 0.0


def test_kernel_vanishes_at_diagonal_smooth():
    p = params_for(0.75)
    vals = [eval_kernel(p, 1.0, 1.0 - d) for d in (1e-2, 1e-6, 1e-10)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[2] < 1e-2
    assert eval_kernel(p, 0.5, 0.7) == 0.0


def test_kernel_matches_adaptive_oracle():
    for H in (0.75, 0.3, 0.9):
        p = params_for(H)
        got = eval_kernel(p, 1.0, 0.5)
        ref = adaptive_kernel(H, p.cH, 1.0, 0.5)
        assert got == pytest.approx(ref, rel=1e-8)


def test_kernel_rejects_theta_zero():
    with pytest.raises(DomainError):
        eval_kernel(params_for(0.75), 1.0, 0.0)


def test_kernel_dt_sign_and_bound():
    p = params_for(0.3)
    assert eval_kernel_dt(p, 0.8, 0.4) < 0
    assert eval_kernel_dt(params_for(0.75), 0.8, 0.4) > 0
    with pytest.raises(DomainError):
        eval_kernel_dt(p, 0.5, 0.5)
    H = p.H
    ts = np.linspace(0.01, 1.0, 100)
    th = np.linspace(0.005, 0.995, 100)
    T, TH = np.meshgrid(ts, th)
    live = TH < T
    d = np.abs(eval_kernel_dt(p, T[live], TH[live]))
    C = p.cH * (0.5 - H)          # sup of (θ/t)^{1/2-H} over θ < t is 1
    assert np.all(d <= C * (T[live] - TH[live]) ** (H - 1.5) * (1 + 1e-12))


def test_kernel_dt_matches_finite_difference():
    p = params_for(0.75)
    h = 1e-5
    fd = (eval_kernel(p, 0.8 + h, 0.4) - eval_kernel(p, 0.8 - h, 0.4)) / (2 * h)
    assert eval_kernel_dt(p, 0.8, 0.4) == pytest.approx(fd, rel=1e-6)


def test_kernel_increment():
    for H in (0.75, 0.3):
        p = params_for(H)
        ref = eval_kernel(p, 1.0, 0.25) - eval_kernel(p, 0.5, 0.25)
        got = kernel_increment(p, 0.5, 1.0, 0.25)
        assert got == pytest.approx(ref, abs=1e-8)
        assert np.sign(got) == np.sign(H - 0.5)
    with pytest.raises(DomainError):
        kernel_increment(params_for(0.75), 0.2, 0.5, 0.3)


def test_calibration():
    assert calibrate_cH(0.5) == 1.0
    for H in (0.3, 0.75, 0.9):
        c = calibrate_cH(H)
        assert c == pytest.approx(literature_cH(H), rel=1e-10)
        assert calibrate_cH(H) == c
        assert params_for(H).recalibrated().cH == pytest.approx(c, rel=1e-10)
        # unit variance at t = 1 by adaptive quadrature of K²
        p = HurstParams(H, 1.0, c)
        f = lambda th: adaptive_kernel(H, c, 1.0, th) ** 2
        pts = [1e-6, 1e-3, 0.1, 0.5, 0.9, 0.999]
        v, _ = integrate.quad(f, 0.0, 1.0, points=pts, limit=400, epsrel=1e-10)
        assert v == pytest.approx(1.0, abs=1e-6)


def test_calibrated_covariance_point():
    p = params_for(0.75)
    f = lambda th: adaptive_kernel(0.75, p.cH, 1.0, th) * adaptive_kernel(0.75, p.cH, 0.5, th)
    v, _ = integrate.quad(f, 0.0, 0.5, points=[1e-4, 0.25, 0.49], limit=400, epsrel=1e-10)
    assert v == pytest.approx(0.5, abs=1e-6)
    assert fbm_covariance(0.75, 0.5, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_table_standard_regime():
    t = table_for(0.5, 16)
    i, j = np.tril_indices(16, -1)
    assert np.all(t.K[1:][np.tril_indices(16)] == 1.0)
    assert np.all(t.dK == 0.0)
    assert covariance_check(t) < 1e-14


def test_table_invariants():
    for H in (0.3, 0.75):
        t = table_for(H, 64)
        N = t.N
        assert np.all(np.triu(t.K[:N], 0) == 0)
        i, j = np.tril_indices(N, -1)
        dk = t.dK[i, j]
        if H < 0.5:
            assert np.all(dk < 0)
            # columns non-increasing in t
            assert np.all(np.diff(t.K[1:], axis=0)[np.tril_indices(N - 1)] <= 0)
        else:
            assert np.all(dk > 0)
            assert np.all(t.K[np.arange(1, N + 1), np.arange(N)] < t.K[N, 0])
        np.testing.assert_array_equal(t.dK[1:][np.tril_indices(N - 1)],
                                      (t.K[2:] - t.K[1:-1])[np.tril_indices(N - 1)])


def test_table_cell_average_close_to_kernel():
    p = params_for(0.75)
    t = table_for(0.75, 32)
    th, w = np.polynomial.legendre.leggauss(40)
    a, b = t.grid.points[10], t.grid.points[11]
    x = a + (b - a) * (th + 1) / 2
    avg = 0.5 * np.dot(w, eval_kernel(p, 1.0, x))
    assert t.K[32, 10] == pytest.approx(avg, rel=1e-4)


def test_covariance_refinement():
    for H in (0.3, 0.35, 0.45, 0.6, 0.75, 0.9):
        errs = [covariance_check(table_for(H, N)) for N in (128, 256, 512)]
        assert errs[0] > errs[1] > errs[2]


def test_grid_horizon_mismatch():
    with pytest.raises(DomainError):
        build_kernel_table(params_for(0.75), TimeGrid.uniform(8, 2.0))
