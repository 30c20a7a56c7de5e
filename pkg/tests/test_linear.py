import numpy as np
import pytest

from eoklab.core import ModelParams
from eoklab.linear import (NoOnsetError, characteristic_residual, critical_onset, dispersion,
                           dispersion_slope, growth_band, hopf_asymptotics, spatial_eigenvalues)


def test_dispersion_examples():
    p = ModelParams(m=0.4)
    on = critical_onset(p)
    assert abs(dispersion(on.k_c, p.with_(gamma=on.gamma_c))) < 1e-12
    assert dispersion(0.0, p.with_(gamma=0.1, a=0.2)) == pytest.approx(-1 / (0.2 * 0.4 + 1))
    assert dispersion(1.0, ModelParams(gamma=0.25)) == pytest.approx(-0.25)


@pytest.mark.parametrize("a, m, gamma_c, k_c, sig", [
    (0.0, 0.4, 0.0676, 1.96, 3),
    (0.1, 0.4, None, 1.923, 4),
    (0.0, 0.5, None, 2.828, 4),
    (0.0, 0.0, 0.25, np.sqrt(2), None),
])
def test_critical_onset(a, m, gamma_c, k_c, sig):
    on = critical_onset(ModelParams(a=a, m=m))
    if gamma_c is not None:
        assert on.gamma_c == pytest.approx(gamma_c, rel=1e-12)
    if sig is None:
        assert on.k_c == pytest.approx(k_c, rel=1e-14)
    else:
        assert float(f"{on.k_c:.{sig}g}") == pytest.approx(k_c, rel=1e-12)


def test_onset_is_global_maximum():
    p = ModelParams(a=0.1, m=0.4, tau=-0.1)
    on = critical_onset(p)
    pc = p.with_(gamma=on.gamma_c)
    k = np.linspace(0, 5 * on.k_c, 20001)
    lam = dispersion(k, pc)
    assert lam.max() <= 1e-12
    assert abs(dispersion_slope(on.k_c, pc)) < 1e-10


def test_no_onset_for_negative_eta():
    with pytest.raises(NoOnsetError):
        critical_onset(ModelParams(m=0.7, tau=-0.5))


def test_growth_band():
    kmin, kmax = growth_band(ModelParams(gamma=0.2))
    # quadratic formula in k^2: (1 -/+ sqrt(1-0.8))/0.4
    assert kmin**2 == pytest.approx((1 - np.sqrt(0.2)) / 0.4, rel=1e-12)
    assert kmax**2 == pytest.approx((1 + np.sqrt(0.2)) / 0.4, rel=1e-12)
    p = ModelParams(gamma=0.2)
    assert abs(dispersion(kmin, p)) < 1e-10 and abs(dispersion(kmax, p)) < 1e-10
    inside = np.linspace(kmin, kmax, 50)[1:-1]
    assert np.all(dispersion(inside, p) > 0)


def test_growth_band_degenerate_and_empty():
    p = ModelParams(m=0.4)
    on = critical_onset(p)
    kmin, kmax = growth_band(p.with_(gamma=on.gamma_c))
    assert kmin == pytest.approx(on.k_c, rel=1e-7) and kmax == pytest.approx(on.k_c, rel=1e-7)
    with pytest.raises(ValueError):
        growth_band(p.with_(gamma=on.gamma_c * 1.01))


def test_spatial_eigenvalues_at_onset():
    se = spatial_eigenvalues(ModelParams(gamma=0.25))
    assert se.regime == "double-imaginary"
    assert np.allclose(np.abs(se.s_values), np.sqrt(2), atol=1e-7)
    assert np.allclose(se.s_values.real, 0, atol=1e-7)


@pytest.mark.parametrize("gamma, regime", [(0.2, "two-imaginary-pairs"), (0.3, "complex-quartet")])
def test_spatial_regimes_and_symmetry(gamma, regime):
    p = ModelParams(gamma=gamma, m=0.1, a=0.2, tau=0.05)
    se = spatial_eigenvalues(p)
    p0 = ModelParams(gamma=gamma)
    assert spatial_eigenvalues(p0).regime == regime
    s = se.s_values
    assert np.max(np.abs(characteristic_residual(s, p))) < 1e-10
    for t in (-s, np.conj(s)):
        assert all(np.min(np.abs(s - v)) < 1e-10 for v in t)


def test_onset_consistency_of_temporal_and_spatial_pictures():
    p = ModelParams(a=0.1, m=0.4, tau=0.1)
    on = critical_onset(p)
    s2c = -2 * p.sigma / (p.mu0 * p.eta)
    assert -s2c == pytest.approx(on.k_c**2, rel=1e-12)


def test_hopf_scaling_near_onset():
    p = ModelParams(m=0.4, a=0.1)
    on = critical_onset(p)
    res = []
    for eps in (1e-4, 1e-5, 1e-6):
        re = np.max(spatial_eigenvalues(p.with_(gamma=on.gamma_c + eps)).s_values.real)
        pred, im = hopf_asymptotics(p, eps)
        res.append(abs(re - pred) / pred)
    # relative error of the leading-order prediction is O(sqrt(eps))
    assert res[0] < 0.02 and res[2] < res[1] < res[0]
