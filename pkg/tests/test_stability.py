import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eoklab.core import Grid, ModelParams, State
from eoklab.linear import dispersion
from eoklab.stability import (GrowthCurve, STABLE_TOL, classify_mode, critical_Ly, localization,
                              refine_pair, spectrum_1d, stripe_at, transverse_spectrum,
                              uniform_spectrum_reference)


def _uniform(n=65, L=12.0):
    g = Grid.line(L, n)
    return State.from_arrays(g, np.zeros(n), np.zeros(n), "pinned-at-midpoint")


@pytest.mark.parametrize("params", [ModelParams(gamma=0.05, m=0.3), ModelParams(gamma=0.1, a=0.1)])
def test_uniform_spectrum_matches_dispersion(params):
    s = _uniform()
    ref = uniform_spectrum_reference(s.grid, params)
    beta = np.sort(spectrum_1d(s, params).beta.real)[::-1]
    assert np.allclose(beta, ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())


@pytest.mark.parametrize("k_y", [0.3, 1.7])
def test_uniform_transverse_spectrum_matches_dispersion(k_y):
    p = ModelParams(gamma=0.05, m=0.3, a=0.1)
    s = _uniform()
    spec = transverse_spectrum(s, k_y, p, count=5, method="dense")
    ref = uniform_spectrum_reference(s.grid, p, k_y)[:5]
    assert np.allclose(spec.beta.real, ref, rtol=1e-8)
    # the x-uniform mode grows exactly at dispersion(k_y)
    full = transverse_spectrum(s, k_y, p, count=s.grid.counts[0], method="dense").beta.real
    assert np.min(np.abs(full - dispersion(k_y, p))) < 1e-10


def _mid_segment_points(branch):
    idx = [i for i, p in enumerate(branch.points) if p.fold]
    return [branch.points[(a + b) // 2] for a, b in zip(idx, idx[1:])]


def test_verdicts_alternate_across_folds(short_branch):
    mids = _mid_segment_points(short_branch)[2:]
    verdicts = [spectrum_1d(p, count=3).verdict() for p in mids]
    assert all(a != b for a, b in zip(verdicts, verdicts[1:])), verdicts


def test_pencil_at_zero_matches_reduced_1d(short_branch):
    pt = _mid_segment_points(short_branch)[3]
    a = spectrum_1d(pt, count=5).beta
    b = transverse_spectrum(pt, 0.0, count=5).beta
    assert np.allclose(a, b, rtol=1e-6, atol=1e-9)


def test_shift_invert_matches_dense(short_branch):
    pt = _mid_segment_points(short_branch)[2]
    si = transverse_spectrum(pt, 0.8, count=3)
    dn = transverse_spectrum(pt, 0.8, count=3, method="dense")
    assert np.allclose(si.beta, dn.beta, rtol=1e-8, atol=1e-10)
    assert np.all(si.residuals < 1e-6)


def test_refine_pair_converges(short_branch):
    pt = _mid_segment_points(short_branch)[2]
    spec = transverse_spectrum(pt, 0.8, count=2)
    beta, _, r = refine_pair(pt, 0.8, spec.beta[0].real + 1e-4, spec.vectors[:, 0])
    assert abs(beta - spec.beta[0]) < 1e-8
    assert r < 1e-8


def test_stripe_at_hits_requested_gamma(short_branch):
    folds = short_branch.fold_values()
    g = 0.5 * (folds[2] + folds[3])
    pt = stripe_at(short_branch, g, 3)
    assert pt.value == g
    with pytest.raises(ValueError):
        stripe_at(short_branch, folds.max() + 1.0, 3)


# --- classification on synthetic data ------------------------------------------------

def _stripe_state():
    g = Grid.line(60.0, 601)
    u = np.where(np.abs(g.x - 30) < 12, np.cos(2 * np.pi * g.x / 3.0), 0.0)
    return State.from_arrays(g, u, np.zeros_like(u))


def _bump(x, c, w=1.0):
    return np.exp(-((x - c) / w) ** 2)


def _curve(beta, vec, state):
    k = np.linspace(0.05, 3.0, beta.size)
    return GrowthCurve(k, beta, np.repeat(vec[:, None], beta.size, axis=1), state)


def test_classify_body_wall_and_localized_body():
    s = _stripe_state()
    x = s.grid.x
    k = np.linspace(0.05, 3.0, 30)
    longwave = 0.01 * np.exp(-k)
    finite = np.exp(-((k - 2.0) / 0.3) ** 2) - 0.1
    assert classify_mode(_curve(longwave, np.ones_like(x), s)).label == "body"
    wall = _bump(x, 18.5) + _bump(x, 41.5)
    assert classify_mode(_curve(finite, wall, s)).label == "wall"
    inner = _bump(x, 30.0, 2.0)
    assert classify_mode(_curve(finite, inner, s)).label == "localized-body"
    assert classify_mode(_curve(-np.ones(30), inner, s)).label == "stable"


def test_localization_fractions_are_fractions():
    s = _stripe_state()
    e, i = localization(np.ones_like(s.grid.x), s)
    assert 0 <= e <= 1 and 0 <= i <= 1 and e + i <= 1 + 1e-12


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), min_size=5, max_size=30), st.floats(0, 1))
def test_critical_Ly_shrinks_as_instability_widens(values, lift):
    """Raising the growth curve can only lower the critical transverse size."""
    k = np.linspace(0.1, 3.0, len(values))
    b = np.asarray(values)
    lo = critical_Ly(GrowthCurve(k, b, np.zeros((1, k.size))))
    hi = critical_Ly(GrowthCurve(k, b + lift, np.zeros((1, k.size))))
    assert hi <= lo
    unstable = k[b > STABLE_TOL]
    if unstable.size:
        assert lo == pytest.approx(np.pi / unstable.max())
    else:
        assert lo == np.inf
