import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eoklab.core import (Grid, ModelParams, ScalarField, State, eta, mass, solution_norm,
                         d2_matrix, laplacian, potential, dpotential)


@pytest.mark.parametrize("m, tau, expected", [(0.0, 0.0, 1.0), (0.4, 0.0, 0.52), (0.5, 0.0, 0.25)])
def test_eta(m, tau, expected):
    assert eta(ModelParams(m=m, tau=tau)) == pytest.approx(expected, abs=1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(sigma=0.0)
    with pytest.raises(ValueError):
        ModelParams(m=1.0)


def test_mass_examples():
    g = Grid.line(7.0, 101)
    assert mass(ScalarField(g, np.zeros(101))) == 0.0
    assert mass(ScalarField(g, np.full(101, 0.3))) == pytest.approx(0.3, abs=1e-15)
    cos = ScalarField(g, np.cos(2 * np.pi * g.x / 7.0))
    assert abs(mass(cos)) < 1e-14


def test_quadrature_exact_for_constants_2d():
    g = Grid.rect(3.0, 2.0, 17, 9)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(6.0, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
def test_mass_is_linear(alpha, beta, seed):
    r = np.random.default_rng(seed)
    g = Grid.line(5.0, 64)
    u1, u2 = r.normal(size=64), r.normal(size=64)
    lhs = mass(ScalarField(g, alpha * u1 + beta * u2))
    rhs = alpha * mass(ScalarField(g, u1)) + beta * mass(ScalarField(g, u2))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_fields_are_immutable():
    g = Grid.line(1.0, 5)
    f = ScalarField(g, np.arange(5.0))
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(4))


def test_d2_neumann_weighted_sum_vanishes_and_is_self_adjoint(rng):
    g = Grid.line(4.0, 40)
    D = d2_matrix(40, g.h).toarray()
    w = g.weights
    assert np.max(np.abs(w @ D)) < 1e-10
    WD = w[:, None] * D
    assert np.allclose(WD, WD.T, atol=1e-10)
    g2 = Grid.rect(2.0, 3.0, 9, 11)
    L = laplacian(g2).toarray()
    WL = g2.weights.ravel()[:, None] * L
    assert np.allclose(WL, WL.T, atol=1e-9)


def test_potential_derivative():
    p = ModelParams(m=0.3, tau=-0.1)
    u = np.linspace(-1, 1, 11)
    h = 1e-6
    fd = (potential(u + h, p) - potential(u - h, p)) / (2 * h)
    assert np.allclose(fd, dpotential(u, p), atol=1e-8)
    assert potential(0.0, p) == 0.0


def _cos_state(eps, n_half, L, params, N=4001):
    g = Grid.line(L, N)
    k = n_half * np.pi / L
    u = eps * np.cos(k * g.x)
    phi = u / (params.mu0 * k**2)
    return State.from_arrays(g, u, phi), k


def test_solution_norm_small_mode_closed_form():
    p = ModelParams(m=0.4)
    L = 10 * 2 * np.pi / 1.96
    eps = 1e-3
    st_, k = _cos_state(eps, 20, L, p)
    c = 1.0 / (p.mu0 * k**2)
    expected = np.sqrt(0.5 * eps**2 * (1 + k**2 + k**4 + k**6 + c**2 + c**2 * k**2))
    assert solution_norm(st_) == pytest.approx(expected, rel=1e-2)


def test_solution_norm_zero_and_homogeneous():
    g = Grid.line(5.0, 51)
    zero = State.from_arrays(g, np.zeros(51))
    assert solution_norm(zero) == 0.0
    st_, _ = _cos_state(0.1, 3, 5.0, ModelParams(), N=201)
    assert solution_norm(st_.scaled(2.0)) == pytest.approx(2 * solution_norm(st_), rel=1e-14)
    assert solution_norm(st_) == solution_norm(st_)


def test_solution_norm_rejects_2d():
    g = Grid.rect(1.0, 1.0, 5, 5)
    with pytest.raises(ValueError):
        solution_norm(State.from_arrays(g, np.zeros(25)))


def test_resolution_guard():
    g = Grid.line(10.0, 11)
    with pytest.raises(ValueError):
        g.check_resolution(k=2.0)
    Grid.line(10.0, 200).check_resolution(k=2.0)
