import numpy as np
import pytest

from eoklab import spectral
from eoklab.core import Grid, ModelParams, ScalarField, d2_matrix, zero_mean
from eoklab.poisson import (PoissonProblem, SolvabilityError, apply_gauge, flux_du_matrix,
                            flux_matrix, linearized_matrix, solve, solve_linearized, solve_state)


def test_zero_source():
    g = Grid.line(5.0, 65)
    phi = solve(PoissonProblem(g, np.ones(65), np.zeros(65)))
    assert np.all(phi.values == 0)


@pytest.mark.parametrize("method, tol", [("spectral", 1e-10), ("fd", 5e-3)])
def test_cosine_mode_constant_coefficient(method, tol):
    L = 7.0
    g = Grid.line(L, 129)
    u = np.cos(np.pi * g.x / L)
    phi = solve(PoissonProblem(g, np.ones(129), u), method=method)
    exact = (L / np.pi) ** 2 * u
    assert np.max(np.abs(phi.values - exact)) < tol * np.max(np.abs(exact))


def test_cosine_mode_matches_linear_relation():
    p = ModelParams(m=0.4, a=0.0)
    L = 9.0
    g = Grid.line(L, 65)
    k = 3 * np.pi / L
    u = ScalarField(g, 0.01 * np.cos(k * g.x))
    st = solve_state(u, p, method="spectral")
    assert np.allclose(st.phi.values, u.values / (p.mu0 * k**2), atol=1e-14)


def _manufactured(n, L=6.0):
    g = Grid.line(L, n)
    x = g.x
    c = np.pi / L
    phi = np.cos(c * x) + 0.3 * np.cos(2 * c * x)
    dphi = -c * np.sin(c * x) - 0.6 * c * np.sin(2 * c * x)
    d2phi = -c**2 * np.cos(c * x) - 1.2 * c**2 * np.cos(2 * c * x)
    # mu = a (u + m) + 1 with a = 0.1 and a smooth bounded u
    ufield = 0.8 * np.cos(3 * c * x)
    mu = 0.1 * (ufield + 0.2) + 1
    dmu = 0.1 * (-2.4 * c * np.sin(3 * c * x))
    source = -(dmu * dphi + mu * d2phi)
    return g, mu, source, apply_gauge(phi, g, "mean-zero")


def test_fd_manufactured_second_order():
    errs = []
    for n in (33, 65, 129, 257):
        g, mu, src, exact = _manufactured(n)
        phi = solve(PoissonProblem(g, mu, zero_mean(src, g)), method="fd")
        errs.append(np.max(np.abs(phi.values - exact)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.6) & (ratios < 4.4)), ratios


def test_spectral_manufactured_variable_coefficient():
    errs = []
    for n in (17, 33):
        g, mu, src, exact = _manufactured(n)
        phi = solve(PoissonProblem(g, mu, zero_mean(src, g)), method="spectral")
        errs.append(np.max(np.abs(phi.values - exact)))
    assert max(errs) < 1e-10


def test_2d_transform_paths():
    g = Grid.rect(6.0, 4.0, 33, 25)
    X, Y = g.mesh()
    phi_ex = np.cos(np.pi * X / 6) * np.cos(2 * np.pi * Y / 4)
    k2 = (np.pi / 6) ** 2 + (np.pi / 2) ** 2
    phi = solve(PoissonProblem(g, np.ones(g.shape), k2 * phi_ex))
    assert np.max(np.abs(phi.values - phi_ex)) < 1e-12
    mu = 1 + 0.1 * np.cos(np.pi * X / 6) * np.cos(np.pi * Y / 4)
    src = -spectral.divergence_mu_grad(phi_ex, mu, g)
    phi = solve(PoissonProblem(g, mu, zero_mean(src, g)))
    assert np.max(np.abs(phi.values - phi_ex)) < 1e-10


def test_errors():
    g = Grid.line(5.0, 33)
    with pytest.raises(SolvabilityError):
        solve(PoissonProblem(g, np.ones(33), np.ones(33)))
    with pytest.raises(ValueError):
        solve(PoissonProblem(g, -np.ones(33), np.zeros(33)))
    phi = solve(PoissonProblem(g, np.ones(33), 1e-3 + np.cos(np.pi * g.x / 5)), on_violation="project")
    assert np.isfinite(phi.values).all()


def test_gauges_differ_by_constant(rng):
    g = Grid.line(8.0, 101)
    p = ModelParams(a=0.2, m=0.3)
    u = ScalarField(g, zero_mean(0.5 * np.cos(np.pi * g.x / 8 * 5) + 0.1 * rng.normal(size=101), g))
    s1 = solve_state(u, p, "mean-zero")
    s2 = solve_state(u, p, "pinned-at-midpoint")
    diff = s1.phi.values - s2.phi.values
    assert np.ptp(diff) < 1e-12
    assert abs(s2.phi.values[50]) < 1e-15
    assert np.allclose(np.gradient(s1.phi.values), np.gradient(s2.phi.values), atol=1e-12)


def test_fd_operator_self_adjoint(rng):
    g = Grid.line(5.0, 41)
    mu = 1 + 0.1 * rng.random(41)
    A = flux_matrix(mu, g.h)
    v, w = (zero_mean(rng.normal(size=41), g) for _ in range(2))
    W = g.weights
    assert np.dot(W * v, A @ w) == pytest.approx(np.dot(W * (A @ v), w), rel=1e-12)


def test_flux_du_matrix_is_jacobian(rng):
    g = Grid.line(5.0, 31)
    a, m = 0.15, 0.3
    u, phi, du = rng.normal(size=(3, 31))
    h = 1e-6
    f = lambda uu: flux_matrix(a * (uu + m) + 1, g.h) @ phi
    fd = (f(u + h * du) - f(u - h * du)) / (2 * h)
    assert np.allclose(flux_du_matrix(phi, a, g.h) @ du, fd, rtol=1e-6, atol=1e-6)


def _base_state(p, n=801, L=30.0):
    g = Grid.line(L, n)
    x = g.x
    u = ScalarField(g, zero_mean(0.6 * np.exp(-((x - L / 2) / 4) ** 2) * np.cos(2 * (x - L / 2)), g))
    return solve_state(u, p)


def test_linearized_zero_and_constant_coefficient_limit(rng):
    p = ModelParams(m=0.4)
    base = _base_state(p)
    g = base.grid
    _, d2 = solve_linearized(base, np.zeros(g.size), p)
    assert np.all(d2.values == 0)
    ut = zero_mean(np.cos(3 * np.pi * g.x / g.lengths[0]) + 0.1 * rng.normal(size=g.size), g)
    _, d2 = solve_linearized(base, ut, p)
    assert np.allclose(d2.values, -ut, atol=1e-12)
    T = linearized_matrix(base, p)
    assert np.allclose(T @ ut, d2.values, atol=1e-12)


def test_linearized_against_direct_fd_solve():
    """Quadrature reduction vs direct discretisation of the incremental Poisson equation."""
    errs = []
    for n in (401, 801):
        p = ModelParams(m=0.4, a=0.05)
        base = _base_state(p, n=n)
        g = base.grid
        L = g.lengths[0]
        ut = zero_mean(np.cos(6 * np.pi * g.x / L) * np.exp(-((g.x - L / 2) / 5) ** 2), g)
        # direct: (mu phi~')' + (a u~ phi_L')' = -u~
        B = flux_du_matrix(base.phi.values, p.a, g.h)
        rhs = ut + B @ ut
        phi = solve(PoissonProblem(g, p.permittivity(base.u.values), rhs), method="fd",
                    on_violation="project").values
        direct = d2_matrix(n, g.h) @ phi
        _, d2 = solve_linearized(base, ut, p)
        errs.append(np.max(np.abs(d2.values - direct)) / np.max(np.abs(direct)))
    assert errs[0] < 5e-3 and errs[1] < errs[0] / 3


def test_linearized_rejects_mean():
    p = ModelParams(m=0.4)
    base = _base_state(p, n=101)
    with pytest.raises(SolvabilityError):
        solve_linearized(base, np.ones(101), p)
