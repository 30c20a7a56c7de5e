"""Neumann Poisson problem -div((a(u+m)+1) grad phi) = u, 1D and 2D.

1D uses conservative second-order finite differences (arithmetic face
averages of the coefficient). Any dimension can use the cosine-transform
route: a direct solve when the coefficient is constant, otherwise GMRES
preconditioned by the constant-coefficient transform solve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import spectral
from .core import Grid, ModelParams, ScalarField, State, neumann_gradient, d2_matrix

log = logging.getLogger(__name__)

SOLVABILITY_TOL = 1e-12


class SolvabilityError(ValueError):
    """Source has non-zero mean, so the Neumann problem has no solution."""


@dataclass(frozen=True)
class PoissonProblem:
    grid: Grid
    mu: np.ndarray
    source: np.ndarray
    gauge: str = "mean-zero"

    @classmethod
    def from_state(cls, u: ScalarField, params: ModelParams, gauge: str = "mean-zero"):
        return cls(u.grid, params.permittivity(u.values), np.asarray(u.values), gauge)


# --- 1D finite-difference building blocks -----------------------------------

# The constant operators are cached; callers must not modify them in place.
@lru_cache(maxsize=64)
def face_gradient(n: int, h: float) -> sp.csr_matrix:
    """(N-1) x N forward difference onto faces."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


@lru_cache(maxsize=64)
def face_average(n: int) -> sp.csr_matrix:
    return sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


@lru_cache(maxsize=64)
def face_divergence(n: int, h: float) -> sp.csr_matrix:
    """N x (N-1) divergence of face fluxes; end rows doubled (half cells, zero wall flux)."""
    d = sp.diags([np.ones(n - 1), -np.ones(n - 1)], [0, -1], shape=(n, n - 1), format="lil")
    d[0, 0] = 2.0
    d[n - 1, n - 2] = -2.0
    return d.tocsr() / h


def flux_matrix(mu_nodes, h: float) -> sp.csr_matrix:
    """Sparse (mu phi')' with face coefficient averaged from node values."""
    mu = np.asarray(mu_nodes, dtype=float)
    mu_f = 0.5 * (mu[1:] + mu[:-1])
    lower = mu_f.copy()
    upper = mu_f.copy()
    upper[0] *= 2.0
    lower[-1] *= 2.0
    main = -np.concatenate([[2 * mu_f[0]], mu_f[1:] + mu_f[:-1], [2 * mu_f[-1]]])
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def flux_du_matrix(phi, a: float, h: float) -> sp.csr_matrix:
    """Jacobian of (mu(u) phi')' with respect to u, mu = a(u+m)+1."""
    n = len(phi)
    g = face_gradient(n, h) @ np.asarray(phi)
    return (face_divergence(n, h) @ sp.diags(a * g) @ face_average(n)).tocsr()


def flux_da_matrix(u, m: float, h: float) -> sp.csr_matrix:
    """Derivative of (mu phi')' with respect to the permittivity slope a."""
    return flux_matrix(np.asarray(u) + m, h)


# --- solvers ----------------------------------------------------------------

def _check_source(source, grid: Grid, on_violation: str) -> np.ndarray:
    source = np.asarray(source, dtype=float)
    mean = grid.integrate(source) / grid.volume
    scale = max(np.max(np.abs(source)), 1e-300)
    if abs(mean) > SOLVABILITY_TOL * scale:
        if on_violation == "raise":
            raise SolvabilityError(f"source mean {mean:.3e} violates Neumann solvability")
        log.warning("projecting out source mean %.3e", mean)
        source = source - mean
    return source


def apply_gauge(phi: np.ndarray, grid: Grid, gauge: str) -> np.ndarray:
    if gauge == "mean-zero":
        return phi - grid.integrate(phi) / grid.volume
    if gauge == "pinned-at-midpoint":
        idx = tuple(n // 2 for n in grid.counts)
        return phi - phi[idx]
    if gauge == "pinned-at-end":
        return phi - phi.flat[-1]
    raise ValueError(f"unknown gauge {gauge!r}")


def gauge_row(grid: Grid, gauge: str) -> np.ndarray:
    """Linear functional g with g.phi = 0 encoding the gauge (flattened)."""
    if gauge == "mean-zero":
        return (grid.weights / grid.volume).ravel()
    row = np.zeros(grid.size)
    if gauge == "pinned-at-end":
        row[-1] = 1.0
        return row
    if gauge != "pinned-at-midpoint":
        raise ValueError(f"unknown gauge {gauge!r}")
    row[np.ravel_multi_index(tuple(n // 2 for n in grid.counts), grid.counts)] = 1.0
    return row


def _solve_fd_1d(mu, source, grid: Grid, gauge: str) -> np.ndarray:
    n, h = grid.counts[0], grid.h
    A = flux_matrix(mu, h)
    ones = sp.csr_matrix(np.ones((n, 1)))
    g = sp.csr_matrix(gauge_row(grid, gauge)[None, :])
    K = sp.bmat([[A, ones], [g, None]], format="csc")
    rhs = np.concatenate([-source, [0.0]])
    sol = spla.spsolve(K, rhs)
    return sol[:n]


def _drop_highest_modes(values: np.ndarray) -> np.ndarray:
    """Zero every cosine mode whose index is N-1 along some axis.

    The highest mode has no representable first derivative at the nodes, so
    the pseudo-spectral div(mu grad) sees only part of it. The
    variable-coefficient solve works in the subspace without these modes.
    """
    c = spectral.forward(values)
    for axis, n in enumerate(values.shape):
        index = [slice(None)] * values.ndim
        index[axis] = n - 1
        c[tuple(index)] = 0.0
    return spectral.inverse(c)


def _solve_transform(mu, source, grid: Grid, gauge: str, tol: float, maxiter: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(grid.shape)
    source = np.asarray(source, dtype=float).reshape(grid.shape)
    k2 = spectral.k_squared(grid)
    k2_safe = np.where(k2 == 0, 1.0, k2)
    mu_bar = float(grid.integrate(mu) / grid.volume)

    def const_solve(rhs, coeff):
        c = spectral.forward(rhs) / (coeff * k2_safe)
        c.flat[0] = 0.0
        return spectral.inverse(c)

    if np.ptp(mu) <= 1e-14 * abs(mu_bar):
        phi = const_solve(source, mu_bar)
    else:
        shape = grid.shape
        size = grid.size

        def matvec(v):
            v = _drop_highest_modes(v.reshape(shape))
            return -_drop_highest_modes(spectral.divergence_mu_grad(v, mu, grid)).ravel()

        def precond(v):
            return _drop_highest_modes(const_solve(v.reshape(shape), mu_bar)).ravel()

        source = _drop_highest_modes(source)
        A = spla.LinearOperator((size, size), matvec=matvec, dtype=float)
        M = spla.LinearOperator((size, size), matvec=precond, dtype=float)
        x0 = precond(source.ravel())
        phi, info = spla.gmres(A, source.ravel(), x0=x0, M=M, rtol=tol, atol=0.0,
                               restart=50, maxiter=maxiter)
        if info != 0:
            raise RuntimeError(f"variable-coefficient Poisson GMRES did not converge (info={info})")
        phi = phi.reshape(shape)
    return phi


def solve(problem: PoissonProblem, method: str | None = None, on_violation: str = "raise",
          tol: float = 1e-13, maxiter: int = 200) -> ScalarField:
    """Solve for phi under the problem's gauge.

    ``method`` is "fd" (1D only) or "spectral"; the default is fd in 1D and
    spectral in 2D. ``on_violation="project"`` removes a source mean instead
    of raising.
    """
    grid = problem.grid
    mu = np.asarray(problem.mu, dtype=float)
    if np.min(mu) <= 0:
        raise ValueError(f"non-positive permittivity coefficient (min {np.min(mu):.3g})")
    source = _check_source(problem.source, grid, on_violation)
    if method is None:
        method = "fd" if grid.dimension == 1 else "spectral"
    if method == "fd":
        if grid.dimension != 1:
            raise ValueError("finite-difference Poisson path is 1D only")
        phi = _solve_fd_1d(mu.ravel(), source.ravel(), grid, problem.gauge)
    elif method == "spectral":
        phi = _solve_transform(mu, source, grid, problem.gauge, tol, maxiter)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ScalarField(grid, apply_gauge(np.asarray(phi).reshape(grid.shape), grid, problem.gauge))


def solve_state(u: ScalarField, params: ModelParams, gauge: str = "mean-zero",
                method: str | None = None, on_violation: str = "raise",
                tol: float = 1e-13) -> State:
    """Pair u with its potential."""
    params.check_permittivity(u.values)
    phi = solve(PoissonProblem.from_state(u, params, gauge), method=method,
                on_violation=on_violation, tol=tol)
    return State(u, phi, gauge)


def residual(phi, u, params: ModelParams, grid: Grid, method: str = "fd") -> np.ndarray:
    """div(mu grad phi) + u on the chosen discretisation."""
    mu = params.permittivity(u)
    if method == "fd":
        return flux_matrix(mu, grid.h) @ phi + u
    return spectral.divergence_mu_grad(np.reshape(phi, grid.shape), mu, grid) + np.reshape(u, grid.shape)


# --- linearised (incremental) Poisson solve -----------------------------------

def cumulative_integral_matrix(n: int, h: float) -> np.ndarray:
    """Dense C with (C v)_j = trapezoid integral of v from the left boundary to x_j."""
    C = np.zeros((n, n))
    for j in range(1, n):
        C[j, :j + 1] = h
        C[j, 0] = C[j, j] = 0.5 * h
    return C


def _linearized_coefficients(base: State, params: ModelParams):
    grid = base.grid
    if grid.dimension != 1:
        raise ValueError("the quadrature reduction is 1D")
    h = grid.h
    u = base.u.values
    phi = base.phi.values
    mu = params.permittivity(u)
    du = neumann_gradient(u, h)
    dphi = neumann_gradient(phi, h)
    d2phi = d2_matrix(u.size, h) @ phi
    return mu, du, dphi, d2phi


def linearized_matrix(base: State, params: ModelParams, form: str = "pointwise") -> np.ndarray:
    """Dense T with phi~'' = T u~ for zero-mean u~, via the cumulative-integral reduction.

    ``form="pointwise"`` evaluates the reduced expression node by node.
    ``form="conservative"`` does the same integrate-once reduction on the
    flux grid: face fluxes from a cumulative half-cell sum, division by the
    face permittivity, then the discrete divergence. It coincides with
    eliminating phi~ from the finite-difference flux system.
    """
    if form == "conservative":
        return _linearized_matrix_conservative(base, params)
    if form != "pointwise":
        raise ValueError(f"unknown form {form!r}")
    grid = base.grid
    n, h = grid.counts[0], grid.h
    a = params.a
    mu, du, dphi, d2phi = _linearized_coefficients(base, params)
    C = cumulative_integral_matrix(n, h)
    G = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    G[idx, idx + 1] = 0.5 / h
    G[idx, idx - 1] = -0.5 / h
    first = (a * du / mu**2)[:, None] * (a * np.diag(dphi) + C)
    second = (1.0 / mu)[:, None] * (np.eye(n) + a * dphi[:, None] * G + a * np.diag(d2phi))
    return first - second


def _linearized_matrix_conservative(base: State, params: ModelParams) -> np.ndarray:
    grid = base.grid
    if grid.dimension != 1:
        raise ValueError("the quadrature reduction is 1D")
    n, h = grid.counts[0], grid.h
    inv = 1.0 / (face_average(n) @ params.permittivity(base.u.values))
    source = np.eye(n) + flux_du_matrix(base.phi.values, params.a, h).toarray()
    # face fluxes F_{j+1/2} = -(h/2 s_0 + h sum_{i=1..j} s_i)
    C = np.tril(np.full((n - 1, n), h), k=0)
    C[:, 0] = 0.5 * h
    F = -(C @ source)
    # divergence of F/mu_face written as -s_j/mu_{j+1/2} + F_{j-1/2} (1/mu_{j+1/2} - 1/mu_{j-1/2})/h,
    # which avoids differencing the cumulative sums (exact on zero-mean input)
    T = np.empty((n, n))
    T[0] = -source[0] * inv[0]
    T[1:-1] = -source[1:-1] * inv[1:, None] + F[:-1] * (np.diff(inv) / h)[:, None]
    T[-1] = -source[-1] * inv[-1]
    return T


def solve_linearized(base: State, perturbation, params: ModelParams, zero_mean_tol: float = 1e-10):
    """Return (phi~, phi~'') for a zero-mean perturbation u~ of a steady base state."""
    grid = base.grid
    ut = np.asarray(getattr(perturbation, "values", perturbation), dtype=float)
    scale = max(np.max(np.abs(ut)), 1e-300)
    mean = grid.integrate(ut) / grid.volume
    if abs(mean) > zero_mean_tol * scale:
        raise SolvabilityError(f"perturbation mean {mean:.3e} is not zero")
    h = grid.h
    a = params.a
    mu, du, dphi, d2phi = _linearized_coefficients(base, params)
    running = np.concatenate([[0.0], np.cumsum(0.5 * h * (ut[1:] + ut[:-1]))])
    dut = neumann_gradient(ut, h)
    flux = a * ut * dphi + running
    dphit = -flux / mu
    d2phit = a * du / mu**2 * flux - (ut + a * dut * dphi + a * ut * d2phi) / mu
    phit = np.concatenate([[0.0], np.cumsum(0.5 * h * (dphit[1:] + dphit[:-1]))])
    phit = apply_gauge(phit, grid, base.gauge)
    return ScalarField(grid, phit), ScalarField(grid, d2phit)
