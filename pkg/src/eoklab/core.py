"""Shared domain types: parameters, vertex-centred grids, fields and norms.

All fields live in the translated variable, so the uniform state is u = 0 and
the mean of u over the domain is zero for every admissible state.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless parameter block (gamma, sigma, a, tau, m)."""

    gamma: float = 0.0
    sigma: float = 1.0
    a: float = 0.0
    tau: float = 0.0
    m: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if abs(self.m) >= 1:
            raise ValueError("|m| must be below 1")
        if self.a * self.m + 1 <= 0:
            raise ValueError("a*m + 1 must be positive")

    @property
    def eta(self) -> float:
        return eta(self)

    @property
    def mu0(self) -> float:
        """Permittivity of the uniform state, a*m + 1."""
        return self.a * self.m + 1.0

    @property
    def quad(self) -> float:
        """Coefficient of the quadratic term in the local chemical potential."""
        return 3.0 * self.m - self.tau

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def permittivity(self, u):
        return self.a * (np.asarray(u) + self.m) + 1.0

    def check_permittivity(self, u) -> None:
        mu = self.permittivity(u)
        if np.min(mu) <= 0:
            raise ValueError(f"permittivity a(u+m)+1 not positive (min {np.min(mu):.3g})")


def eta(params: ModelParams) -> float:
    """Linear coefficient 1 - 3m^2 + 2 tau m."""
    return 1.0 - 3.0 * params.m**2 + 2.0 * params.tau * params.m


def potential(u, params: ModelParams):
    """Local potential V with V(0)=0 and V' equal to the local chemical potential."""
    u = np.asarray(u)
    return u**4 / 4.0 + params.quad * u**3 / 3.0 - params.eta * u**2 / 2.0


def dpotential(u, params: ModelParams):
    u = np.asarray(u)
    return u**3 + params.quad * u**2 - params.eta * u


def d2potential(u, params: ModelParams):
    u = np.asarray(u)
    return 3.0 * u**2 + 2.0 * params.quad * u - params.eta


def d3potential(u, params: ModelParams):
    return 6.0 * np.asarray(u) + 2.0 * params.quad


@dataclass(frozen=True)
class Grid:
    """Uniform vertex-centred grid on [0, L_x] (x [0, L_y]).

    Nodes sit on the boundary; Neumann conditions are imposed by even
    reflection across the end nodes.
    """

    lengths: Tuple[float, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        counts = tuple(int(v) for v in np.atleast_1d(self.counts))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "counts", counts)
        if len(lengths) not in (1, 2) or len(lengths) != len(counts):
            raise ValueError("grid must be 1D or 2D with matching lengths/counts")
        if any(n < 3 for n in counts):
            raise ValueError("need at least 3 nodes per direction")
        if any(length <= 0 for length in lengths):
            raise ValueError("domain lengths must be positive")

    @classmethod
    def line(cls, length: float, n: int) -> "Grid":
        return cls((length,), (n,))

    @classmethod
    def rect(cls, lx: float, ly: float, nx: int, ny: int) -> "Grid":
        return cls((lx, ly), (nx, ny))

    @property
    def dimension(self) -> int:
        return len(self.counts)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(length / (n - 1) for length, n in zip(self.lengths, self.counts))

    @property
    def h(self) -> float:
        return self.spacing[0]

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.counts

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axis(self, i: int = 0) -> np.ndarray:
        return np.linspace(0.0, self.lengths[i], self.counts[i])

    @property
    def x(self) -> np.ndarray:
        return self.axis(0)

    def mesh(self):
        """Coordinate arrays with shape equal to the field shape ('ij' indexing)."""
        return np.meshgrid(*(self.axis(i) for i in range(self.dimension)), indexing="ij")

    def axis_weights(self, i: int = 0) -> np.ndarray:
        w = np.full(self.counts[i], self.spacing[i])
        w[0] = w[-1] = 0.5 * self.spacing[i]
        return w

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights, shaped like a field."""
        w = self.axis_weights(0)
        for i in range(1, self.dimension):
            w = np.multiply.outer(w, self.axis_weights(i))
        return w

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * np.asarray(values)))

    def modified_wavenumber(self, k, i: int = 0):
        """Wavenumber seen by the 3-point second difference: D2 cos(kx) = -k_eff^2 cos(kx)."""
        h = self.spacing[i]
        return 2.0 / h * np.sin(0.5 * np.asarray(k) * h)

    def cosine_wavenumbers(self, i: int = 0) -> np.ndarray:
        """Admissible Neumann wavenumbers n*pi/L, n = 0..N-1."""
        return np.pi * np.arange(self.counts[i]) / self.lengths[i]

    def check_resolution(self, k: float, per_period: int = 8) -> None:
        period = 2 * np.pi / k
        for h in self.spacing:
            if period / h < per_period:
                raise ValueError(
                    f"grid too coarse: {period / h:.1f} nodes per period 2pi/k, need {per_period}"
                )


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        v = v.reshape(self.grid.shape)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)


# "pinned-at-end" fixes phi at the last node; on a half domain used for
# mirror-symmetric states it is the full domain's midpoint pin.
GAUGES = ("mean-zero", "pinned-at-midpoint", "pinned-at-end")


@dataclass(frozen=True)
class State:
    u: ScalarField
    phi: ScalarField
    gauge: str = "mean-zero"

    def __post_init__(self):
        if self.gauge not in GAUGES:
            raise ValueError(f"unknown gauge {self.gauge!r}")
        if self.u.grid != self.phi.grid:
            raise ValueError("u and phi must share a grid")

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @classmethod
    def from_arrays(cls, grid: Grid, u, phi=None, gauge: str = "mean-zero") -> "State":
        if phi is None:
            phi = np.zeros(grid.size)
        return cls(ScalarField(grid, u), ScalarField(grid, phi), gauge)

    def scaled(self, factor: float) -> "State":
        return State(self.u.with_values(factor * self.u.values),
                     self.phi.with_values(factor * self.phi.values), self.gauge)


def mass(u) -> float:
    """Domain average of u by the trapezoid rule."""
    if isinstance(u, State):
        u = u.u
    return u.grid.integrate(u.values) / u.grid.volume


def zero_mean(values, grid: Grid) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values - grid.integrate(values) / grid.volume


def d2_matrix(n: int, h: float) -> sp.csr_matrix:
    """Second difference with Neumann reflection at both end nodes."""
    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def laplacian(grid: Grid) -> sp.csr_matrix:
    """Sparse Neumann Laplacian acting on C-ordered flattened fields."""
    d2 = [d2_matrix(n, h) for n, h in zip(grid.counts, grid.spacing)]
    if grid.dimension == 1:
        return d2[0]
    nx, ny = grid.counts
    return (sp.kron(d2[0], sp.identity(ny)) + sp.kron(sp.identity(nx), d2[1])).tocsr()


def neumann_gradient(values, h: float) -> np.ndarray:
    """Centred first derivative with zero end values (Neumann)."""
    values = np.asarray(values, dtype=float)
    g = np.zeros_like(values)
    g[1:-1] = (values[2:] - values[:-2]) / (2 * h)
    return g


def companion_fields(state: State):
    """Physical derivatives (v, w, z, psi) = (u', u'', u''', phi') of a 1D state."""
    if state.grid.dimension != 1:
        raise ValueError("companion fields are defined for 1D states only")
    h = state.grid.h
    u = state.u.values
    phi = state.phi.values
    w = d2_matrix(u.size, h) @ u
    return neumann_gradient(u, h), w, neumann_gradient(w, h), neumann_gradient(phi, h)


def solution_norm(state: State) -> float:
    """Six-component norm sqrt(int_0^1 u^2+v^2+w^2+z^2+phi^2+psi^2 ds), with x = L s.

    The companions are physical derivatives; rescaling the domain to [0, 1]
    turns the integral into a domain average.
    """
    if state.grid.dimension != 1:
        raise ValueError("solution_norm is defined for 1D states only")
    v, w, z, psi = companion_fields(state)
    total = state.u.values**2 + v**2 + w**2 + z**2 + state.phi.values**2 + psi**2
    return float(np.sqrt(state.grid.integrate(total) / state.grid.volume))


def l2_norm(values, grid: Grid) -> float:
    return float(np.sqrt(grid.integrate(np.asarray(values) ** 2) / grid.volume))
