"""Steady states, pseudo-arclength continuation, folds and the snaking region.

The steady problem is solved in second-order form. Unknowns are the nodal
values of u and phi plus the constant chemical potential nu:

    V'(u) - gamma u'' + sigma phi - nu = 0         (N rows)
    (mu(u) phi')' + u = 0                          (N rows)
    gauge(phi) = 0                                 (1 row)

The Poisson rows sum (trapezoid weights) to the integral of u, so they also
pin the translated mass to zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .amplitude import amplitude_data, ansatz_localized
from .core import (Grid, ModelParams, ScalarField, State, d2_matrix, d2potential, d3potential,
                   dpotential, solution_norm, zero_mean)
from .linear import critical_onset
from .poisson import (flux_du_matrix, flux_matrix, gauge_row, solve_state)

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class ContinuationError(RuntimeError):
    def __init__(self, message, branch=None):
        super().__init__(message)
        self.branch = branch


class NoSnakingError(ValueError):
    """Parameters are not in the subcritical regime."""


# --- the steady system --------------------------------------------------------

@dataclass(frozen=True)
class SteadyProblem:
    params: ModelParams
    grid: Grid
    gauge: str = "pinned-at-midpoint"
    mass: float = 0.0
    parameter: str = "gamma"
    mirror: bool = False

    def __post_init__(self):
        if self.grid.dimension != 1:
            raise ValueError("steady continuation is 1D")
        if self.mirror and self.gauge != "pinned-at-end":
            raise ValueError("mirror problems pin phi at the symmetry point (gauge 'pinned-at-end')")
        if self.mass != 0.0:
            raise ValueError("translated mass must be zero (Neumann solvability)")

    @property
    def n(self) -> int:
        return self.grid.counts[0]

    def with_params(self, params: ModelParams) -> "SteadyProblem":
        return replace(self, params=params)

    def with_value(self, value: float, name: str | None = None) -> "SteadyProblem":
        return replace(self, params=self.params.with_(**{name or self.parameter: value}))

    @property
    def value(self) -> float:
        return getattr(self.params, self.parameter)

    # cached operators
    @property
    def D2(self) -> sp.csr_matrix:
        return _d2_cached(self.n, self.grid.h)

    @property
    def gauge_vec(self) -> np.ndarray:
        return gauge_row(self.grid, self.gauge)

    def split(self, y):
        n = self.n
        return y[:n], y[n:2 * n], y[2 * n]

    def pack(self, u, phi, nu) -> np.ndarray:
        return np.concatenate([u, phi, [nu]])

    def chemical_potential(self, u, phi, params: ModelParams | None = None) -> np.ndarray:
        p = params or self.params
        return dpotential(u, p) - p.gamma * (self.D2 @ u) + p.sigma * phi

    def residual(self, y, params: ModelParams | None = None) -> np.ndarray:
        p = params or self.params
        u, phi, nu = self.split(y)
        r1 = self.chemical_potential(u, phi, p) - nu
        r2 = flux_matrix(p.permittivity(u), self.grid.h) @ phi + u
        r3 = self.gauge_vec @ phi
        return np.concatenate([r1, r2, [r3]])

    def jacobian(self, y, params: ModelParams | None = None) -> sp.csc_matrix:
        p = params or self.params
        n, h = self.n, self.grid.h
        u, phi, _ = self.split(y)
        J11 = sp.diags(d2potential(u, p)) - p.gamma * self.D2
        J12 = p.sigma * sp.identity(n)
        J13 = sp.csr_matrix(-np.ones((n, 1)))
        J21 = sp.identity(n) + flux_du_matrix(phi, p.a, h)
        J22 = flux_matrix(p.permittivity(u), h)
        J32 = sp.csr_matrix(self.gauge_vec[None, :])
        return sp.bmat([[J11, J12, J13], [J21, J22, None], [None, J32, None]], format="csc")

    def dparam(self, y, name: str | None = None, params: ModelParams | None = None) -> np.ndarray:
        """Derivative of the residual with respect to a scalar parameter."""
        p = params or self.params
        name = name or self.parameter
        if name == "gamma":
            u = self.split(y)[0]
            return np.concatenate([-(self.D2 @ u), np.zeros(self.n + 1)])
        v = getattr(p, name)
        step = 1e-6 * max(1.0, abs(v))
        rp = self.residual(y, p.with_(**{name: v + step}))
        rm = self.residual(y, p.with_(**{name: v - step}))
        return (rp - rm) / (2 * step)

    def jacobian_action_derivative(self, y, v, params: ModelParams | None = None) -> sp.csc_matrix:
        """d/dy of J(y) v (second derivative contracted with v)."""
        p = params or self.params
        n, h = self.n, self.grid.h
        u = self.split(y)[0]
        vu, vphi, _ = self.split(v)
        A11 = sp.diags(d3potential(u, p) * vu)
        A21 = flux_du_matrix(vphi, p.a, h)
        A22 = flux_matrix(p.a * vu, h)
        Z = sp.csr_matrix((n, n))
        return sp.bmat([[A11, Z, None], [A21, A22, None], [None, None, sp.csr_matrix((1, 1))]],
                       format="csc")

    def state(self, y) -> State:
        """State on the computational grid (the half domain for mirror problems)."""
        u, phi, _ = self.split(y)
        return State.from_arrays(self.grid, u, phi, self.gauge)

    def full_state(self, y) -> State:
        """State on the full domain; mirror problems are reflected about x = L/2."""
        if not self.mirror:
            return self.state(y)
        u, phi, _ = self.split(y)
        grid = Grid.line(2 * self.grid.lengths[0], 2 * self.n - 1)
        return State.from_arrays(grid, mirror(u), mirror(phi), "pinned-at-midpoint")

    def full_u(self, y) -> np.ndarray:
        u = self.split(y)[0]
        return mirror(u) if self.mirror else u

    def seed(self, u_values) -> np.ndarray:
        """Initial vector from a u profile: mean removed, phi solved, nu averaged."""
        u = ScalarField(self.grid, zero_mean(u_values, self.grid))
        st = solve_state(u, self.params, gauge=self.gauge)
        mu_c = self.chemical_potential(st.u.values, st.phi.values)
        nu = self.grid.integrate(mu_c) / self.grid.volume
        return self.pack(st.u.values, st.phi.values, nu)


def mirror(values) -> np.ndarray:
    """Even extension of half-domain values about their last node."""
    values = np.asarray(values)
    return np.concatenate([values, values[-2::-1]])


def half(values) -> np.ndarray:
    """Left half (through the midpoint node) of a full-domain array with odd length."""
    values = np.asarray(values)
    if values.size % 2 == 0:
        raise ValueError("mirror-symmetric grids need an odd node count")
    return values[: values.size // 2 + 1]


_D2_CACHE = {}


def _d2_cached(n, h):
    key = (n, h)
    if key not in _D2_CACHE:
        _D2_CACHE[key] = d2_matrix(n, h)
    return _D2_CACHE[key]


def nu_spread(problem: SteadyProblem, y) -> float:
    """max |nu(x) - nu| with nu(x) the pointwise chemical potential."""
    u, phi, nu = problem.split(y)
    return float(np.max(np.abs(problem.chemical_potential(u, phi) - nu)))


def check_jacobian(problem: SteadyProblem, y, trials: int = 20, rng=None, step: float = 1e-6):
    """Max relative difference between J v and central differences over random v."""
    rng = np.random.default_rng(0) if rng is None else rng
    J = problem.jacobian(y)
    worst = 0.0
    for _ in range(trials):
        v = rng.normal(size=y.size)
        fd = (problem.residual(y + step * v) - problem.residual(y - step * v)) / (2 * step)
        jv = J @ v
        worst = max(worst, np.linalg.norm(jv - fd) / max(np.linalg.norm(jv), 1e-300))
    return worst


def newton(problem: SteadyProblem, y0, tol: float = 1e-10, max_iter: int = 50,
           params: ModelParams | None = None):
    """Damped Newton at fixed parameters; returns (y, iterations)."""
    p = params or problem.params
    y = np.array(y0, dtype=float)
    history = []
    for it in range(max_iter + 1):
        r = problem.residual(y, p)
        res = float(np.max(np.abs(r)))
        history.append(res)
        if not np.isfinite(res):
            break
        if res < tol:
            return y, it
        J = problem.jacobian(y, p)
        try:
            dy = spla.splu(J).solve(-r)
        except RuntimeError as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}", history) from exc
        # backtracking on the residual 2-norm keeps seeds from jumping branches
        norm0 = np.linalg.norm(r)
        lam = 1.0
        while lam > 1e-4:
            trial = y + lam * dy
            if np.linalg.norm(problem.residual(trial, p)) <= norm0 * (1 - 1e-4 * lam):
                break
            lam *= 0.5
        y = y + lam * dy
    raise ConvergenceError(f"Newton failed after {max_iter} iterations (residual {history[-1]:.3e})",
                           history)


# --- branch data ---------------------------------------------------------------

@dataclass
class BranchPoint:
    value: float
    state: State
    norm: float
    nu: float
    fold: bool = False
    stability: Optional[str] = None
    leading: Optional[float] = None
    peaks: int = 0
    y: Optional[np.ndarray] = field(default=None, repr=False)
    tangent: Optional[np.ndarray] = field(default=None, repr=False)
    parameter: str = "gamma"
    s: float = 0.0
    params: Optional[ModelParams] = None

    @property
    def gamma(self) -> float:
        return self.params.gamma if self.params is not None else self.value


@dataclass
class Branch:
    points: List[BranchPoint] = field(default_factory=list)
    folds: List[BranchPoint] = field(default_factory=list)
    termination: str = ""
    problem: Optional[SteadyProblem] = field(default=None, repr=False)
    label: str = ""

    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    def norms(self) -> np.ndarray:
        return np.array([p.norm for p in self.points])

    def fold_values(self) -> np.ndarray:
        return np.array([p.value for p in self.folds])


def count_peaks(u, frac: float = 0.5) -> int:
    """Number of contiguous runs where u exceeds frac * max(u).

    Runs rather than local maxima, because plateau-like peaks can carry a
    shallow dimple at the top.
    """
    u = np.asarray(u)
    top = np.max(u)
    if top <= 0:
        return 0
    above = (u > frac * top).astype(np.int8)
    return int(np.count_nonzero(np.diff(above) == 1) + above[0])


def make_point(problem: SteadyProblem, y, value: float, tangent=None, fold=False, s=0.0) -> BranchPoint:
    p = problem.with_value(value)
    st = p.full_state(y)
    return BranchPoint(value=value, state=st, norm=solution_norm(st), nu=float(y[-1]), fold=fold,
                       peaks=count_peaks(st.u.values), y=np.array(y), tangent=tangent,
                       parameter=problem.parameter, s=s, params=p.params)


def newton_steady(seed, problem: SteadyProblem, tol: float = 1e-10, max_iter: int = 50,
                  check: bool = True) -> BranchPoint:
    """Converge a seed (State, u array, or unknown vector) at the problem's parameters."""
    if isinstance(seed, State):
        y0 = problem.seed(seed.u.values)
    else:
        seed = np.asarray(seed, dtype=float)
        y0 = seed if seed.size == 2 * problem.n + 1 else problem.seed(seed)
    if check:
        err = check_jacobian(problem, y0, trials=3)
        if err > 1e-6:
            raise AssertionError(f"analytic Jacobian disagrees with finite differences ({err:.2e})")
    y, _ = newton(problem, y0, tol=tol, max_iter=max_iter)
    return make_point(problem, y, problem.value)


# --- pseudo-arclength ------------------------------------------------------------

@dataclass
class Controls:
    ds: float = 0.05
    ds_min: float = 1e-7
    ds_max: float = 0.5
    max_steps: int = 2000
    value_min: float = -np.inf
    value_max: float = np.inf
    tol: float = 1e-10
    max_iter: int = 8
    fill_fraction: float = 0.5
    min_steps_before_fill: int = 5
    fold_tol: float = 1e-9
    param_weight: float = 1.0
    max_turn: float = 0.2
    stop: Optional[Callable[["Branch"], Optional[str]]] = None
    detect_fill: bool = True


class Continuation:
    """Pseudo-arclength stepper for a SteadyProblem in its named parameter."""

    def __init__(self, problem: SteadyProblem, controls: Controls | None = None):
        self.problem = problem
        self.c = controls or Controls()
        w = problem.grid.weights / problem.grid.volume
        self.theta = np.concatenate([w, w, [1.0], [self.c.param_weight]])

    # X = (y, value)
    def _params(self, value):
        return self.problem.params.with_(**{self.problem.parameter: value})

    def _G(self, X):
        return self.problem.residual(X[:-1], self._params(X[-1]))

    def _GX(self, X):
        p = self._params(X[-1])
        Jy = self.problem.jacobian(X[:-1], p)
        Gp = self.problem.dparam(X[:-1], params=p)
        return sp.hstack([Jy, sp.csc_matrix(Gp[:, None])], format="csc")

    def inner(self, a, b) -> float:
        return float(np.dot(self.theta * a, b))

    def tangent(self, X, ref) -> np.ndarray:
        """Unit tangent oriented along ``ref``."""
        GX = self._GX(X)
        A = sp.vstack([GX, sp.csr_matrix((self.theta * ref)[None, :])], format="csc")
        rhs = np.zeros(X.size)
        rhs[-1] = 1.0
        t = spla.splu(A).solve(rhs)
        t /= np.sqrt(self.inner(t, t))
        if self.inner(t, ref) < 0:
            t = -t
        return t

    def corrector(self, Xp, t):
        X = Xp.copy()
        for it in range(self.c.max_iter + 1):
            G = self._G(X)
            arc = self.inner(t, X - Xp)
            r = np.concatenate([G, [arc]])
            res = float(np.max(np.abs(r)))
            if not np.isfinite(res):
                return None, it
            if res < self.c.tol:
                return X, it
            A = sp.vstack([self._GX(X), sp.csr_matrix((self.theta * t)[None, :])], format="csc")
            try:
                dX = spla.splu(A).solve(-r)
            except RuntimeError:
                return None, it
            X = X + dX
        return None, self.c.max_iter

    def step_from(self, X, t, ds):
        return self.corrector(X + ds * t, t)

    def refine_fold(self, X0, t0, ds):
        """Bisect the arclength step on the sign of the parameter tangent component."""
        lo, hi = 0.0, ds
        s0 = np.sign(t0[-1])
        Xf, tf = None, None
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            Xm, _ = self.step_from(X0, t0, mid)
            if Xm is None:
                break
            tm = self.tangent(Xm, t0)
            Xf, tf = Xm, tm
            if abs(tm[-1]) < self.c.fold_tol or (hi - lo) < 1e-10 * max(1.0, ds):
                break
            if np.sign(tm[-1]) == s0:
                lo = mid
            else:
                hi = mid
        return Xf, tf

    def filled(self, y) -> bool:
        u = self.problem.full_u(y)
        n = u.size
        edge = max(np.max(np.abs(u[: n // 20 + 1])), np.max(np.abs(u[-(n // 20 + 1):])))
        return edge > self.c.fill_fraction * np.max(np.abs(u))

    def run(self, start: BranchPoint, direction: float = 1.0, label: str = "",
            tangent=None) -> Branch:
        """Trace from ``start``; an explicit ``tangent`` is used as-is (branch switching)."""
        c = self.c
        prob = self.problem
        X = np.concatenate([start.y, [start.value]])
        if tangent is not None:
            t = direction * np.asarray(tangent, dtype=float)
        else:
            ref = np.zeros(X.size)
            if start.tangent is not None and start.tangent.size == X.size:
                ref = start.tangent * direction
            else:
                ref[-1] = direction
            t = self.tangent(X, ref)
        branch = Branch(problem=prob, label=label)
        s = 0.0
        branch.points.append(make_point(prob, X[:-1], X[-1], t, s=s))
        ds = c.ds
        for step in range(c.max_steps):
            Xn, iters = self.step_from(X, t, ds)
            if Xn is None:
                log.debug("step %d corrector failed at ds=%.3g", step, ds)
                ds *= 0.5
                if ds < c.ds_min:
                    branch.termination = "step-underflow"
                    raise ContinuationError(f"step underflow at {prob.parameter}={X[-1]:.8g}", branch)
                continue
            tn = self.tangent(Xn, t)
            turn = np.arccos(np.clip(self.inner(t, tn), -1, 1))
            log.debug("step %d %s=%.8g ds=%.3g iters=%d turn=%.3g", step, prob.parameter,
                      Xn[-1], ds, iters, turn)
            if turn > c.max_turn and ds > 2 * c.ds_min:
                ds *= 0.5
                continue
            if np.sign(tn[-1]) != np.sign(t[-1]) and t[-1] != 0:
                Xf, tf = self.refine_fold(X, t, ds)
                if Xf is not None:
                    fp = make_point(prob, Xf[:-1], Xf[-1], tf, fold=True,
                                    s=s + np.sqrt(self.inner(Xf - X, Xf - X)))
                    branch.points.append(fp)
                    branch.folds.append(fp)
            s += ds
            X, t = Xn, tn
            branch.points.append(make_point(prob, X[:-1], X[-1], t, s=s))
            if iters <= 3:
                ds = min(ds * 1.3, c.ds_max)
            elif iters >= 6:
                ds = max(ds * 0.6, c.ds_min)
            if not (c.value_min <= X[-1] <= c.value_max):
                branch.termination = "domain-boundary"
                return branch
            if c.detect_fill and step >= c.min_steps_before_fill and self.filled(X[:-1]):
                branch.termination = "onto-periodic"
                return branch
            if c.stop is not None:
                reason = c.stop(branch)
                if reason:
                    branch.termination = reason
                    return branch
        branch.termination = "step-limit"
        return branch


def continue_branch(start: BranchPoint, problem: SteadyProblem, direction: float = 1.0,
                    controls: Controls | None = None, label: str = "") -> Branch:
    return Continuation(problem, controls).run(start, direction, label)


# --- localized branches and the snaking region -------------------------------------

def default_length(params: ModelParams) -> float:
    return 40 * np.pi / critical_onset(params).k_c


def localized_seed(params: ModelParams, grid: Grid, psi: float, offset: float = 1e-3):
    data = amplitude_data(params)
    if data.criticality != "subcritical":
        raise NoSnakingError(f"f = {data.f:.4g}: localized states need a subcritical onset")
    gamma = data.gamma_c + offset
    return gamma, ansatz_localized(data, gamma, grid, psi=psi)


def localized_branch(params: ModelParams, psi: float = 0.0, length: float | None = None,
                     n: int = 1025, controls: Controls | None = None, offset: float = 1e-3,
                     symmetric: bool = True) -> Branch:
    """Trace L_0 (psi=0) or L_pi (psi=pi) from a weakly nonlinear seed near onset.

    ``n`` counts nodes on the full domain [0, L]. With ``symmetric`` (the
    default) the even states are computed on [0, L/2] with a Neumann condition
    at the midpoint, which removes the nearly neutral odd (translation) modes
    that otherwise make the tangent ill-conditioned far from the walls. Every
    stored point carries the mirrored full-domain state.
    """
    length = length or default_length(params)
    if symmetric:
        if n % 2 == 0:
            n += 1
        full = Grid.line(length, n)
        gamma, seed = localized_seed(params, full, psi, offset)
        grid = Grid.line(length / 2, n // 2 + 1)
        problem = SteadyProblem(params.with_(gamma=gamma), grid, gauge="pinned-at-end", mirror=True)
        u0 = half(seed.values)
    else:
        grid = Grid.line(length, n)
        gamma, seed = localized_seed(params, grid, psi, offset)
        problem = SteadyProblem(params.with_(gamma=gamma), grid)
        u0 = seed.values
    start = newton_steady(u0, problem)
    if np.max(np.abs(start.state.u.values)) < 0.25 * np.max(np.abs(u0)):
        raise ConvergenceError("localized seed collapsed onto the uniform state; "
                               "refine the grid or change the seed offset")
    label = "L0" if np.isclose(psi, 0.0) else "Lpi"
    return continue_branch(start, problem, direction=1.0, controls=controls, label=label)


def edge_fraction(u, width: float = 0.1) -> float:
    """max |u| within the outer ``width`` of the domain, relative to max |u|."""
    u = np.asarray(u)
    k = max(1, int(width * u.size))
    return float(max(np.abs(u[:k]).max(), np.abs(u[-k:]).max()) / np.abs(u).max())


def peak_positions(u, x, frac: float = 0.5) -> np.ndarray:
    """Centres of the runs where u exceeds frac * max(u)."""
    u = np.asarray(u)
    above = u > frac * np.max(u)
    edges = np.diff(np.concatenate([[0], above.astype(np.int8), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    return np.array([np.sum(x[a:b] * u[a:b]) / np.sum(u[a:b]) for a, b in zip(starts, stops)])


def measured_period(state: State, frac: float = 0.5) -> float:
    """Mean spacing of the peaks of u (nan with fewer than two peaks)."""
    x = state.grid.x
    pos = peak_positions(state.u.values, x, frac)
    return float(np.mean(np.diff(pos))) if pos.size > 1 else float("nan")


def snaking_folds(branch: Branch, skip: int = 4, edge_limit: float = 0.25) -> np.ndarray:
    """Fold values past the first ``skip`` whose state does not yet touch the walls."""
    keep = [f.value for f in branch.folds[skip:] if edge_fraction(f.state.u.values) <= edge_limit]
    return np.array(keep)


def snaking_region(params: ModelParams, length: float | None = None, n: int = 1025,
                   skip: int = 4, edge_limit: float = 0.25, controls: Controls | None = None,
                   branches=None):
    """(gamma_1, gamma_2): extreme fold values of L_0 and L_pi after transients.

    Transients are the first ``skip`` folds near onset and the folds close to
    termination, where the pattern already reaches the walls.
    """
    data = amplitude_data(params)
    if data.criticality != "subcritical":
        raise NoSnakingError(f"f = {data.f:.4g} <= 0: no snaking for supercritical onset")
    if branches is None:
        branches = [localized_branch(params, psi, length, n, controls) for psi in (0.0, np.pi)]
    folds = np.concatenate([snaking_folds(b, skip, edge_limit) for b in branches])
    if folds.size < 2:
        raise ContinuationError("not enough folds to bracket the snaking region")
    return float(folds.min()), float(folds.max())


# --- two-parameter fold continuation ---------------------------------------------------

@dataclass
class FoldCurve:
    a: np.ndarray
    gamma: np.ndarray
    states: list


def fold_system_solve(problem: SteadyProblem, y0, v0, gamma0, ell, tol=1e-9, max_iter=30):
    """Newton on G=0, G_y v=0, <ell, v>=1 for (y, v, gamma)."""
    n1 = y0.size
    y, v, g = y0.copy(), v0.copy(), float(gamma0)
    for it in range(max_iter + 1):
        p = problem.params.with_(gamma=g)
        J = problem.jacobian(y, p)
        G = problem.residual(y, p)
        Jv = J @ v
        r = np.concatenate([G, Jv, [ell @ v - 1.0]])
        res = float(np.max(np.abs(r)))
        if res < tol:
            return y, v, g
        Gg = problem.dparam(y, "gamma", p)
        u_v = v[: problem.n]
        Jv_g = np.concatenate([-(problem.D2 @ u_v), np.zeros(problem.n + 1)])
        H = problem.jacobian_action_derivative(y, v, p)
        A = sp.bmat([
            [J, None, sp.csc_matrix(Gg[:, None])],
            [H, J, sp.csc_matrix(Jv_g[:, None])],
            [None, sp.csr_matrix(ell[None, :]), None],
        ], format="csc")
        d = spla.splu(A).solve(-r)
        y = y + d[:n1]
        v = v + d[n1:2 * n1]
        g = g + d[-1]
    raise ConvergenceError(f"fold system did not converge (residual {res:.3e})")


def fold_continuation(fold: BranchPoint, problem: SteadyProblem, a_values) -> FoldCurve:
    """Track a fold in (a, gamma) by natural continuation in a."""
    if fold.tangent is None:
        raise ValueError("fold point needs its tangent")
    v = fold.tangent[:-1].copy()
    v /= np.linalg.norm(v)
    ell = v.copy()
    y, g = fold.y.copy(), fold.value
    a_out, g_out, states = [], [], []
    for a in a_values:
        prob = problem.with_params(problem.params.with_(a=float(a), gamma=g))
        y, v, g = fold_system_solve(prob, y, v, g, ell)
        a_out.append(float(a))
        g_out.append(g)
        states.append(prob.with_value(g).full_state(y))
    return FoldCurve(np.array(a_out), np.array(g_out), states)
