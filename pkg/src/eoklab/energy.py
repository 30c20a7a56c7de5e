"""Free energy, periodic-versus-uniform energy comparison and the Maxwell point.

E[u] = integral of (gamma/2)|grad u|^2 + V(u) + (sigma/2) u phi, with
V(u) = u^4/4 + (3m - tau) u^3/3 - eta u^2/2 so that the uniform state has
E = 0. The Coulomb part does not depend on the phi gauge because u has zero
mean.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, minimize_scalar

from . import spectral
from .core import Grid, ModelParams, State, dpotential, potential
from .continuation import (Continuation, ContinuationError, Controls, ConvergenceError,
                           SteadyProblem, make_point, newton)
from .linear import critical_onset

log = logging.getLogger(__name__)


class NoMaxwellCrossing(RuntimeError):
    """The periodic branch never reaches the uniform-state energy."""


@dataclass(frozen=True)
class EnergyReport:
    total: float
    gradient: float
    potential: float
    coulomb: float
    volume: float

    @property
    def short_range(self) -> float:
        return self.gradient + self.potential

    @property
    def density(self) -> float:
        """Energy per unit length (area in 2D)."""
        return self.total / self.volume


def gradient_energy(u, grid: Grid) -> float:
    """Integral of |grad u|^2 / 2 consistent with the discrete Laplacians."""
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    if grid.dimension == 1:
        h = grid.h
        return float(0.5 * np.sum(np.diff(u) ** 2) / h)
    return float(-0.5 * grid.integrate(u * spectral.laplacian(u, grid)))


def free_energy(state: State, params: ModelParams) -> EnergyReport:
    grid = state.grid
    u = state.u.values
    phi = state.phi.values
    mean = grid.integrate(u) / grid.volume
    if abs(mean) > 1e-8 * max(np.max(np.abs(u)), 1.0):
        raise ValueError(f"state has non-zero mean {mean:.3e}")
    grad = params.gamma * gradient_energy(u, grid)
    pot = grid.integrate(potential(u, params))
    coul = 0.5 * params.sigma * grid.integrate(u * phi)
    return EnergyReport(total=grad + pot + coul, gradient=grad, potential=pot, coulomb=coul,
                        volume=grid.volume)


# --- periodic states on one period ------------------------------------------------

def bifurcation_gamma(k: float, params: ModelParams) -> float:
    """gamma at which the uniform state loses stability to wavenumber k."""
    return (params.eta * k**2 - params.sigma / params.mu0) / k**4


def periodic_branch(params: ModelParams, period: float, n: int = 65, ds: float = 0.02,
                    max_steps: int = 400, gamma_floor: float | None = None, stop_negative=True):
    """Upper periodic branch of wavelength ``period`` on a one-period Neumann domain.

    Branch switching off the uniform state uses the bifurcating cosine mode as
    the initial tangent. Returns a Branch.
    """
    grid = Grid.line(period, n)
    k = 2 * np.pi / period
    gb = bifurcation_gamma(k, params)
    if gb <= 0:
        raise ValueError(f"period {period:.4g} never bifurcates from the uniform state")
    problem = SteadyProblem(params.with_(gamma=gb), grid)
    y0 = np.zeros(2 * n + 1)
    start = make_point(problem, y0, gb)
    mode = problem.seed(np.cos(k * grid.x))
    tangent = np.concatenate([mode, [0.0]])
    cont = Continuation(problem, Controls(ds=ds, ds_max=0.2, max_steps=max_steps, detect_fill=False,
                                          value_min=gamma_floor if gamma_floor is not None else 0.5 * gb))
    tangent /= np.sqrt(cont.inner(tangent, tangent))
    seen_fold = {"v": False}

    def stop(branch):
        # folds at vanishing amplitude are pitchfork artefacts
        if any(np.max(np.abs(f.state.u.values)) > 0.05 for f in branch.folds):
            seen_fold["v"] = True
        if stop_negative and seen_fold["v"]:
            last = branch.points[-1]
            e = free_energy(last.state, params.with_(gamma=last.value)).total
            if e < 0 and len(branch.points) > 2:
                return "energy-crossed"
        return None

    cont.c.stop = stop
    return cont.run(start, 1.0, label=f"P={period:.5g}", tangent=tangent)


def _energy_at(problem: SteadyProblem, y, gamma):
    y2, _ = newton(problem, y, params=problem.params.with_(gamma=gamma))
    p = problem.params.with_(gamma=gamma)
    return free_energy(problem.full_state(y2), p).total, y2


def energy_gradient(problem: SteadyProblem, y, params: ModelParams) -> np.ndarray:
    """dE/dy for y = (u, phi, nu), with phi treated as an independent unknown."""
    u, phi, _ = problem.split(y)
    w = problem.grid.weights
    gu = w * (dpotential(u, params) - params.gamma * (problem.D2 @ u) + 0.5 * params.sigma * phi)
    return np.concatenate([gu, 0.5 * params.sigma * w * u, [0.0]])


def maxwell_solve(problem: SteadyProblem, y0, gamma0: float, tol: float = 1e-11,
                  max_iter: int = 30):
    """Newton on (steady residual, E) = 0 for the unknowns (y, gamma).

    Returns (gamma, y). Raises ConvergenceError if Newton fails or collapses
    onto the uniform state.
    """
    y, g = np.array(y0, dtype=float), float(gamma0)
    scale = np.max(np.abs(problem.split(y)[0]))
    history = []
    for _ in range(max_iter + 1):
        p = problem.params.with_(gamma=g)
        u = problem.split(y)[0]
        r = np.append(problem.residual(y, p), free_energy(problem.state(y), p).total)
        history.append(float(np.max(np.abs(r))))
        if not np.isfinite(history[-1]) or g <= 0:
            break
        if history[-1] < tol:
            if np.max(np.abs(u)) < 0.2 * scale:
                raise ConvergenceError("Maxwell Newton fell onto the uniform state", history)
            return g, y
        A = sp.bmat([[problem.jacobian(y, p), problem.dparam(y, "gamma", p)[:, None]],
                     [energy_gradient(problem, y, p)[None, :],
                      np.array([[gradient_energy(u, problem.grid)]])]], format="csc")
        try:
            d = spla.splu(A).solve(-r)
        except RuntimeError as exc:
            raise ConvergenceError(f"singular Maxwell system: {exc}", history) from exc
        y = y + d[:-1]
        g = g + d[-1]
    raise ConvergenceError(f"Maxwell Newton failed (residual {history[-1]:.3e})", history)


def _maxwell_from_bifurcation(params: ModelParams, period: float, n: int, xtol: float):
    branch = periodic_branch(params, period, n=n)
    if branch.termination != "energy-crossed":
        raise NoMaxwellCrossing(f"no energy sign change on the P={period:.5g} branch "
                                f"(termination: {branch.termination})")
    a_pt, b_pt = branch.points[-2], branch.points[-1]
    problem = branch.problem
    ea = free_energy(a_pt.state, params.with_(gamma=a_pt.value)).total
    if ea <= 0:
        raise NoMaxwellCrossing("bracket lost before refinement")
    ya, yb = a_pt.y, b_pt.y
    ga, gb = a_pt.value, b_pt.value

    def chord(g):
        s = (g - ga) / (gb - ga)
        return (1 - s) * ya + s * yb

    def f(g):
        # start Newton from the chord between the bracketing branch points
        return _energy_at(problem, chord(g), g)[0]

    g = float(brentq(f, ga, gb, xtol=xtol))
    return g, _energy_at(problem, chord(g), g)[1]


def maxwell_state(params: ModelParams, period: float, n: int = 65, xtol: float = 1e-12,
                  seed=None):
    """(gamma_M, y) at period P.

    Without a seed the crossing is found on the branch bifurcating from the
    uniform state. A seed (y, gamma) from a nearby period on the same n-node
    grid is continued directly, which also reaches periods whose branch does
    not bifurcate from u = 0.
    """
    if seed is None:
        return _maxwell_from_bifurcation(params, period, n, xtol)
    problem = SteadyProblem(params, Grid.line(period, n))
    return maxwell_solve(problem, seed[0], seed[1])


def maxwell_gamma(params: ModelParams, period: float, n: int = 65, xtol: float = 1e-12,
                  seed=None) -> float:
    """gamma_M(P): zero of the energy along the upper periodic branch of period P."""
    return maxwell_state(params, period, n=n, xtol=xtol, seed=seed)[0]


_FAILURES = (NoMaxwellCrossing, ContinuationError, ConvergenceError)


@dataclass
class MaxwellLocus:
    periods: np.ndarray
    gamma_m: np.ndarray
    states: list = field(default_factory=list)

    def seed(self, i):
        if np.isnan(self.gamma_m[i]):
            return None
        return self.states[i], self.gamma_m[i]


def maxwell_locus(params: ModelParams, periods, n: int = 65) -> MaxwellLocus:
    """gamma_M(P) over ascending periods; NaN where no Maxwell state is found.

    Each period is continued from its predecessor's Maxwell state, falling
    back on the bifurcation route when there is none.
    """
    periods = np.sort(np.asarray(periods, dtype=float))
    gammas, states = [], []
    prev = None
    for P in periods:
        g, y = _locus_step(params, float(P), n, prev)
        gammas.append(g)
        states.append(y)
        if y is not None:
            prev = (y, g)
    return MaxwellLocus(periods, np.array(gammas), states)


def _locus_step(params, P, n, prev):
    for seed in ((prev, None) if prev is not None else (None,)):
        try:
            return maxwell_state(params, P, n=n, seed=seed)
        except (*_FAILURES, ValueError) as exc:
            log.info("P=%.5g: %s", P, exc)
    return np.nan, None


def default_periods(params: ModelParams, count: int = 21, spread: float = 0.25) -> np.ndarray:
    pc = 2 * np.pi / critical_onset(params).k_c
    return np.linspace((1 - spread) * pc, (1 + spread) * pc, count)


def maxwell_point(params: ModelParams, periods=None, n: int = 65, xtol: float = 1e-7,
                  max_extend: int = 60):
    """(gamma_Max, P*, locus): where gamma_M(P) meets the minimal-energy period.

    At fixed gamma the energy density is minimised over P by P*(gamma); the
    density of P* vanishes exactly when gamma is the largest gamma_M, so the
    intersection is the maximum of the locus, refined by a bounded search.
    If the maximum sits at the end of the window, the window is extended by
    continuing the Maxwell state in P.
    """
    periods = default_periods(params) if periods is None else np.asarray(periods, dtype=float)
    locus = maxwell_locus(params, periods, n=n)
    if np.all(np.isnan(locus.gamma_m)):
        raise NoMaxwellCrossing("no period in the window reaches the uniform-state energy")
    step = float(np.min(np.diff(locus.periods)))
    for _ in range(max_extend):
        i = int(np.nanargmax(locus.gamma_m))
        if i == 0:
            j, P = 0, locus.periods[0] - step
        elif i == len(locus.periods) - 1:
            j, P = i, locus.periods[-1] + step
        else:
            break
        if P <= 0:
            break
        g, y = _locus_step(params, float(P), n, locus.seed(j))
        if y is None:
            break
        at = 0 if j == 0 else len(locus.periods)
        locus = MaxwellLocus(np.insert(locus.periods, at, P), np.insert(locus.gamma_m, at, g),
                             locus.states[:at] + [y] + locus.states[at:])
    i = int(np.nanargmax(locus.gamma_m))
    if i == 0 or i == len(locus.periods) - 1:
        raise NoMaxwellCrossing("gamma_M(P) peaks at the edge of the period window")
    seed = locus.seed(i)

    def neg(P):
        try:
            return -maxwell_gamma(params, P, n=n, seed=seed)
        except _FAILURES:
            return np.inf

    res = minimize_scalar(neg, bounds=(locus.periods[i - 1], locus.periods[i + 1]),
                          method="bounded", options={"xatol": xtol})
    if not np.isfinite(res.fun):
        raise NoMaxwellCrossing("Maxwell refinement failed near the locus maximum")
    return float(-res.fun), float(res.x), locus
