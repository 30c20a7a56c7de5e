"""Time integration of the conserved dynamics u_t = lap(V'(u) - gamma lap u + sigma phi).

Two schemes are provided:

* ``fd-1d``: backward Euler on the vertex-centred finite-difference grid,
  solved with Newton iterations on the coupled (u, phi) system and started
  from the forward Euler predictor.
* ``spectral-2d``: cosine-transform (Neumann) pseudo-spectral scheme with a
  linearly stabilised convex splitting. Linear terms and the uniform-
  permittivity part of sigma phi are implicit; the cubic/quadratic
  nonlinearity is explicit with a stabilisation constant S that makes the
  explicit part concave for |u + m| <= 1.2. For a != 0 the permittivity
  correction to phi is explicit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from . import spectral
from .continuation import ConvergenceError, count_peaks
from .core import (Grid, ModelParams, ScalarField, State, d2_matrix, d2potential, dpotential,
                   l2_norm, mass, zero_mean)
from .energy import free_energy
from .linear import critical_onset
from .poisson import flux_du_matrix, flux_matrix, gauge_row, solve_state

log = logging.getLogger(__name__)

SCHEMES = ("fd-1d", "spectral-2d")
U_BOUND = 1.2


class StepRejected(RuntimeError):
    """A step could not be completed even after the allowed dt reductions."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-2
    t_end: float = 1.0
    scheme: str = "fd-1d"
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    snapshot_times: tuple = ()
    noise_amplitude: float = 1e-3
    noise_seed: int = 0
    max_halvings: int = 6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be sorted")
        if times and (times[0] < 0 or times[-1] > self.t_end + 1e-12):
            raise ValueError("snapshot times must lie in [0, t_end]")
        object.__setattr__(self, "snapshot_times", times)

    def with_(self, **kw) -> "IntegratorConfig":
        return replace(self, **kw)


def default_dt(scheme: str) -> float:
    return {"fd-1d": 1e-2, "spectral-2d": 1e-1}[scheme]


def uniform_snapshots(t_end: float, count: int) -> tuple:
    return tuple(np.linspace(0.0, t_end, count + 1))


def noise(grid: Grid, amplitude: float, seed: int) -> np.ndarray:
    """Zero-mean uniform noise in [-A, A] (before mean removal)."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(-amplitude, amplitude, grid.shape)
    return zero_mean(values, grid)


def monotone_dt_1d(params: ModelParams) -> float:
    """dt below which backward Euler is energy-decreasing for the short-range part.

    With V'' >= -kappa the implicit step is dissipative for dt <= 4 gamma / kappa^2;
    the Coulomb term is convex and only helps.
    """
    kappa = params.eta + params.quad**2 / 3.0
    if kappa <= 0:
        return np.inf
    return 4.0 * params.gamma / kappa**2


def stabilization(params: ModelParams, bound: float = U_BOUND) -> float:
    """S >= N'(u) = 3u^2 + 2 q u wherever |u + m| <= bound, and S >= eta.

    The bound applies to the untranslated order parameter u + m, whose pure
    phases sit at +-1. N' is convex, so its maximum is at an interval end.
    """
    ends = np.array([-bound - params.m, bound - params.m])
    return float(max(np.max(3 * ends**2 + 2 * params.quad * ends), params.eta))


# --- 1D backward Euler with Newton ---------------------------------------------------

@lru_cache(maxsize=16)
def _fd_operators(n: int, h: float, gauge: str, length: float):
    grid = Grid.line(length, n)
    D2 = d2_matrix(n, h).tocsr()
    g = sp.csr_matrix(gauge_row(grid, gauge)[None, :])
    ones = sp.csr_matrix(np.ones((n, 1)))
    return D2, g, ones


class FDStepper:
    """Backward Euler for the coupled (u, phi) system on a 1D grid.

    Rows: u - u_old - dt D2 (V'(u) - gamma D2 u + sigma phi) = 0,
    flux(mu(u)) phi + u + c = 0 and the gauge row; c is a Lagrange
    multiplier that vanishes for zero-mean u.
    """

    def __init__(self, grid: Grid, params: ModelParams, gauge: str = "mean-zero",
                 tol: float = 1e-10, max_iter: int = 20):
        if grid.dimension != 1:
            raise ValueError("fd-1d scheme needs a 1D grid")
        self.grid = grid
        self.params = params
        self.gauge = gauge
        self.tol = tol
        self.max_iter = max_iter
        self.n = grid.counts[0]
        self.D2, self.g, self.ones = _fd_operators(self.n, grid.h, gauge, grid.lengths[0])

    def chem(self, u, phi):
        p = self.params
        return dpotential(u, p) - p.gamma * (self.D2 @ u) + p.sigma * phi

    def residual(self, z, u_old, dt):
        n, p, h = self.n, self.params, self.grid.h
        u, phi, c = z[:n], z[n:2 * n], z[2 * n]
        r1 = u - u_old - dt * (self.D2 @ self.chem(u, phi))
        r2 = flux_matrix(p.permittivity(u), h) @ phi + u + c
        r3 = self.g @ phi
        return np.concatenate([r1, r2, r3])

    def jacobian(self, z, dt):
        n, p, h = self.n, self.params, self.grid.h
        u, phi = z[:n], z[n:2 * n]
        I = sp.identity(n, format="csr")
        J11 = I - dt * (self.D2 @ (sp.diags(d2potential(u, p)) - p.gamma * self.D2))
        J12 = -dt * p.sigma * self.D2
        J21 = I + flux_du_matrix(phi, p.a, h)
        J22 = flux_matrix(p.permittivity(u), h)
        return sp.bmat([[J11, J12, None], [J21, J22, self.ones], [None, self.g, None]],
                       format="csc")

    def step(self, state: State, dt: float) -> State:
        n = self.n
        u0 = np.asarray(state.u.values, dtype=float)
        phi0 = np.asarray(state.phi.values, dtype=float)
        # forward Euler predictor
        u = u0 + dt * (self.D2 @ self.chem(u0, phi0))
        z = np.concatenate([u, phi0, [0.0]])
        history = []
        for _ in range(self.max_iter):
            r = self.residual(z, u0, dt)
            res = float(np.max(np.abs(r)))
            history.append(res)
            if res < self.tol:
                break
            if not np.isfinite(res) or (len(history) > 3 and res > 1e3 * history[0]):
                raise ConvergenceError(f"Newton diverged at dt={dt:.3g}", history)
            z = z - spla.spsolve(self.jacobian(z, dt), r)
        else:
            r = self.residual(z, u0, dt)
            history.append(float(np.max(np.abs(r))))
            if history[-1] >= self.tol:
                raise ConvergenceError(
                    f"Newton did not converge in {self.max_iter} iterations at dt={dt:.3g} "
                    f"(residual {history[-1]:.3e})", history)
        u_new, phi_new = z[:n], z[n:2 * n]
        return State.from_arrays(self.grid, u_new, phi_new, state.gauge)


def step_1d(state: State, params: ModelParams, cfg: IntegratorConfig) -> State:
    """One backward Euler step of size cfg.dt."""
    stepper = FDStepper(state.grid, params, state.gauge, cfg.newton_tol, cfg.newton_max_iter)
    return stepper.step(state, cfg.dt)


# --- cosine-transform convex splitting ------------------------------------------------

class SpectralStepper:
    """Linearly stabilised convex splitting in the even-reflection cosine basis.

    u_hat_new (1 + dt k^2 (gamma k^2 + S - eta) + dt sigma/mu0 [k != 0])
        = u_hat (1 + dt k^2 S) - dt k^2 N_hat(u) - dt sigma k^2 dphi_hat
    with N(u) = u^3 + q u^2 and dphi the permittivity correction of phi
    (zero when a = 0).
    """

    def __init__(self, grid: Grid, params: ModelParams, bound: float = U_BOUND,
                 poisson_tol: float = 1e-10):
        self.grid = grid
        self.params = params
        self.bound = bound
        self.S = stabilization(params, bound)
        self.k2 = spectral.k_squared(grid)
        self.nonzero = self.k2 > 0
        self.poisson_tol = poisson_tol
        self._denoms: Dict[float, np.ndarray] = {}

    def _denominator(self, dt):
        d = self._denoms.get(dt)
        if d is None:
            p, k2 = self.params, self.k2
            d = 1 + dt * k2 * (p.gamma * k2 + self.S - p.eta) + dt * p.sigma / p.mu0 * self.nonzero
            self._denoms[dt] = d
        return d

    def potential(self, u):
        """phi for u on the transform path (mean-zero gauge)."""
        p = self.params
        if p.a == 0:
            c = spectral.forward(u)
            c[self.nonzero] /= p.mu0 * self.k2[self.nonzero]
            c.flat[0] = 0.0
            return spectral.inverse(c)
        state = solve_state(ScalarField(self.grid, u), p, "mean-zero", method="spectral",
                            tol=self.poisson_tol)
        return state.phi.values

    def step(self, state: State, dt: float) -> State:
        p, k2 = self.params, self.k2
        u = np.asarray(state.u.values, dtype=float)
        rhs = spectral.forward(u) * (1 + dt * k2 * self.S)
        rhs -= dt * k2 * spectral.forward(u**3 + p.quad * u**2)
        if p.a != 0:
            phi = state.phi.values - np.mean(state.phi.values)
            c0 = spectral.forward(u)
            c0[self.nonzero] /= p.mu0 * k2[self.nonzero]
            c0.flat[0] = 0.0
            rhs -= dt * p.sigma * k2 * (spectral.forward(phi) - c0)
        c = rhs / self._denominator(dt)
        c.flat[0] = spectral.forward(u).flat[0]
        u_new = spectral.inverse(c)
        peak = float(np.max(np.abs(u_new + p.m)))
        if peak > self.bound:
            raise StepRejected(f"|u + m| reached {peak:.3f} > {self.bound} at dt={dt:.3g}")
        return State.from_arrays(self.grid, u_new, self.potential(u_new), "mean-zero")


def step_2d(state: State, params: ModelParams, cfg: IntegratorConfig) -> State:
    """One convex-splitting step of size cfg.dt (any grid dimension, cosine basis)."""
    if state.u.values.shape != state.grid.shape:
        raise ValueError("field shape does not match the transform grid")
    return SpectralStepper(state.grid, params).step(state, cfg.dt)


# --- trajectories -----------------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: List[State]
    mass: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    params: ModelParams
    steps: int = 0
    rejected: int = 0

    @property
    def final(self) -> State:
        return self.snapshots[-1]

    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])))

    def energy_increases(self, tol: float = 1e-12) -> np.ndarray:
        """Indices i where E(t_{i+1}) > E(t_i) + tol."""
        return np.nonzero(np.diff(self.energy) > tol)[0]


def _make_stepper(state: State, params: ModelParams, cfg: IntegratorConfig):
    if cfg.scheme == "fd-1d":
        return FDStepper(state.grid, params, state.gauge, cfg.newton_tol, cfg.newton_max_iter)
    return SpectralStepper(state.grid, params)


def _advance(stepper, state: State, dt: float, halvings: int, counter: dict) -> State:
    """Step by dt, retrying as two half steps on Newton failure or a bound violation."""
    try:
        return stepper.step(state, dt)
    except (ConvergenceError, StepRejected) as exc:
        if halvings <= 0:
            raise StepRejected(f"step failed after dt reductions: {exc}") from exc
        log.info("step rejected (%s); retrying with dt=%.3g", exc, dt / 2)
        counter["rejected"] += 1
        mid = _advance(stepper, state, dt / 2, halvings - 1, counter)
        return _advance(stepper, mid, dt / 2, halvings - 1, counter)


def diagnostics(state: State, params: ModelParams):
    u = state.u.values
    return mass(state), free_energy(state, params).total, l2_norm(u, state.grid)


def integrate(state: State, params: ModelParams, cfg: IntegratorConfig,
              callback: Optional[Callable[[float, State], None]] = None) -> Trajectory:
    """Advance to cfg.t_end, recording the state at every snapshot time.

    Steps are shortened to land exactly on snapshot times. Without a schedule
    only the initial and final states are kept.
    """
    if cfg.scheme == "fd-1d":
        limit = monotone_dt_1d(params)
        if cfg.dt > limit:
            log.warning("dt=%.3g exceeds the 1D energy-monotonicity threshold %.3g", cfg.dt, limit)
        else:
            log.info("1D energy-monotonicity threshold dt <= %.3g", limit)
    stepper = _make_stepper(state, params, cfg)
    targets = list(cfg.snapshot_times) or [0.0, cfg.t_end]
    if targets[0] > 0:
        targets.insert(0, 0.0)
    if targets[-1] < cfg.t_end:
        targets.append(cfg.t_end)
    times, snaps, rows = [], [], []
    t = 0.0
    counter = {"rejected": 0, "steps": 0}
    current = state
    for target in targets:
        while target - t > 1e-12 * max(1.0, target):
            dt = min(cfg.dt, target - t)
            if target - t - dt < 1e-9 * cfg.dt:
                dt = target - t
            current = _advance(stepper, current, dt, cfg.max_halvings, counter)
            t += dt
            counter["steps"] += 1
            if callback is not None:
                callback(t, current)
        t = target
        times.append(t)
        snaps.append(current)
        rows.append(diagnostics(current, params))
    rows = np.array(rows)
    return Trajectory(np.array(times), snaps, rows[:, 0], rows[:, 1], rows[:, 2], params,
                      steps=counter["steps"], rejected=counter["rejected"])


# --- named experiments ------------------------------------------------------------------

@dataclass
class ExperimentResult:
    name: str
    params: ModelParams
    config: IntegratorConfig
    trajectory: Trajectory
    diagnostics: dict = field(default_factory=dict)


def _kc(params: ModelParams) -> float:
    return critical_onset(params).k_c


def _stripe_profile(params: ModelParams, grid: Grid, k: float, amplitude: float):
    x = grid.mesh()[0]
    return amplitude * np.cos(k * x)


def transverse_profile(u: np.ndarray) -> np.ndarray:
    """Variance across y at every x (rows are x)."""
    return np.var(u, axis=1)


def transverse_summary(state: State, base: np.ndarray | None = None) -> dict:
    """Where and at what scale a 2D field departs from being y-independent.

    ``edge_share`` is the fraction of transverse variance carried by the
    outermost stripes of the localized pattern; ``dominant_ky_index`` is the
    cosine index of the strongest y-mode (1 = one half-wavelength across L_y).
    """
    u = state.u.values
    prof = transverse_profile(u)
    total = float(prof.sum())
    col = np.mean(u, axis=1) if base is None else base
    x = state.grid.axis(0)
    active = np.nonzero(np.abs(col) > 0.5 * np.max(np.abs(col)))[0]
    out = {"transverse_variance": total / prof.size}
    if active.size and total > 0:
        lo, hi = x[active[0]], x[active[-1]]
        width = max(hi - lo, 1e-12)
        band = 0.15 * width
        edge = (np.abs(x - lo) <= band) | (np.abs(x - hi) <= band)
        out["edge_share"] = float(prof[edge].sum() / total)
        out["interior_share"] = float(prof[(x > lo + band) & (x < hi - band)].sum() / total)
    c = spectral.forward(u - u.mean(axis=1, keepdims=True))
    power = np.sum(c**2, axis=0)
    power[0] = 0.0
    out["dominant_ky_index"] = int(np.argmax(power))
    return out


def onset_summary(traj: "Trajectory", base: np.ndarray, threshold: float = 1e-4) -> dict:
    """Transverse summary at the first snapshot whose transverse variance exceeds ``threshold``.

    Where the breakup starts is a property of the early growth; late snapshots
    mix in the secondary breakup. Falls back to the final snapshot.
    """
    picked = None
    for t, snap in zip(traj.times, traj.snapshots):
        d = transverse_summary(snap, base)
        picked = (t, d)
        if d["transverse_variance"] > threshold:
            break
    t, d = picked
    out = {"onset_time": float(t), "onset_reached": d["transverse_variance"] > threshold}
    out.update({f"onset_{k}": v for k, v in d.items()})
    return out


def count_spots(u: np.ndarray, frac: float = 0.5) -> int:
    """Connected regions with u above frac * max."""
    labels, count = ndimage.label(u > frac * np.max(u))
    return int(count)


def _eckhaus(params, cfg, n=None, modes: int = 44):
    """Twenty critical periods seeded with cos(modes pi x / L).

    44 half-wavelengths give k ~ 1.10 k_c, inside the existence band but
    outside the Eckhaus-stable band at gamma = 0.24.
    """
    k_c = _kc(params)
    length = 20 * 2 * np.pi / k_c
    n = n or 481
    grid = Grid.line(length, n)
    k = modes * np.pi / length
    u = _stripe_profile(params, grid, k, 0.2) + noise(grid, cfg.noise_amplitude, cfg.noise_seed)
    return solve_state(ScalarField(grid, zero_mean(u, grid)), params, "mean-zero")


def _zigzag(params, cfg, n=None):
    k_c = _kc(params)
    length = 8 * 2 * np.pi / k_c
    n = n or 129
    grid = Grid.rect(length, length, n, n)
    u = _stripe_profile(params, grid, 16 * np.pi / length, 0.5)
    u = u + noise(grid, cfg.noise_amplitude, cfg.noise_seed)
    return solve_state(ScalarField(grid, zero_mean(u, grid)), params, "mean-zero", method="spectral",
                       tol=1e-10)


def localized_stripe_2d(stripe: State, ly: float, ny: int, nx: int | None = None) -> np.ndarray:
    """Extend a 1D profile uniformly in y, optionally resampling in x."""
    u1 = stripe.u.values
    if nx is not None and nx != u1.size:
        x_old = stripe.grid.x
        x_new = np.linspace(0, stripe.grid.lengths[0], nx)
        u1 = np.interp(x_new, x_old, u1)
    return np.repeat(u1[:, None], ny, axis=1)


FIG7 = {"fig7a-body": 0.0242, "fig7b-wall": 0.0199, "fig7c-localized-body": 0.0437}


def fig7_stripe(params: ModelParams, n: int = 1025, segment: int = 5, branch=None):
    """1D localized stripe on the L_0 stretch after fold ``segment`` at params.gamma.

    The domain is L = 80 pi / k_c, twice the continuation default.
    """
    from .continuation import Controls, localized_branch
    from .stability import stripe_at

    length = 80 * np.pi / _kc(params)
    if branch is None:
        def enough(br):
            return "fold-limit" if len(br.folds) > segment else None

        branch = localized_branch(params, 0.0, length, n,
                                  Controls(ds=0.02, ds_max=0.3, max_steps=4000, stop=enough))
    return stripe_at(branch, params.gamma, segment).state, branch


def _fig7(params, cfg, n=None, stripe: State | None = None, ly: float = 15.0, ny: int = 65):
    # keep the continuation grid in x: resampling moves the stripe off its
    # discrete steady state and it sheds peaks before any transverse growth
    if stripe is None:
        stripe, _ = fig7_stripe(params)
    nx = n or stripe.grid.shape[0]
    grid = Grid.rect(stripe.grid.lengths[0], ly, nx, ny)
    u = localized_stripe_2d(stripe, ly, ny, nx) + noise(grid, cfg.noise_amplitude, cfg.noise_seed)
    return solve_state(ScalarField(grid, zero_mean(u, grid)), params, "mean-zero", method="spectral",
                       tol=1e-10)


def hex_cluster(grid: Grid, k: float, rings: int = 2, amplitude: float = 0.8) -> np.ndarray:
    """Spots on a hexagonal lattice (spacing 4 pi / (sqrt(3) k)) around the centre."""
    X, Y = grid.mesh()
    cx, cy = grid.lengths[0] / 2, grid.lengths[1] / 2
    a = 4 * np.pi / (np.sqrt(3) * k)
    width = a / 4
    u = np.zeros(grid.shape)
    for i in range(-rings, rings + 1):
        for j in range(-rings, rings + 1):
            if abs(i + j) > rings:
                continue
            px = cx + a * (i + 0.5 * j)
            py = cy + a * (np.sqrt(3) / 2) * j
            u += np.exp(-((X - px) ** 2 + (Y - py) ** 2) / (2 * width**2))
    return amplitude * u


def _hex(params, cfg, n=None):
    n = n or 129
    grid = Grid.rect(40.0, 40.0, n, n)
    u = hex_cluster(grid, _kc(params)) + noise(grid, cfg.noise_amplitude, cfg.noise_seed)
    return solve_state(ScalarField(grid, zero_mean(u, grid)), params, "mean-zero", method="spectral",
                       tol=1e-10)


@dataclass(frozen=True)
class Experiment:
    builder: Callable
    params: ModelParams
    config: IntegratorConfig


EXPERIMENTS: Dict[str, Experiment] = {
    "eckhaus": Experiment(_eckhaus, ModelParams(gamma=0.24, a=0.1),
                          IntegratorConfig(dt=0.05, t_end=1000.0, scheme="fd-1d",
                                           snapshot_times=uniform_snapshots(1000.0, 200))),
    "zigzag": Experiment(_zigzag, ModelParams(gamma=0.1, a=0.1),
                         IntegratorConfig(dt=0.1, t_end=300.0, scheme="spectral-2d",
                                          snapshot_times=uniform_snapshots(300.0, 30))),
    "hex-seed": Experiment(_hex, ModelParams(gamma=0.03, m=0.5),
                           IntegratorConfig(dt=0.1, t_end=200.0, scheme="spectral-2d",
                                            snapshot_times=uniform_snapshots(200.0, 20))),
}
EXPERIMENTS["fig2a"] = EXPERIMENTS["eckhaus"]
EXPERIMENTS["fig2b"] = EXPERIMENTS["zigzag"]
for _name, _g in FIG7.items():
    EXPERIMENTS[_name] = Experiment(_fig7, ModelParams(gamma=_g, m=0.5),
                                    IntegratorConfig(dt=0.1, t_end=400.0, scheme="spectral-2d",
                                                     snapshot_times=uniform_snapshots(400.0, 40)))


def run_experiment(name: str, params: ModelParams | None = None,
                   cfg: IntegratorConfig | None = None, n: int | None = None,
                   initial: State | None = None, **builder_kw) -> ExperimentResult:
    """Run a named experiment; params and cfg default to the experiment's own."""
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; known: {sorted(EXPERIMENTS)}")
    exp = EXPERIMENTS[name]
    params = params or exp.params
    cfg = cfg or exp.config
    state = initial if initial is not None else exp.builder(params, cfg, n, **builder_kw)
    traj = integrate(state, params, cfg)
    diag = {"mass_drift": traj.mass_drift(),
            "energy_increases": int(traj.energy_increases().size),
            "steps": traj.steps, "rejected": traj.rejected}
    if state.grid.dimension == 1:
        cells = [count_peaks(s.u.values) for s in traj.snapshots]
        diag["cells"] = cells
        diag["cell_change"] = cells[0] != cells[-1]
    else:
        base = np.mean(state.u.values, axis=1)
        diag.update(transverse_summary(traj.final, base))
        diag["spots"] = count_spots(traj.final.u.values)
        diag.update(onset_summary(traj, base))
    return ExperimentResult(name, params, cfg, traj, diag)
