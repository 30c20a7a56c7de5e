"""Linear stability of steady states and transverse instabilities of stripes.

A steady 1D state (u_L, phi_L) is perturbed by (u~, phi~) exp(beta t + i k_y y).
With D = d_xx - k_y^2 and mu = a(u_L + m) + 1 the perturbation obeys

    beta u~ = D( V''(u_L) u~ - gamma D u~ + sigma phi~ )
    0       = div(mu grad phi~) - k_y^2 mu phi~ + u~ + d_x(a u~ d_x phi_L)

which is the pencil (S - beta P) w = 0 with P acting on u~ only. At k_y = 0
only zero-mean u~ are admissible; the mean mode is excluded explicitly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Grid, ModelParams, ScalarField, State, d2_matrix, d2potential
from .continuation import (Branch, BranchPoint, make_point, newton,
                           peak_positions, measured_period)
from .linear import dispersion
from .poisson import flux_du_matrix, flux_matrix, gauge_row, linearized_matrix

log = logging.getLogger(__name__)

# Growth rates below this count as neutral: a well-localized state carries an
# odd translation-like mode whose rate is set by exponentially weak wall
# interaction and can take either sign at the 1e-6 level.
STABLE_TOL = 1e-5
MEAN_SHIFT = 10.0


class EigenSolverError(RuntimeError):
    pass


@dataclass
class Spectrum:
    beta: np.ndarray          # sorted by descending real part
    vectors: np.ndarray       # columns are u~ on the grid
    k_y: float
    grid: Grid
    residuals: Optional[np.ndarray] = None

    @property
    def leading(self) -> int:
        return 0

    @property
    def leading_beta(self) -> complex:
        return self.beta[0]

    @property
    def entries(self):
        return [(b, ScalarField(self.grid, self.vectors[:, i].real), self.k_y)
                for i, b in enumerate(self.beta)]

    def verdict(self, tol: float = STABLE_TOL) -> str:
        return "stable" if self.beta[0].real < tol else "unstable"


MODE_LABELS = ("body", "wall", "localized-body", "stable", "ambiguous")


@dataclass
class ModeClass:
    label: str
    k_max: float
    beta_max: float
    edge_fraction: float
    interior_fraction: float
    small_k_beta: float
    diagnostics: dict = field(default_factory=dict)


def _state_params(point, params):
    if isinstance(point, BranchPoint):
        return point.state, (params or point.params)
    return point, params


def _sort(beta, vecs, count):
    order = np.argsort(-beta.real, kind="stable")[:count]
    return beta[order], vecs[:, order]


# --- 1D spectrum via the quadrature reduction ---------------------------------------

def zero_mean_basis(grid: Grid) -> np.ndarray:
    """Columns e_j - (w_j/w_0) e_0, j >= 1: a basis of zero-mean vectors."""
    w = grid.weights
    n = w.size
    Z = np.zeros((n, n - 1))
    Z[1:, :] = np.eye(n - 1)
    Z[0, :] = -w[1:] / w[0]
    return Z


def restrict_zero_mean(M: np.ndarray, grid: Grid) -> np.ndarray:
    """Matrix of M on the zero-mean subspace in the basis of ``zero_mean_basis``.

    Valid when M maps zero-mean vectors to zero-mean vectors; then the
    coordinates are simply the components 1..N-1.
    """
    w = grid.weights
    return M[1:, 1:] - np.outer(M[1:, 0], w[1:] / w[0])


def reduced_operator_1d(state: State, params: ModelParams, form: str = "conservative") -> np.ndarray:
    """Dense M with beta u~ = M u~, phi~'' taken from the integral reduction."""
    grid = state.grid
    n, h = grid.counts[0], grid.h
    D2 = d2_matrix(n, h).toarray()
    T = linearized_matrix(state, params, form=form)
    vpp = d2potential(state.u.values, params)
    return params.sigma * T + D2 * vpp[None, :] - params.gamma * (D2 @ D2)


def spectrum_1d(point, params: ModelParams | None = None, count: int | None = None,
                form: str = "conservative", shift: float = 1.0) -> Spectrum:
    """Eigenvalues of the 1D linearisation on zero-mean perturbations.

    ``form`` selects the discrete reduction for phi~'' (see
    ``poisson.linearized_matrix``). With ``count`` set, the leading
    eigenvalues come from shift-invert about ``shift`` on the dense reduced
    operator, which resolves near-neutral rates far better than a full
    eigen-decomposition; otherwise the whole spectrum is returned.
    """
    state, params = _state_params(point, params)
    grid = state.grid
    M = reduced_operator_1d(state, params, form)
    Mr = restrict_zero_mean(M, grid)
    size = Mr.shape[0]
    try:
        if count is None or count + 4 >= size - 2:
            beta, vr = la.eig(Mr)
        else:
            lu = la.lu_factor(Mr - shift * np.eye(size))
            op = spla.LinearOperator((size, size), matvec=lambda v: la.lu_solve(lu, v), dtype=float)
            theta, vr = spla.eigs(op, k=count + 4, which="LM", tol=1e-13, maxiter=10000,
                                  v0=np.ones(size))
            beta = shift + 1.0 / theta
    except (la.LinAlgError, spla.ArpackNoConvergence) as exc:
        raise EigenSolverError(str(exc)) from exc
    w = grid.weights
    vecs = np.vstack([-(w[1:] @ vr) / w[0], vr])
    beta, vecs = _sort(beta, vecs, count or beta.size)
    # the excluded mean direction has rate 0 (w^T M = 0)
    if beta[0].real < -STABLE_TOL:
        log.info("leading admissible rate %.3g; the discarded mean mode would sit at 0", beta[0].real)
    return Spectrum(beta, vecs, 0.0, grid)


# --- transverse pencil ------------------------------------------------------------------

def pencil(state: State, params: ModelParams, k_y: float, mean_shift: float = MEAN_SHIFT):
    """Sparse (S, P) for the transverse problem.

    For k_y = 0 two bordering unknowns are added: a Poisson multiplier with
    the gauge row, and the mean of u~, which feeds back with rate
    -mean_shift so the (inadmissible) mean mode sits far left in the spectrum.
    """
    grid = state.grid
    n, h = grid.counts[0], grid.h
    u, phi = state.u.values, state.phi.values
    I = sp.identity(n, format="csr")
    D = d2_matrix(n, h) - k_y**2 * I
    mu = params.permittivity(u)
    S11 = D @ (sp.diags(d2potential(u, params)) - params.gamma * D)
    S12 = params.sigma * D
    S21 = I + flux_du_matrix(phi, params.a, h)
    S22 = flux_matrix(mu, h) - k_y**2 * sp.diags(mu)
    if k_y > 0:
        S = sp.bmat([[S11, S12], [S21, S22]], format="csc")
        P = sp.block_diag([I, sp.csr_matrix((n, n))], format="csc")
        return S, P
    ones = sp.csr_matrix(np.ones((n, 1)))
    g = sp.csr_matrix(gauge_row(grid, state.gauge)[None, :])
    wrow = sp.csr_matrix((grid.weights / grid.volume)[None, :])
    S = sp.bmat([
        [S11, S12, None, -mean_shift * ones],
        [S21, S22, ones, None],
        [None, g, None, None],
        [-wrow, None, None, sp.identity(1)],
    ], format="csc")
    P = sp.block_diag([I, sp.csr_matrix((n + 2, n + 2))], format="csc")
    return S, P


def reduced_transverse(state: State, params: ModelParams, k_y: float) -> np.ndarray:
    """Dense Schur complement of the pencil onto u~ (phi~ eliminated)."""
    S, _ = pencil(state, params, k_y)
    n = state.grid.counts[0]
    S = S.tocsc()
    A = S[:n, :n].toarray()
    B = S[:n, n:]
    C = S[n:, :n]
    E = S[n:, n:]
    X = spla.splu(E.tocsc()).solve(C.toarray())
    return A - (B @ X)


def _residuals(S, P, beta, vecs_full):
    out = []
    for i, b in enumerate(beta):
        w = vecs_full[:, i]
        r = S @ w - b * (P @ w)
        out.append(np.linalg.norm(r) / max(np.linalg.norm(w), 1e-300))
    return np.array(out)


def transverse_spectrum(point, k_y: float, params: ModelParams | None = None, count: int = 6,
                        method: str = "shift-invert", shift: float = 1.0) -> Spectrum:
    """Leading eigenpairs of the transverse pencil at wavenumber k_y.

    ``method="dense"`` solves the full Schur-reduced problem;
    ``"shift-invert"`` finds the ``count`` eigenvalues nearest ``shift``,
    which are the rightmost ones when ``shift`` exceeds every growth rate.
    """
    state, params = _state_params(point, params)
    if k_y < 0:
        raise ValueError("k_y must be non-negative")
    grid = state.grid
    n = grid.counts[0]
    S, P = pencil(state, params, k_y)
    if method == "dense":
        M = reduced_transverse(state, params, k_y)
        if k_y == 0:
            beta, vr = la.eig(restrict_zero_mean(M, grid))
            w = grid.weights
            vecs = np.vstack([-(w[1:] @ vr) / w[0], vr])
        else:
            beta, vecs = la.eig(M)
        beta, vecs = _sort(beta, vecs, count)
        return Spectrum(beta, vecs, float(k_y), grid)
    try:
        lu = spla.splu((S - shift * P).tocsc())
    except RuntimeError as exc:
        raise EigenSolverError(f"singular shifted pencil at k_y={k_y}: {exc}") from exc
    size = S.shape[0]
    op = spla.LinearOperator((size, size), matvec=lambda v: lu.solve(P @ v), dtype=float)
    k = min(count + 4, size - 2)
    try:
        theta, W = spla.eigs(op, k=k, which="LM", tol=1e-13, maxiter=10000,
                             v0=np.concatenate([np.ones(n), np.zeros(size - n)]))
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(f"ARPACK failed at k_y={k_y}") from exc
    keep = np.abs(theta) > 1e-14
    beta = shift + 1.0 / theta[keep]
    W = W[:, keep]
    if k_y == 0:
        # drop the parked mean mode if it ever shows up
        ok = np.abs(beta + MEAN_SHIFT) > 1e-6 * MEAN_SHIFT
        beta, W = beta[ok], W[:, ok]
    order = np.argsort(-beta.real, kind="stable")[:count]
    beta, W = beta[order], W[:, order]
    res = _residuals(S, P, beta, W)
    return Spectrum(beta, W[:n], float(k_y), grid, residuals=res)


def refine_pair(point, k_y: float, beta: complex, vector=None, params: ModelParams | None = None,
                steps: int = 5):
    """Inverse iteration on the pencil about ``beta``; returns (beta, w_full, residual)."""
    state, params = _state_params(point, params)
    S, P = pencil(state, params, k_y)
    size = S.shape[0]
    n = state.grid.counts[0]
    dtype = complex if np.iscomplexobj(beta) and beta.imag != 0 else float
    lu = spla.splu((S - beta * P).tocsc().astype(dtype))
    if vector is None:
        w = np.ones(size, dtype=dtype)
    else:
        w = np.asarray(vector)
        # ARPACK returns complex vectors even for real eigenvalues
        w = (w.real if dtype is float else w).astype(dtype)
    if w.size == n:
        w = np.concatenate([w, np.zeros(size - n, dtype=dtype)])
    for _ in range(steps):
        w = lu.solve(P @ w)
        w /= np.linalg.norm(w)
        Pw = P @ w
        beta = np.vdot(Pw, S @ w) / np.vdot(Pw, Pw)
    r = np.linalg.norm(S @ w - beta * (P @ w))
    return beta, w, r


# --- uniform state check ------------------------------------------------------------------

def uniform_spectrum_reference(grid: Grid, params: ModelParams, k_y: float = 0.0) -> np.ndarray:
    """dispersion at the quantised wavenumbers n pi/L, using the grid's modified wavenumber."""
    n = grid.counts[0]
    k = np.arange(1 if k_y == 0 else 0, n) * np.pi / grid.lengths[0]
    keff = grid.modified_wavenumber(k)
    return np.sort(dispersion(np.sqrt(keff**2 + k_y**2), params))[::-1]


# --- growth curves and classification ---------------------------------------------------------

@dataclass
class GrowthCurve:
    k_y: np.ndarray
    beta_max: np.ndarray
    vectors: np.ndarray       # leading u~ at each k_y (columns)
    state: State = field(repr=False, default=None)

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.beta_max))

    @property
    def k_max(self) -> float:
        return float(self.k_y[self.argmax])


def growth_curve(point, k_values: Sequence[float], params: ModelParams | None = None,
                 method: str = "shift-invert") -> GrowthCurve:
    state, params = _state_params(point, params)
    ks = np.asarray(k_values, dtype=float)
    bmax, vecs = [], []
    for k in ks:
        spec = transverse_spectrum(state, float(k), params, count=3, method=method)
        bmax.append(spec.beta[0].real)
        vecs.append(spec.vectors[:, 0])
    return GrowthCurve(ks, np.array(bmax), np.array(vecs).T, state)


def localization(vector, state: State, frac: float = 0.5):
    """(edge, interior) fractions of the eigenfunction's L2 mass.

    Edge: within one peak spacing of the outermost peaks of u_L. Interior:
    between those two edge zones.
    """
    grid = state.grid
    x = grid.x
    u = state.u.values
    pos = peak_positions(u, x, frac)
    if pos.size < 2:
        return float("nan"), float("nan")
    spacing = measured_period(state, frac)
    left, right = pos[0], pos[-1]
    dens = np.abs(vector) ** 2
    total = grid.integrate(dens)
    edge_mask = (np.abs(x - left) <= spacing) | (np.abs(x - right) <= spacing)
    interior_mask = (x > left + spacing) & (x < right - spacing)
    return (float(grid.integrate(dens * edge_mask) / total),
            float(grid.integrate(dens * interior_mask) / total))


def classify_mode(curve: GrowthCurve, state: State | None = None, edge_threshold: float = 0.6,
                  interior_threshold: float = 0.6, tol: float = STABLE_TOL) -> ModeClass:
    """Body, wall or localized-body from the growth curve and leading eigenfunction.

    Body: the largest growth sits at the smallest sampled k_y (long wave).
    Otherwise the eigenfunction at the maximum decides: wall if edge
    concentrated, localized-body if interior concentrated, else ambiguous.
    """
    state = state if state is not None else curve.state
    i = curve.argmax
    bmax = float(curve.beta_max[i])
    positive = curve.k_y > 0
    small = float(curve.beta_max[positive][0]) if positive.any() else float("nan")
    edge, interior = localization(curve.vectors[:, i], state)
    diag = {"argmax_index": i}
    if bmax < tol:
        label = "stable"
    elif i == int(np.flatnonzero(positive)[0]) if positive.any() else False:
        label = "body"
    elif edge > edge_threshold:
        label = "wall"
    elif interior > interior_threshold:
        label = "localized-body"
    else:
        label = "ambiguous"
    return ModeClass(label, float(curve.k_y[i]), bmax, edge, interior, small, diag)


def critical_Ly(curve: GrowthCurve, tol: float = STABLE_TOL) -> float:
    """Largest L_y below which every quantised mode n pi/L_y (n >= 1) is stable.

    For L_y < pi / k_sup, with k_sup the largest unstable sampled k_y, every
    admissible mode lies beyond the unstable set. Infinity when nothing grows.
    """
    unstable = curve.k_y[(curve.beta_max > tol) & (curve.k_y > 0)]
    if unstable.size == 0:
        return float("inf")
    return float(np.pi / unstable.max())


# --- branch annotation -----------------------------------------------------------------------

def annotate_branch(branch: Branch, count: int = 3, method: str = "shift-invert") -> Branch:
    """Fill stability verdict and leading growth rate on every branch point."""
    for pt in branch.points:
        spec = transverse_spectrum(pt, 0.0, count=count) if method == "shift-invert" \
            else spectrum_1d(pt, count=count)
        pt.leading = float(spec.beta[0].real)
        pt.stability = spec.verdict()
    return branch


def segment_verdicts(branch: Branch):
    """Majority verdict on each stretch between consecutive folds."""
    out, current = [], []
    for pt in branch.points:
        if pt.fold:
            out.append(current)
            current = []
            continue
        if pt.stability is not None:
            current.append(pt.stability)
    out.append(current)
    verdicts = []
    for seg in out:
        if not seg:
            verdicts.append(None)
        else:
            verdicts.append(max(set(seg), key=seg.count))
    return verdicts


def stripe_at(branch: Branch, gamma: float, segment: int) -> BranchPoint:
    """Converged state at ``gamma`` on the stretch after fold ``segment`` (1-based).

    ``segment=5`` selects the part of the branch between folds 5 and 6.
    """
    folds = [i for i, p in enumerate(branch.points) if p.fold]
    if len(folds) < segment:
        raise ValueError(f"branch has only {len(folds)} folds")
    lo = folds[segment - 1]
    hi = folds[segment] if len(folds) > segment else len(branch.points) - 1
    pts = branch.points[lo:hi + 1]
    vals = np.array([p.value for p in pts])
    for a, b in zip(range(len(pts) - 1), range(1, len(pts))):
        if (vals[a] - gamma) * (vals[b] - gamma) <= 0:
            s = (gamma - vals[a]) / (vals[b] - vals[a]) if vals[b] != vals[a] else 0.0
            y0 = (1 - s) * pts[a].y + s * pts[b].y
            prob = branch.problem.with_value(gamma)
            y, _ = newton(prob, y0)
            return make_point(prob, y, gamma)
    raise ValueError(f"gamma={gamma} outside the segment range [{vals.min():.5g}, {vals.max():.5g}]")


@dataclass
class InstabilityMap:
    gammas: np.ndarray
    masses: np.ndarray
    labels: np.ndarray        # object array [m, gamma]
    region: np.ndarray        # snaking (gamma_1, gamma_2) per m


def instability_map(gammas, masses, base: ModelParams, k_values, segment: int = 5,
                    n: int = 512, length: float | None = None, branch_factory=None) -> InstabilityMap:
    """Mode labels on a (gamma, m) grid for stripes on the L_0 segment after fold ``segment``.

    Cells outside the segment's gamma range are marked "outside".
    """
    from .continuation import localized_branch, snaking_region, Controls, ContinuationError

    gammas = np.asarray(gammas, dtype=float)
    masses = np.asarray(masses, dtype=float)
    labels = np.empty((masses.size, gammas.size), dtype=object)
    region = np.full((masses.size, 2), np.nan)
    for i, m in enumerate(masses):
        p = base.with_(m=float(m))
        try:
            if branch_factory is not None:
                br = branch_factory(p)
            else:
                br = localized_branch(p, 0.0, length, n, Controls(ds=0.02, ds_max=0.3, max_steps=3000))
            region[i] = snaking_region(p, branches=[br])
        except (ContinuationError, ValueError) as exc:
            log.warning("m=%.4g: no branch (%s)", m, exc)
            labels[i, :] = "incomplete"
            continue
        for j, g in enumerate(gammas):
            try:
                pt = stripe_at(br, float(g), segment)
            except ValueError:
                labels[i, j] = "outside"
                continue
            try:
                labels[i, j] = classify_mode(growth_curve(pt, k_values)).label
            except (EigenSolverError, RuntimeError) as exc:
                log.warning("cell (m=%.4g, gamma=%.4g) failed: %s", m, g, exc)
                labels[i, j] = "incomplete"
    return InstabilityMap(gammas, masses, labels, region)
