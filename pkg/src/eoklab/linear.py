"""Linear theory about the uniform state: dispersion, onset and spatial eigenvalues."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelParams


class NoOnsetError(ValueError):
    """Raised when eta <= 0, i.e. no finite-wavenumber onset exists."""


@dataclass(frozen=True)
class OnsetData:
    gamma_c: float
    k_c: float
    eta: float


REGIMES = ("two-imaginary-pairs", "double-imaginary", "complex-quartet")


@dataclass(frozen=True)
class SpatialEigenvalues:
    s_values: np.ndarray  # four nontrivial roots; the two trivial zeros are implicit
    regime: str
    trivial: tuple = (0.0, 0.0)


def dispersion(k, params: ModelParams):
    """Growth rate eta k^2 - gamma k^4 - sigma/(am+1); finite at k = 0."""
    k = np.asarray(k, dtype=float)
    return params.eta * k**2 - params.gamma * k**4 - params.sigma / params.mu0


def dispersion_slope(k, params: ModelParams):
    k = np.asarray(k, dtype=float)
    return 2 * params.eta * k - 4 * params.gamma * k**3


def critical_onset(params: ModelParams, check_tol: float = 1e-10) -> OnsetData:
    """Critical gamma and wavenumber; gamma in ``params`` is ignored."""
    eta = params.eta
    if eta <= 0:
        raise NoOnsetError(f"eta = {eta:.6g} must be positive for a finite-wavenumber onset")
    if params.mu0 <= 0:
        raise NoOnsetError("a*m + 1 must be positive")
    gamma_c = params.mu0 * eta**2 / (4 * params.sigma)
    k_c = np.sqrt(eta / (2 * gamma_c))
    at_onset = params.with_(gamma=gamma_c)
    lam = float(dispersion(k_c, at_onset))
    slope = float(dispersion_slope(k_c, at_onset))
    if abs(lam) > check_tol or abs(slope) > check_tol:
        raise ArithmeticError(f"onset self-check failed: lambda={lam:.3g}, dlambda/dk={slope:.3g}")
    return OnsetData(gamma_c=float(gamma_c), k_c=float(k_c), eta=float(eta))


def growth_band(params: ModelParams):
    """Roots (k_min, k_max) of lambda(k) = 0 around k_c for gamma <= gamma_c."""
    onset = critical_onset(params)
    g = params.gamma
    if g > onset.gamma_c * (1 + 1e-14):
        raise ValueError(f"empty growth band: gamma={g} exceeds gamma_c={onset.gamma_c}")
    eta = params.eta
    c = params.sigma / params.mu0
    # gamma K^2 - eta K + c = 0 in K = k^2; clip a tiny negative discriminant at onset
    disc = max(eta**2 - 4 * g * c, 0.0)
    root = np.sqrt(disc)
    k2_min = 2 * c / (eta + root)  # stable form of (eta - root)/(2 gamma)
    k2_max = (eta + root) / (2 * g)
    return float(np.sqrt(k2_min)), float(np.sqrt(k2_max))


def spatial_discriminant(params: ModelParams) -> float:
    return params.eta**2 - 4 * params.sigma * params.gamma / params.mu0


def spatial_eigenvalues(params: ModelParams, rel_tol: float = 1e-12) -> SpatialEigenvalues:
    """Nontrivial roots of gamma s^4 + eta s^2 + sigma/(am+1) = 0."""
    g = params.gamma
    if g <= 0:
        raise ValueError("gamma must be positive")
    eta = params.eta
    disc = spatial_discriminant(params)
    sq = np.sqrt(complex(disc))
    s2 = np.array([(-eta + sq) / (2 * g), (-eta - sq) / (2 * g)])
    roots = np.sqrt(s2.astype(complex))
    s = np.concatenate([roots, -roots])
    if abs(disc) < rel_tol * eta**2:
        regime = "double-imaginary"
    elif disc > 0:
        regime = "two-imaginary-pairs" if eta > 0 else "complex-quartet"
    else:
        regime = "complex-quartet"
    order = np.lexsort((s.imag, s.real))
    return SpatialEigenvalues(s_values=s[order], regime=regime)


def characteristic_residual(s, params: ModelParams):
    s = np.asarray(s, dtype=complex)
    return params.gamma * s**4 + params.eta * s**2 + params.sigma / params.mu0


def hopf_asymptotics(params: ModelParams, eps: float):
    """Leading-order (Re s, Im s) of the quartet for gamma = gamma_c + eps, eps > 0 small.

    Expanding the quartic about the double root gives
    Re s ~ sqrt(sigma eps/(am+1)) / sqrt(2 gamma_c eta) and Im s ~ k_c.
    """
    onset = critical_onset(params)
    re = np.sqrt(params.sigma * eps / params.mu0) / np.sqrt(2 * onset.gamma_c * onset.eta)
    return float(re), onset.k_c
