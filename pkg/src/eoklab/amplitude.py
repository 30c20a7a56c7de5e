"""Weakly nonlinear layer: cubic coefficient, ansatz families, Eckhaus and zigzag bands."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid, ModelParams, ScalarField
from .linear import OnsetData, critical_onset

DEGENERATE_F = 1e-10


class FamilyNotFound(ValueError):
    """Negative radicand: the requested solution family does not exist."""


@dataclass(frozen=True)
class AmplitudeData:
    onset: OnsetData
    f: float
    gamma_hat: float
    criticality: str

    @property
    def k_c(self) -> float:
        return self.onset.k_c

    @property
    def gamma_c(self) -> float:
        return self.onset.gamma_c

    @property
    def eta(self) -> float:
        return self.onset.eta


def cubic_coefficient(params: ModelParams) -> float:
    """Coefficient f of |A|^2 A in the amplitude equation."""
    a, m, t = params.a, params.m, params.tau
    eta = params.eta
    if eta <= 0:
        raise ValueError("cubic coefficient requires eta > 0")
    poly = (
        198 * a**2 * m**4
        - 108 * a**2 * m**3 * t
        - 3 * a**2 * m**2
        - 18 * a**2 * m * t
        + 468 * a * m**3
        - 318 * a * m**2 * t
        + 36 * a * m * t**2
        - 5 * a**2
        - 60 * a * m
        + 2 * a * t
        + 225 * m**2
        - 150 * m * t
        + 16 * t**2
        - 27
    )
    return 2 * params.sigma / (9 * eta**2 * params.mu0**3) * poly


def criticality(f: float) -> str:
    if abs(f) < DEGENERATE_F:
        return "degenerate"
    return "subcritical" if f > 0 else "supercritical"


def amplitude_data(params: ModelParams) -> AmplitudeData:
    onset = critical_onset(params)
    f = cubic_coefficient(params)
    return AmplitudeData(
        onset=onset,
        f=f,
        gamma_hat=float(np.sign(onset.gamma_c - params.gamma)),
        criticality=criticality(f),
    )


def tricritical_mass(params: ModelParams, bracket=(0.0, 0.57)) -> float:
    """Mass at which f changes sign (other parameters fixed)."""
    from scipy.optimize import brentq

    return brentq(lambda m: cubic_coefficient(params.with_(m=m)), *bracket, xtol=1e-14)


def _radicand_check(value: float, family: str) -> float:
    if value < -1e-15:
        raise FamilyNotFound(f"{family} does not exist here (radicand {value:.3g} < 0)")
    return max(value, 0.0)


def _amplitude_for(data: AmplitudeData, gamma: float):
    if data.criticality == "degenerate":
        raise FamilyNotFound("f = 0: cubic truncation degenerate")
    return data.gamma_c - gamma


def ansatz_uniform(data: AmplitudeData, gamma: float, grid: Grid, psi: float = 0.0) -> ScalarField:
    """Periodic state at the critical wavenumber, 2 k_c^2 sqrt((gamma_c-gamma)/(-f)) cos(k_c x + psi)."""
    d = _amplitude_for(data, gamma)
    r = _radicand_check(d / (-data.f), "uniform-amplitude (periodic) family")
    x = grid.mesh()[0]
    return ScalarField(grid, 2 * np.sqrt(r) * data.k_c**2 * np.cos(data.k_c * x + psi))


def ansatz_modulated(data: AmplitudeData, gamma: float, grid: Grid, Q: float,
                     psi: float = 0.0) -> ScalarField:
    """Detuned periodic state with wavenumber k_c + sqrt(eps) Q."""
    d = _amplitude_for(data, gamma)
    eps = abs(d)
    gh = np.sign(d)
    r = _radicand_check((2 * data.eta * Q**2 - gh * data.k_c**4) / data.f, "modulated family")
    x = grid.mesh()[0]
    k = data.k_c + np.sqrt(eps) * Q
    return ScalarField(grid, 2 * np.sqrt(eps) * np.sqrt(r) * np.cos(k * x + psi))


def localized_envelope(data: AmplitudeData, gamma: float):
    """(peak amplitude, sech rate) of the localized family."""
    d = gamma - data.gamma_c
    if data.criticality != "subcritical":
        raise FamilyNotFound("localized family requires f > 0")
    if d < 0:
        raise FamilyNotFound("localized family requires gamma > gamma_c")
    amp = 2 * np.sqrt(d) * np.sqrt(2 * data.k_c**4 / data.f)
    rate = np.sqrt(d) * np.sqrt(data.k_c**4 / (2 * data.eta))
    return float(amp), float(rate)


def ansatz_localized(data: AmplitudeData, gamma: float, grid: Grid, psi: float = 0.0,
                     center: float | None = None) -> ScalarField:
    """Sech-modulated wavetrain centred on the domain midpoint (psi in {0, pi})."""
    if not (np.isclose(psi, 0.0) or np.isclose(psi, np.pi)):
        raise ValueError("localized seeds use psi = 0 or psi = pi")
    amp, rate = localized_envelope(data, gamma)
    x = grid.mesh()[0]
    xc = grid.lengths[0] / 2 if center is None else center
    xh = x - xc
    return ScalarField(grid, amp / np.cosh(rate * xh) * np.cos(data.k_c * xh + psi))


# --- Eckhaus ---------------------------------------------------------------

def eckhaus_matrix(Q: float, k: float, data: AmplitudeData) -> np.ndarray:
    K = data.gamma_hat * data.k_c**4
    eta = data.eta
    off = -K + 2 * eta * Q**2
    return np.array([
        [-K - 2 * eta * (Q + k) ** 2 + 4 * eta * Q**2, off],
        [off, -K - 2 * eta * (Q - k) ** 2 + 4 * eta * Q**2],
    ])


def eckhaus_eigenvalues(Q, k, data: AmplitudeData):
    """Closed-form (lambda_0, lambda_k^+, lambda_k^-)."""
    Q = np.asarray(Q, dtype=float)
    k = np.asarray(k, dtype=float)
    K = data.gamma_hat * data.k_c**4
    eta = data.eta
    lam0 = 2 * (2 * eta * Q**2 - K)
    base = 2 * eta * Q**2 - K - 2 * eta * k**2
    root = np.sqrt((K - 2 * eta * Q**2) ** 2 + 16 * eta**2 * Q**2 * k**2)
    return lam0, base + root, base - root


def eckhaus_unstable(Q, data: AmplitudeData):
    """Q^2 < gamma_hat k_c^4/(2 eta) < 3 Q^2 (supercritical stripes)."""
    Q2 = np.asarray(Q, dtype=float) ** 2
    edge = data.gamma_hat * data.k_c**4 / (2 * data.eta)
    return (Q2 < edge) & (edge < 3 * Q2)


def eckhaus_unstable_range(Q, data: AmplitudeData):
    """Upper bound of |k| for growing Eckhaus modes (0 where none)."""
    Q2 = np.asarray(Q, dtype=float) ** 2
    val = 6 * Q2 - data.gamma_hat * data.k_c**4 / data.eta
    return np.sqrt(np.clip(val, 0.0, None))


def eckhaus_boundaries(data: AmplitudeData):
    """Q^2 of the existence edge and of the Eckhaus edge."""
    K = data.gamma_hat * data.k_c**4
    return K / (2 * data.eta), K / (6 * data.eta)


# --- zigzag ----------------------------------------------------------------

def zigzag_matrix(Q: float, l: float, data: AmplitudeData) -> np.ndarray:
    K = data.gamma_hat * data.k_c**4
    eta, gc = data.eta, data.gamma_c
    d = 2 * eta * Q**2 - 2 * np.sqrt(2 * eta * gc) * Q * l**2 - gc * l**4 - K
    off = -K + 2 * eta * Q**2
    return np.array([[d, off], [off, d]])


def zigzag_eigenvalues(Q, l, data: AmplitudeData):
    Q = np.asarray(Q, dtype=float)
    l = np.asarray(l, dtype=float)
    K = data.gamma_hat * data.k_c**4
    eta, gc = data.eta, data.gamma_c
    lam1 = -(l**4) * gc - 2 * Q * l**2 * np.sqrt(2 * eta * gc)
    lam2 = lam1 + 2 * (-K + 2 * eta * Q**2)
    return lam1, lam2


def zigzag_unstable(Q, l, data: AmplitudeData):
    Q = np.asarray(Q, dtype=float)
    l = np.asarray(l, dtype=float)
    return (l != 0) & (l**2 < -2 * np.sqrt(2 * data.eta) * Q / np.sqrt(data.gamma_c))
