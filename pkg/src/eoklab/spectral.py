"""Even-reflection cosine transforms on vertex-centred Neumann grids (DCT-I)."""
from __future__ import annotations

import numpy as np
from scipy import fft

from .core import Grid


def forward(values: np.ndarray) -> np.ndarray:
    return fft.dctn(values, type=1)


def inverse(coeffs: np.ndarray) -> np.ndarray:
    return fft.idctn(coeffs, type=1)


def k_squared(grid: Grid) -> np.ndarray:
    """|k|^2 of every cosine mode, shaped like a field."""
    ks = [grid.cosine_wavenumbers(i) ** 2 for i in range(grid.dimension)]
    if grid.dimension == 1:
        return ks[0]
    return np.add.outer(ks[0], ks[1])


def laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    return inverse(-k_squared(grid) * forward(values))


def _axis_derivative_even_to_odd(values, grid: Grid, axis: int):
    """d/dx of a cosine series, sampled at interior nodes as a sine series."""
    n = grid.counts[axis]
    c = fft.dct(values, type=1, axis=axis) / (n - 1)
    k = grid.cosine_wavenumbers(axis)
    shape = [1] * values.ndim
    shape[axis] = n
    s = -(k.reshape(shape) * c)
    s = np.take(s, np.arange(1, n - 1), axis=axis)
    # sin(pi k j/(N-1)) summed over k = 1..N-2 at interior nodes j
    d = fft.idst(s, type=1, axis=axis) * (n - 1)
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    return np.pad(d, pad)


def _axis_derivative_odd_to_even(values, grid: Grid, axis: int):
    """d/dx of a sine series (zero at end nodes) returned on all nodes."""
    n = grid.counts[axis]
    interior = np.take(values, np.arange(1, n - 1), axis=axis)
    s = fft.dst(interior, type=1, axis=axis) / (n - 1)
    k = grid.cosine_wavenumbers(axis)[1 : n - 1]
    shape = [1] * values.ndim
    shape[axis] = n - 2
    c = k.reshape(shape) * s
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    c = np.pad(c, pad)
    # cosine coefficients -> node values; DCT-I inverse scaling
    return fft.idct(c * (n - 1), type=1, axis=axis)


def divergence_mu_grad(phi: np.ndarray, mu: np.ndarray, grid: Grid) -> np.ndarray:
    """Pseudo-spectral div(mu grad phi) with Neumann-compatible parity."""
    out = np.zeros(np.shape(phi))
    for axis in range(grid.dimension):
        g = _axis_derivative_even_to_odd(phi, grid, axis)
        out += _axis_derivative_odd_to_even(mu * g, grid, axis)
    return out
