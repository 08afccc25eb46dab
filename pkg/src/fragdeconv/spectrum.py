"""Complex-valued functions sampled on a symmetric frequency grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray


class GridMismatchError(ValueError):
    """Two spectra live on different frequency grids."""


def symmetric_xi_grid(xi_max: float = 50.0, dxi: float = 0.05) -> NDArray[np.float64]:
    """Uniform grid on ``[-xi_max, xi_max]`` with step ``dxi`` that contains 0."""
    if dxi <= 0 or xi_max <= 0:
        raise ValueError("xi_max and dxi must be positive")
    k = int(round(xi_max / dxi))
    if abs(k * dxi - xi_max) > 1e-9 * xi_max:
        raise ValueError(f"xi_max={xi_max} is not a multiple of dxi={dxi}")
    return dxi * np.arange(-k, k + 1, dtype=float)


@dataclass(frozen=True, eq=False)
class SpectrumGrid:
    """Values of a Fourier transform on a symmetric uniform grid."""

    xi: NDArray[np.float64]
    values: NDArray[np.complex128]

    def __post_init__(self) -> None:
        xi = np.asarray(self.xi, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if xi.ndim != 1 or xi.shape != vals.shape:
            raise ValueError("xi and values must be 1-d arrays of equal length")
        if xi.size % 2 != 1 or xi[xi.size // 2] != 0.0:
            raise ValueError("xi grid must be symmetric with an odd number of points and contain 0")
        if not np.allclose(xi, -xi[::-1], rtol=0, atol=1e-12 * max(1.0, abs(xi[-1]))):
            raise ValueError("xi grid is not symmetric about 0")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "values", vals)

    @property
    def step(self) -> float:
        return float(self.xi[1] - self.xi[0]) if self.xi.size > 1 else 0.0

    @property
    def xi_max(self) -> float:
        return float(self.xi[-1])

    def hermitian_error(self) -> float:
        """``max |f(-xi) - conj f(xi)|``; zero for transforms of real functions."""
        return float(np.max(np.abs(self.values[::-1] - np.conj(self.values))))

    def check_same_grid(self, other: "SpectrumGrid") -> None:
        if self.xi.shape != other.xi.shape or not np.array_equal(self.xi, other.xi):
            raise GridMismatchError("spectra are defined on different xi grids")

    def restrict(self, cutoff: float) -> "SpectrumGrid":
        """Copy with values zeroed outside ``|xi| <= cutoff``."""
        vals = np.where(np.abs(self.xi) <= cutoff * (1 + 1e-12), self.values, 0.0)
        return SpectrumGrid(self.xi, vals)

    def __mul__(self, other):
        if isinstance(other, SpectrumGrid):
            self.check_same_grid(other)
            return SpectrumGrid(self.xi, self.values * other.values)
        return SpectrumGrid(self.xi, self.values * other)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, SpectrumGrid):
            self.check_same_grid(other)
            return SpectrumGrid(self.xi, self.values + other.values)
        return SpectrumGrid(self.xi, self.values + other)

    def __sub__(self, other):
        if isinstance(other, SpectrumGrid):
            self.check_same_grid(other)
            return SpectrumGrid(self.xi, self.values - other.values)
        return SpectrumGrid(self.xi, self.values - other)


def trapezoid_weights(n: int, step: float) -> NDArray[np.float64]:
    w = np.full(n, step, dtype=float)
    if n > 1:
        w[0] = w[-1] = 0.5 * step
    return w
