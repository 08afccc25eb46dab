"""Fourier deconvolution estimator of the division kernel.

With ``U = log X`` the stationary equation becomes, in the Fourier domain,

    g*(xi) = alpha D*(xi) / (2R M*(xi)) + 1,

where ``M`` is the density of ``U`` and ``D(u) = e^u N'(e^u)``.  Both spectra
have unbiased empirical versions, so ``g*`` can be estimated by plugging them
in, regularizing ``1/M*`` by truncation and smoothing with a sinc kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .spectrum import SpectrumGrid, trapezoid_weights

_CHUNK = 4096


class ConfigError(ValueError):
    """Invalid estimator configuration."""


class HermitianError(ValueError):
    """A spectrum that should be Hermitian is not."""


@dataclass(frozen=True, eq=False)
class SizeSample:
    """Observed sizes ``X_i > 0`` and their logarithms."""

    values: NDArray[np.float64]
    log_values: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        x = np.asarray(self.values, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("sample must contain at least one observation")
        if not np.all(np.isfinite(x)) or np.any(x <= 0):
            raise ValueError("sample values must be finite and strictly positive")
        object.__setattr__(self, "values", x)
        object.__setattr__(self, "log_values", np.log(x))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def subset(self, idx: ArrayLike) -> "SizeSample":
        return SizeSample(self.values[np.asarray(idx)])


@dataclass(frozen=True)
class EstimatorConfig:
    """Model constants, bandwidth and grids for one estimate."""

    alpha: float = 0.7
    rate_R: float = 1.0
    ell: float = 0.3
    xi_max: float = 50.0
    dxi: float = 0.05
    u_min: float = -12.0
    n_u: int = 2048

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ConfigError(f"estimator: alpha must be > 0, got {self.alpha}")
        if not self.rate_R > 0:
            raise ConfigError(f"estimator: rate_R must be > 0, got {self.rate_R}")
        if not self.ell > 0:
            raise ConfigError(f"estimator: bandwidth ell must be > 0, got {self.ell}")
        if not (self.dxi > 0 and self.xi_max > 0):
            raise ConfigError("estimator: xi_max and dxi must be > 0")
        if 1.0 / self.ell > self.xi_max * (1 + 1e-12):
            raise ConfigError(
                f"estimator: sinc cutoff 1/ell = {1 / self.ell:.4g} exceeds xi_max = {self.xi_max}"
            )
        if self.u_min > -10:
            raise ConfigError(f"estimator: u_min must be <= -10, got {self.u_min}")
        if self.n_u < 2:
            raise ConfigError("estimator: n_u must be >= 2")

    @property
    def cutoff(self) -> float:
        return 1.0 / self.ell

    def xi_grid(self) -> NDArray[np.float64]:
        """Symmetric grid whose step divides the cutoff, so ``+-1/ell`` are nodes."""
        c = self.cutoff
        m = max(1, int(math.ceil(c / self.dxi - 1e-9)))
        step = c / m
        k = int(math.ceil(self.xi_max / step - 1e-9))
        return step * np.arange(-k, k + 1, dtype=float)

    def u_grid(self) -> NDArray[np.float64]:
        return np.linspace(self.u_min, 0.0, self.n_u)


# ---------------------------------------------------------------------------
# empirical spectra


def ecf_sums(
    log_values: NDArray[np.float64], xi: NDArray[np.float64], weights: NDArray[np.float64] | None = None
) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """Weighted sums ``sum_j w_j e^{i xi U_j}`` and ``sum_j w_j e^{(i xi - 1) U_j}``.

    ``weights`` has shape ``(n,)`` or ``(n, k)``; the outputs have shape
    ``(len(xi),)`` or ``(len(xi), k)`` accordingly.
    """
    U = np.asarray(log_values, dtype=float)
    xi = np.asarray(xi, dtype=float)
    w = np.ones(U.size) if weights is None else np.asarray(weights, dtype=float)
    squeeze = w.ndim == 1
    w2 = w.reshape(U.size, -1)
    sm = np.zeros((xi.size, w2.shape[1]), dtype=complex)
    sd = np.zeros_like(sm)
    for s in range(0, U.size, _CHUNK):
        u = U[s:s + _CHUNK]
        ph = np.exp(1j * np.outer(xi, u))
        ws = w2[s:s + _CHUNK]
        sm += ph @ ws
        sd += ph @ (ws * np.exp(-u)[:, None])
    if squeeze:
        return sm[:, 0], sd[:, 0]
    return sm, sd


def _half_to_full(xi: NDArray, half_vals: NDArray) -> NDArray:
    return np.concatenate([np.conj(half_vals[:0:-1]), half_vals])


def _split_grid(xi: ArrayLike) -> NDArray:
    xi = np.asarray(xi, dtype=float)
    k0 = xi.size // 2
    if xi.size % 2 != 1 or xi[k0] != 0.0:
        raise ValueError("xi grid must be symmetric and contain 0")
    return xi[k0:]


def empirical_M_star(sample: SizeSample, xi_grid: ArrayLike) -> SpectrumGrid:
    """``(1/n) sum_j e^{i xi U_j}``."""
    xi = np.asarray(xi_grid, dtype=float)
    half = _split_grid(xi)
    sm, _ = ecf_sums(sample.log_values, half)
    return SpectrumGrid(xi, _half_to_full(xi, sm / sample.n))


def empirical_frakD_star(sample: SizeSample, xi_grid: ArrayLike) -> SpectrumGrid:
    """``(1/n) sum_j e^{(i xi - 1) U_j}``; the derivative spectrum without its ``-i xi`` factor."""
    xi = np.asarray(xi_grid, dtype=float)
    half = _split_grid(xi)
    _, sd = ecf_sums(sample.log_values, half)
    return SpectrumGrid(xi, _half_to_full(xi, sd / sample.n))


def empirical_D_star(sample: SizeSample, xi_grid: ArrayLike) -> SpectrumGrid:
    """``(-i xi)(1/n) sum_j e^{(i xi - 1) U_j}``."""
    fd = empirical_frakD_star(sample, xi_grid)
    return SpectrumGrid(fd.xi, -1j * fd.xi * fd.values)


def truncation_threshold(n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(n) ** -0.5


def truncated_inverse_values(m: NDArray[np.complex128], n: int) -> NDArray[np.complex128]:
    thr = truncation_threshold(n)
    keep = np.abs(m) >= thr
    out = np.zeros_like(m, dtype=complex)
    out[keep] = 1.0 / m[keep]
    return out


def truncated_inverse(Mhat: SpectrumGrid, n: int) -> SpectrumGrid:
    """``1/M̂*`` where ``|M̂*| >= n^{-1/2}`` and 0 elsewhere."""
    return SpectrumGrid(Mhat.xi, truncated_inverse_values(Mhat.values, n))


def raw_g_star_values(alpha, rate_R, xi, m, frak_d, n: int | None) -> NDArray[np.complex128]:
    """``alpha D / (2R) * inv(M) + 1`` before smoothing; ``n=None`` uses the plain inverse."""
    inv = 1.0 / m if n is None else truncated_inverse_values(m, n)
    return alpha * (-1j * xi) * frak_d * inv / (2.0 * rate_R) + 1.0


def g_hat_star(config: EstimatorConfig, Mhat: SpectrumGrid, Dhat: SpectrumGrid, n: int | None) -> SpectrumGrid:
    """Sinc-smoothed estimate ``K*(ell xi)(alpha D̂* inv(M̂*) / (2R) + 1)``.

    ``Dhat`` is the derivative spectrum (with its ``-i xi`` factor).  Pass
    ``n=None`` to use the exact inverse, e.g. with true spectra.
    """
    Mhat.check_same_grid(Dhat)
    xi = Mhat.xi
    if config.cutoff > xi[-1] * (1 + 1e-12):
        raise ConfigError(f"estimator: sinc cutoff 1/ell = {config.cutoff:.4g} exceeds grid max {xi[-1]:.4g}")
    inv = 1.0 / Mhat.values if n is None else truncated_inverse_values(Mhat.values, n)
    inside = np.abs(xi) <= config.cutoff * (1 + 1e-12)
    vals = np.zeros(xi.size, dtype=complex)
    vals[inside] = config.alpha * Dhat.values[inside] * inv[inside] / (2.0 * config.rate_R) + 1.0
    return SpectrumGrid(xi, vals)


def _cutoff_weights(xi: NDArray, cutoff: float | None) -> NDArray:
    step = xi[1] - xi[0]
    if cutoff is None:
        return trapezoid_weights(xi.size, step)
    inside = np.abs(xi) <= cutoff * (1 + 1e-12)
    w = np.where(inside, step, 0.0)
    idx = np.flatnonzero(inside)
    if idx.size:
        w[idx[0]] *= 0.5
        w[idx[-1]] *= 0.5
    return w


def invert_to_g(ghat_star: SpectrumGrid, u_grid: ArrayLike, cutoff: float | None = None,
                herm_tol: float = 1e-8) -> NDArray[np.float64]:
    """``(1/2pi) int ghat*(xi) e^{-i u xi} dxi`` by the trapezoid rule.

    With ``cutoff`` the rule runs over ``[-cutoff, cutoff]`` (endpoints
    halved); otherwise over the whole grid.
    """
    herr = ghat_star.hermitian_error()
    if herr > herm_tol:
        raise HermitianError(f"spectrum is not Hermitian (asymmetry {herr:.3e})")
    u = np.asarray(u_grid, dtype=float)
    xi = ghat_star.xi
    w = _cutoff_weights(xi, cutoff) * ghat_star.values
    nz = np.flatnonzero(w != 0)
    out = np.zeros(u.size, dtype=complex)
    for s in range(0, u.size, 512):
        ph = np.exp(-1j * np.outer(u[s:s + 512], xi[nz]))
        out[s:s + 512] = ph @ w[nz]
    out /= 2.0 * np.pi
    scale = max(1.0, float(np.max(np.abs(out.real)))) if out.size else 1.0
    if out.size and np.max(np.abs(out.imag)) > herm_tol * scale:
        raise HermitianError(f"inverse transform has imaginary residue {np.max(np.abs(out.imag)):.3e}")
    return out.real.copy()


def h_hat(ghat: ArrayLike, u_grid: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
    """``x^{-1} ĝ(log x)`` with linear interpolation in ``u``; 0 left of the grid."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(x >= 1):
        raise ValueError("h_hat is defined for x in (0, 1) only")
    g = np.interp(np.log(x), np.asarray(u_grid, dtype=float), np.asarray(ghat, dtype=float), left=0.0)
    return g / x


def symmetrize(hhat: ArrayLike, x_grid: ArrayLike, tol: float = 1e-12) -> NDArray[np.float64]:
    """``(ĥ(x) + ĥ(1 - x)) / 2`` on a grid symmetric about 1/2."""
    x = np.asarray(x_grid, dtype=float)
    h = np.asarray(hhat, dtype=float)
    if x.shape != h.shape:
        raise ValueError("hhat and x_grid must have the same shape")
    if np.max(np.abs(x + x[::-1] - 1.0)) > tol:
        raise ValueError("x_grid is not symmetric about 1/2")
    return 0.5 * (h + h[::-1])


def default_x_grid(m: int = 999) -> NDArray[np.float64]:
    """Symmetric grid ``k/(m+1)``, ``k = 1..m``, on (0, 1)."""
    return np.arange(1, m + 1) / (m + 1.0)


@dataclass(frozen=True, eq=False)
class Estimate:
    """Output of :func:`estimate`."""

    config: EstimatorConfig
    n: int
    ghat_star: SpectrumGrid = field(repr=False)
    u_grid: NDArray[np.float64] = field(repr=False)
    g_hat: NDArray[np.float64] = field(repr=False)
    x_grid: NDArray[np.float64] = field(repr=False)
    h_hat: NDArray[np.float64] = field(repr=False)
    h_hat_sym: NDArray[np.float64] = field(repr=False)
    leakage: float = 0.0


def leakage_mass(ghat_star: SpectrumGrid, cutoff: float, u_max: float = 12.0, n_u: int = 2048) -> float:
    """``int_0^{u_max} |ĝ(u)| du``: smoothing mass leaked onto the positive half line."""
    up = np.linspace(0.0, u_max, n_u)
    gp = invert_to_g(ghat_star, up, cutoff)
    return float(np.trapezoid(np.abs(gp), up))


def estimate(sample: SizeSample, config: EstimatorConfig, x_grid: ArrayLike | None = None) -> Estimate:
    """Full pipeline: spectra, truncated inversion, smoothing, inversion and symmetrization."""
    xi = config.xi_grid()
    M = empirical_M_star(sample, xi)
    D = empirical_D_star(sample, xi)
    gs = g_hat_star(config, M, D, sample.n)
    u = config.u_grid()
    g = invert_to_g(gs, u, config.cutoff)
    x = default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    hh = h_hat(g, u, x)
    hs = symmetrize(hh, x)
    leak = leakage_mass(gs, config.cutoff, u_max=-config.u_min, n_u=config.n_u)
    return Estimate(config, sample.n, gs, u, g, x, hh, hs, leak)
