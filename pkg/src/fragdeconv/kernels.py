"""Division kernels on [0, 1] and their log-scale densities.

A division kernel ``h`` is a symmetric probability density on ``[0, 1]``.
Under the change of variables ``u = log x`` it becomes
``g(u) = e^u h(e^u)``, supported on the negative half line.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate
from scipy.special import ndtr, roots_legendre

logger = logging.getLogger(__name__)
_WARNED: set[tuple[str, str]] = set()

KINDS = ("beta22", "truncated_normal", "tabulated")

# Panel Gauss-Legendre rule in u used for g* when no closed form exists.
_GSTAR_UMIN = -45.0
_GSTAR_PANEL = 0.05
_GSTAR_ORDER = 16


class KernelError(ValueError):
    """Raised for invalid kernel parameters."""


@dataclass(frozen=True, eq=False)
class DivisionKernel:
    """Symmetric division kernel ``h`` on ``[0, 1]``.

    Use the constructors :meth:`beta22`, :meth:`truncated_normal` and
    :meth:`tabulated` rather than building instances directly.
    """

    kind: str
    mu: float = 0.5
    sigma: float = 0.25
    grid: NDArray[np.float64] | None = field(default=None, repr=False)
    values: NDArray[np.float64] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise KernelError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "truncated_normal":
            if not (np.isfinite(self.sigma) and self.sigma > 0):
                raise KernelError(f"truncated_normal requires sigma > 0, got {self.sigma}")
            if abs(self.mu - 0.5) > 1e-12:
                raise KernelError(
                    f"truncated_normal must be symmetric on [0,1] (mu = 0.5), got mu={self.mu}"
                )
        if self.kind == "tabulated":
            self._validate_table()
        for msg in self.assumption_diagnostics():
            # once per process and message; kernels are rebuilt often
            if (self.kind, msg) not in _WARNED:
                _WARNED.add((self.kind, msg))
                logger.warning("kernel %s: %s", self.kind, msg)

    # ------------------------------------------------------------------
    # constructors
    @classmethod
    def beta22(cls) -> "DivisionKernel":
        """Beta(2, 2) density ``6 x (1 - x)``."""
        return cls("beta22")

    @classmethod
    def truncated_normal(cls, mu: float = 0.5, sigma: float = 0.25) -> "DivisionKernel":
        """Normal(mu, sigma^2) restricted and renormalized to ``[0, 1]``."""
        return cls("truncated_normal", mu=float(mu), sigma=float(sigma))

    @classmethod
    def tabulated(cls, x: ArrayLike, h: ArrayLike) -> "DivisionKernel":
        """Piecewise-linear kernel through ``(x, h)``, renormalized to unit mass."""
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        if x.ndim != 1 or x.shape != h.shape or x.size < 3:
            raise KernelError("tabulated kernel needs matching 1-d x and h arrays (>= 3 points)")
        if np.any(np.diff(x) <= 0):
            raise KernelError("tabulated kernel grid must be strictly increasing")
        if x[0] < 0 or x[-1] > 1:
            raise KernelError("tabulated kernel grid must lie in [0, 1]")
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise KernelError("tabulated kernel values must be finite and nonnegative")
        # extend with zeros so the interpolant is defined on all of [0, 1]
        if x[0] > 0:
            x = np.concatenate([[0.0], x])
            h = np.concatenate([[0.0], h])
        if x[-1] < 1:
            x = np.concatenate([x, [1.0]])
            h = np.concatenate([h, [0.0]])
        mass = np.trapezoid(h, x)
        if mass <= 0:
            raise KernelError("tabulated kernel has zero mass")
        return cls("tabulated", grid=x, values=h / mass)

    @classmethod
    def from_csv(cls, path: str | Path) -> "DivisionKernel":
        """Read a tabulated kernel from a CSV file with header ``x,h``."""
        data = np.genfromtxt(path, delimiter=",", names=True)
        names = data.dtype.names or ()
        if "x" not in names or "h" not in names:
            raise KernelError(f"{path}: expected columns 'x,h', found {names}")
        return cls.tabulated(data["x"], data["h"])

    @classmethod
    def from_spec(cls, spec: dict, base_dir: str | Path | None = None) -> "DivisionKernel":
        """Build a kernel from a config mapping such as ``{"kind": "beta22"}``."""
        kind = spec.get("kind", "beta22")
        if kind == "beta22":
            return cls.beta22()
        if kind == "truncated_normal":
            return cls.truncated_normal(spec.get("mu", 0.5), spec.get("sigma", 0.25))
        if kind == "tabulated":
            if "path" not in spec:
                raise KernelError("tabulated kernel spec needs a 'path'")
            path = Path(spec["path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return cls.from_csv(path)
        raise KernelError(f"unknown kernel kind {kind!r}; expected one of {KINDS}")

    def to_spec(self) -> dict:
        if self.kind == "truncated_normal":
            return {"kind": self.kind, "mu": self.mu, "sigma": self.sigma}
        return {"kind": self.kind}

    # ------------------------------------------------------------------
    def _validate_table(self) -> None:
        x, h = self.grid, self.values
        if x is None or h is None:
            raise KernelError("tabulated kernel needs grid and values")
        mirrored = np.interp(1.0 - x, x, h)
        scale = max(1.0, float(np.max(h)))
        if np.max(np.abs(mirrored - h)) > 1e-10 * scale:
            raise KernelError("tabulated kernel is not symmetric about 1/2 (tolerance 1e-10)")

    @cached_property
    def _tn_norm(self) -> float:
        a = (0.0 - self.mu) / self.sigma
        b = (1.0 - self.mu) / self.sigma
        return float(ndtr(b) - ndtr(a))

    def h(self, x: ArrayLike) -> NDArray[np.float64]:
        """Density value; zero outside ``[0, 1]``."""
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= 1.0)
        xc = np.where(inside, x, 0.5)
        if self.kind == "beta22":
            val = 6.0 * xc * (1.0 - xc)
        elif self.kind == "truncated_normal":
            z = (xc - self.mu) / self.sigma
            val = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * self.sigma * self._tn_norm)
        else:
            val = np.interp(xc, self.grid, self.values)
        return np.where(inside, val, 0.0)

    def g(self, u: ArrayLike) -> NDArray[np.float64]:
        """Log-scale density ``e^u h(e^u)``; zero for ``u > 0``."""
        u = np.asarray(u, dtype=float)
        with np.errstate(under="ignore"):
            x = np.exp(np.minimum(u, 0.0))
            out = x * self.h(x)
        return np.where(u > 0.0, 0.0, out)

    def cdf(self, x: ArrayLike) -> NDArray[np.float64]:
        """Distribution function of ``h``."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.kind == "beta22":
            return x * x * (3.0 - 2.0 * x)
        if self.kind == "truncated_normal":
            a = ndtr((0.0 - self.mu) / self.sigma)
            return (ndtr((x - self.mu) / self.sigma) - a) / self._tn_norm
        return np.interp(x, self.grid, self._table_cdf)

    @cached_property
    def _table_cdf(self) -> NDArray[np.float64]:
        dx = np.diff(self.grid)
        seg = 0.5 * dx * (self.values[1:] + self.values[:-1])
        return np.concatenate([[0.0], np.cumsum(seg)])

    def sample(self, rng: np.random.Generator, size: int | None = None) -> NDArray[np.float64] | float:
        """Draw fractions ``gamma ~ h``."""
        if self.kind == "beta22":
            return rng.beta(2.0, 2.0, size=size)
        if self.kind == "truncated_normal":
            return self._sample_truncnorm(rng, size)
        return self._sample_table(rng, size)

    def _sample_truncnorm(self, rng: np.random.Generator, size: int | None) -> NDArray[np.float64] | float:
        count = 1 if size is None else int(size)
        out = np.empty(count)
        filled = 0
        accept = max(self._tn_norm, 1e-3)
        while filled < count:
            need = count - filled
            draw = rng.normal(self.mu, self.sigma, size=int(need / accept) + 16)
            ok = draw[(draw > 0.0) & (draw < 1.0)][:need]
            out[filled:filled + ok.size] = ok
            filled += ok.size
        return float(out[0]) if size is None else out

    def _sample_table(self, rng: np.random.Generator, size: int | None) -> NDArray[np.float64] | float:
        p = rng.random(size=size)
        x, h, c = self.grid, self.values, self._table_cdf
        k = np.clip(np.searchsorted(c, p, side="right") - 1, 0, x.size - 2)
        dx = x[k + 1] - x[k]
        slope = (h[k + 1] - h[k]) / dx
        r = p - c[k]
        # solve h_k t + slope t^2 / 2 = r for t in [0, dx]
        disc = np.sqrt(np.maximum(h[k] ** 2 + 2.0 * slope * r, 0.0))
        denom = h[k] + disc
        t = np.where(denom > 0, 2.0 * r / np.where(denom > 0, denom, 1.0), 0.5 * dx)
        out = np.clip(x[k] + t, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        return float(out) if size is None else out

    def moment(self, k: int) -> float:
        """``int_0^1 x^k h(x) dx`` by adaptive quadrature."""
        if k < 0:
            raise ValueError("moment order must be >= 0")
        if self.kind == "tabulated":
            # x^k h is a polynomial of degree k+1 on each panel: Gauss-Legendre is exact
            t, w = np.polynomial.legendre.leggauss(k // 2 + 2)
            a, b = self.grid[:-1, None], self.grid[1:, None]
            xq = 0.5 * (b - a) * t + 0.5 * (a + b)
            val = np.sum(0.5 * (b - a) * w * xq**k * self.h(xq))
        else:
            val, _ = integrate.quad(
                lambda x: x**k * float(self.h(x)), 0.0, 1.0, epsabs=1e-10, epsrel=1e-12, limit=400,
            )
        return float(val)

    def g_star(self, xi: ArrayLike, extended: bool = False) -> NDArray:
        """Fourier transform ``g*(xi) = int e^{i xi u} g(u) du``.

        With ``extended=True`` the result is computed in long double.
        """
        ftype = np.longdouble if extended else np.float64
        ctype = np.clongdouble if extended else np.complex128
        xi = np.asarray(xi, dtype=ftype)
        if self.kind == "beta22":
            z = ctype(1j) * xi
            return ftype(6) / (ftype(2) + z) - ftype(6) / (ftype(3) + z)
        u, w = self._gstar_nodes(ftype)
        gw = w * self._g_ext(u) if extended else w * self.g(u)
        out = np.empty(xi.shape, dtype=ctype)
        flat = xi.ravel()
        res = out.reshape(-1)
        for s in range(0, flat.size, 128):
            ph = np.exp(ctype(1j) * np.multiply.outer(flat[s:s + 128], u))
            res[s:s + 128] = ph @ gw
        return out

    def _gstar_nodes(self, ftype) -> tuple[NDArray, NDArray]:
        t, w = roots_legendre(_GSTAR_ORDER)
        t = t.astype(ftype)
        w = w.astype(ftype)
        npanel = int(round(-_GSTAR_UMIN / _GSTAR_PANEL))
        width = ftype(-_GSTAR_UMIN) / npanel
        a = ftype(_GSTAR_UMIN) + width * np.arange(npanel, dtype=ftype)
        u = (a[:, None] + ftype(0.5) * width * (t + 1)).ravel()
        return u, np.tile(ftype(0.5) * width * w, npanel)

    def _g_ext(self, u: NDArray) -> NDArray:
        x = np.exp(u)
        if self.kind == "truncated_normal":
            z = (x - np.longdouble(self.mu)) / np.longdouble(self.sigma)
            c = np.sqrt(np.longdouble(2) * np.pi) * np.longdouble(self.sigma) * np.longdouble(self._tn_norm)
            return x * np.exp(-z * z / 2) / c
        return x * self.h(x.astype(float)).astype(np.longdouble)

    def assumption_diagnostics(self) -> list[str]:
        """Report where the kernel violates the smoothness/boundary assumptions of the theory."""
        msgs = []
        h0 = float(self.h(0.0))
        if h0 > 1e-12:
            msgs.append(f"h(0) = {h0:.3g} != 0; boundary assumption not met")
        eps = 1e-6
        d0 = float(self.h(eps) - self.h(0.0)) / eps
        if abs(d0) > 1e-6:
            msgs.append(f"h'(0) ~ {d0:.3g} != 0; vanishing-derivative assumption not met")
        return msgs


# Module-level functional interface ---------------------------------------

def eval_h(kernel: DivisionKernel, x: ArrayLike) -> NDArray[np.float64] | float:
    out = kernel.h(x)
    return float(out) if np.ndim(out) == 0 else out


def eval_g(kernel: DivisionKernel, u: ArrayLike) -> NDArray[np.float64] | float:
    out = kernel.g(u)
    return float(out) if np.ndim(out) == 0 else out


def sample_gamma(kernel: DivisionKernel, rng: np.random.Generator, size: int | None = None):
    return kernel.sample(rng, size)


def kernel_moment(kernel: DivisionKernel, k: int) -> float:
    return kernel.moment(k)


def h1() -> DivisionKernel:
    """Beta(2,2) test kernel."""
    return DivisionKernel.beta22()


def h2() -> DivisionKernel:
    """Truncated normal test kernel (mu = 0.5, sigma = 0.25)."""
    return DivisionKernel.truncated_normal(0.5, 0.25)
