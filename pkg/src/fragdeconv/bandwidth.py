"""Bandwidth family, resampling selection rules and the oracle bandwidth.

All criteria are evaluated from one pass over the sample: the unsmoothed
estimate ``G(xi) = alpha D̂*(xi) inv(M̂*(xi)) / (2R) + 1`` does not depend on
the bandwidth, and the sinc kernel only restricts the integration range to
``[-1/ell, 1/ell]``.  Cumulative trapezoid sums over ``xi >= 0`` therefore
give every norm and inner product in the family at once (Hermitian symmetry
supplies the negative frequencies).
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .estimator import (
    ConfigError,
    EstimatorConfig,
    SizeSample,
    ecf_sums,
    raw_g_star_values,
)
from .spectrum import SpectrumGrid, trapezoid_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BandwidthFamily:
    """Bandwidths ``ell = 1/(0.5 Delta)``, ``Delta = 1..delta_max``, in decreasing order."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ConfigError("bandwidth: family must be nonempty")
        if np.any(v <= 0):
            raise ConfigError("bandwidth: all bandwidths must be positive")
        if v.size > 1 and np.any(np.diff(v) >= 0):
            raise ConfigError("bandwidth: family must be strictly decreasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def default(cls, delta_max: int = 50) -> "BandwidthFamily":
        if delta_max < 1:
            raise ConfigError(f"bandwidth: delta_max must be >= 1, got {delta_max}")
        delta = np.arange(1, delta_max + 1, dtype=float)
        return cls(1.0 / (0.5 * delta))

    @property
    def cutoffs(self) -> NDArray[np.float64]:
        return 1.0 / self.values

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """``V`` half/half partitions of ``{0..n-1}``; row ``j`` of ``train`` marks ``E_j``."""

    n: int
    train: NDArray[np.bool_] = field(repr=False)
    seed: int | None = None

    @property
    def V(self) -> int:
        return int(self.train.shape[0])

    def pairs(self):
        idx = np.arange(self.n)
        for row in self.train:
            yield idx[row], idx[~row]

    def swapped(self) -> "SplitPlan":
        return SplitPlan(self.n, ~self.train, self.seed)


def _partition_key(mask: NDArray[np.bool_]) -> bytes:
    canon = mask if not mask[0] else ~mask
    return hashlib.sha1(np.packbits(canon).tobytes()).digest()


def split_sample(n: int, V: int, rng: np.random.Generator | int, v_cap: int = 10_000,
                 max_retries: int = 100) -> SplitPlan:
    """Draw ``V`` uniformly random half/half partitions of ``n`` indices.

    An integer ``rng`` is used as a seed and recorded in the plan.
    """
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    if n % 2 != 0 or n < 2:
        raise ConfigError(f"bandwidth: sample size must be even and >= 2 for half splits, got {n}")
    if not 1 <= V <= v_cap:
        raise ConfigError(f"bandwidth: V must be in [1, {v_cap}], got {V}")
    vmax = math.comb(n, n // 2) // 2
    if V > vmax:
        raise ConfigError(f"bandwidth: only {vmax} distinct partitions exist for n={n}, V={V} requested")
    train = np.zeros((V, n), dtype=bool)
    seen: set[bytes] = set()
    for j in range(V):
        for _ in range(max_retries):
            row = np.zeros(n, dtype=bool)
            row[rng.permutation(n)[: n // 2]] = True
            key = _partition_key(row)
            if key not in seen:
                break
        else:
            raise RuntimeError("bandwidth: could not draw a new distinct partition")
        seen.add(key)
        train[j] = row
    return SplitPlan(n, train, seed)


# ---------------------------------------------------------------------------
# Fourier-domain inner products


def fourier_norm2(a: SpectrumGrid) -> float:
    """``int |a|^2 dxi`` by the trapezoid rule."""
    w = trapezoid_weights(a.xi.size, a.step)
    return float(np.sum(w * np.abs(a.values) ** 2))


def fourier_inner(a: SpectrumGrid, b: SpectrumGrid) -> complex:
    """``int a conj(b) dxi`` by the trapezoid rule."""
    a.check_same_grid(b)
    w = trapezoid_weights(a.xi.size, a.step)
    return complex(np.sum(w * a.values * np.conj(b.values)))


def _cumtrapz(f: NDArray, step: float) -> NDArray:
    out = np.zeros(f.shape, dtype=f.dtype)
    out[1:] = np.cumsum(0.5 * step * (f[1:] + f[:-1]), axis=0)
    return out


# ---------------------------------------------------------------------------
# grids shared by a campaign


@dataclass(frozen=True, eq=False)
class SelectionGrid:
    """Half frequency grid ``0..max cutoff`` and the u-grid used for L2 risks."""

    family: BandwidthFamily
    alpha: float = 0.7
    rate_R: float = 1.0
    dxi: float = 0.05
    u_min: float = -12.0
    n_u: int = 2048
    xi: NDArray[np.float64] = field(init=False, repr=False)
    cut_index: NDArray[np.int64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        cut = self.family.cutoffs
        idx = np.rint(cut / self.dxi).astype(np.int64)
        if np.max(np.abs(idx * self.dxi - cut)) > 1e-9 * max(1.0, cut.max()):
            raise ConfigError(
                f"bandwidth: every cutoff 1/ell must be a multiple of dxi={self.dxi}; "
                "choose dxi dividing 0.5 for the default family"
            )
        object.__setattr__(self, "cut_index", idx)
        object.__setattr__(self, "xi", self.dxi * np.arange(int(idx.max()) + 1, dtype=float))

    @classmethod
    def from_config(cls, family: BandwidthFamily, config: EstimatorConfig) -> "SelectionGrid":
        if family.cutoffs.max() > config.xi_max * (1 + 1e-12):
            raise ConfigError(
                f"bandwidth: largest cutoff {family.cutoffs.max():.4g} exceeds xi_max={config.xi_max}"
            )
        return cls(family, config.alpha, config.rate_R, config.dxi, config.u_min, config.n_u)

    @property
    def u(self) -> NDArray[np.float64]:
        return np.linspace(self.u_min, 0.0, self.n_u)

    def _inversion_weights(self) -> NDArray[np.float64]:
        # column m: trapezoid weights on [0, cutoff_m], halved at both ends
        K = self.xi.size
        W = np.zeros((K, self.cut_index.size))
        for m, k in enumerate(self.cut_index):
            W[: k + 1, m] = self.dxi
            W[0, m] *= 0.5
            W[k, m] *= 0.5
        return W

    def inverse_all(self, G: NDArray[np.complex128]) -> NDArray[np.float64]:
        """``ĝ_ell(u)`` for every family member: shape ``(n_u, len(family))``."""
        cache = self.__dict__.get("_phase")
        if cache is None:
            cache = np.exp(-1j * np.outer(self.u, self.xi))
            object.__setattr__(self, "_phase", cache)
            object.__setattr__(self, "_W", self._inversion_weights())
        return (cache @ (G[:, None] * self._W)).real / np.pi

    def l2_risks(self, G: NDArray[np.complex128], g_true: NDArray[np.float64]) -> NDArray[np.float64]:
        """``||ĝ_ell - g||_2^2`` on the u-grid for every family member."""
        ghat = self.inverse_all(G)
        du = self.u[1] - self.u[0]
        w = trapezoid_weights(self.n_u, du)
        return w @ (ghat - g_true[:, None]) ** 2


@dataclass(frozen=True, eq=False)
class SplitSpectra:
    """Unsmoothed estimates ``G`` on ``xi >= 0`` for the full sample and both halves of each split."""

    grid: SelectionGrid
    n: int
    full: NDArray[np.complex128] = field(repr=False)
    train: NDArray[np.complex128] = field(repr=False)
    valid: NDArray[np.complex128] = field(repr=False)

    @classmethod
    def compute(cls, sample: SizeSample, plan: SplitPlan | None, grid: SelectionGrid) -> "SplitSpectra":
        n = sample.n
        xi = grid.xi
        if plan is None:
            sm, sd = ecf_sums(sample.log_values, xi)
            full = raw_g_star_values(grid.alpha, grid.rate_R, xi, sm / n, sd / n, n)
            empty = np.zeros((xi.size, 0), dtype=complex)
            return cls(grid, n, full, empty, empty)
        if plan.n != n:
            raise ConfigError(f"bandwidth: split plan is for n={plan.n}, sample has n={n}")
        W = np.concatenate([np.ones((n, 1)), plan.train.T.astype(float)], axis=1)
        sm, sd = ecf_sums(sample.log_values, xi, W)
        half = n // 2
        full = raw_g_star_values(grid.alpha, grid.rate_R, xi, sm[:, 0] / n, sd[:, 0] / n, n)
        x = xi[:, None]
        smE, sdE = sm[:, 1:], sd[:, 1:]
        smC, sdC = sm[:, :1] - smE, sd[:, :1] - sdE
        train = raw_g_star_values(grid.alpha, grid.rate_R, x, smE / half, sdE / half, half)
        valid = raw_g_star_values(grid.alpha, grid.rate_R, x, smC / half, sdC / half, n - half)
        return cls(grid, n, full, train, valid)

    def swapped(self) -> "SplitSpectra":
        return SplitSpectra(self.grid, self.n, self.full, self.valid, self.train)

    # cumulative quantities over [-c, c] as functions of the cutoff index
    def _train_norms(self) -> NDArray[np.float64]:
        return 2.0 * _cumtrapz(np.abs(self.train) ** 2, self.grid.dxi)

    def _cross(self) -> NDArray[np.float64]:
        return 2.0 * _cumtrapz((self.train * np.conj(self.valid)).real, self.grid.dxi)

    def crit1_table(self) -> NDArray[np.float64]:
        k = self.grid.cut_index
        return np.mean(self._train_norms()[k] - 2.0 * self._cross()[k], axis=1)

    def crit2_table(self) -> NDArray[np.float64]:
        k = self.grid.cut_index
        norms = self._train_norms()[k]                       # (L, V)
        cross = self._cross()                                # (K, V)
        kk = np.minimum(k[:, None], k[None, :])              # (L, L')
        return np.mean(norms[:, None, :] - 2.0 * cross[kk], axis=2)

    def oracle_criterion(self, gstar_true: NDArray[np.complex128]) -> NDArray[np.float64]:
        """``||ĝ*_ell||^2 - 2 <ĝ*_ell, g*>`` on the training halves, averaged over splits."""
        k = self.grid.cut_index
        cross = 2.0 * _cumtrapz((self.train * np.conj(gstar_true)[:, None]).real, self.grid.dxi)
        return np.mean(self._train_norms()[k] - 2.0 * cross[k], axis=1)


def _argmin_larger_ell(values: NDArray[np.float64]) -> int:
    # the family is ordered by decreasing ell, so the first minimum is the largest ell
    return int(np.argmin(values))


@dataclass(frozen=True, eq=False)
class Selection:
    """Outcome of a selection rule."""

    rule: str
    ell: float
    index: int
    family: BandwidthFamily = field(repr=False)
    table: NDArray[np.float64] = field(repr=False)
    plan: SplitPlan | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "rule": self.rule,
            "ell": self.ell,
            "index": self.index,
            "family": self.family.values.tolist(),
            "table": self.table.tolist(),
        }
        if self.plan is not None:
            out["V"] = self.plan.V
            out["split_seed"] = self.plan.seed
        return out


def _prepare(sample, family, V, config, rng, plan):
    grid = SelectionGrid.from_config(family, config)
    if plan is None:
        if rng is None:
            raise ValueError("either rng or plan must be given")
        plan = split_sample(sample.n, V, rng)
    return SplitSpectra.compute(sample, plan, grid), plan


def crit1_select(
    sample: SizeSample,
    family: BandwidthFamily,
    V: int,
    config: EstimatorConfig,
    rng: np.random.Generator | None = None,
    plan: SplitPlan | None = None,
) -> Selection:
    """Minimize the split-averaged risk estimate with training and validation at the same ``ell``."""
    spec, plan = _prepare(sample, family, V, config, rng, plan)
    table = spec.crit1_table()
    k = _argmin_larger_ell(table)
    return Selection("crit1", float(family.values[k]), k, family, table, plan)


def crit2_select(
    sample: SizeSample,
    family: BandwidthFamily,
    V: int,
    config: EstimatorConfig,
    rng: np.random.Generator | None = None,
    plan: SplitPlan | None = None,
) -> Selection:
    """Minimize over ``ell`` the minimum over validation bandwidths ``ell'``."""
    spec, plan = _prepare(sample, family, V, config, rng, plan)
    table = spec.crit2_table()
    k = _argmin_larger_ell(table.min(axis=1))
    return Selection("crit2", float(family.values[k]), k, family, table, plan)


def oracle_bandwidth(
    sample: SizeSample,
    family: BandwidthFamily,
    true_g: ArrayLike,
    config: EstimatorConfig,
) -> Selection:
    """Family member minimizing ``||ĝ_ell - g||_2^2`` on the u-grid."""
    grid = SelectionGrid.from_config(family, config)
    spec = SplitSpectra.compute(sample, None, grid)
    g = np.asarray(true_g, dtype=float)
    if g.shape != grid.u.shape:
        raise ValueError(f"true_g must be given on the {grid.n_u}-point u-grid")
    risks = grid.l2_risks(spec.full, g)
    k = _argmin_larger_ell(risks)
    return Selection("oracle", float(family.values[k]), k, family, risks, None)
