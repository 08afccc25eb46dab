"""Exact event-driven simulation of a dividing cell population.

Every cell grows at speed ``alpha`` and divides at constant rate ``R`` into
two daughters of sizes ``gamma x`` and ``(1 - gamma) x`` with ``gamma ~ h``.
Because the total division rate ``R m`` is constant between events, the
Gillespie algorithm is exact here.  Sizes are stored as offsets
``x - alpha t`` so that growth between events costs nothing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .estimator import SizeSample
from .kernels import DivisionKernel

DEFAULT_MAX_CELLS = 10_000_000
_BLOCK = 8192


class PopulationOverflowError(RuntimeError):
    """The population exceeded the configured cell cap."""


class TrackingError(RuntimeError):
    """A diagnostic was requested that the simulation did not record."""


@dataclass(frozen=True)
class SimConfig:
    alpha: float
    rate_R: float
    kernel: DivisionKernel
    track_labels: bool = False
    track_divisions: bool = False
    max_cells: int = DEFAULT_MAX_CELLS

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"simulate: alpha must be > 0, got {self.alpha}")
        if not self.rate_R > 0:
            raise ValueError(f"simulate: rate_R must be > 0, got {self.rate_R}")
        if self.max_cells < 1:
            raise ValueError("simulate: max_cells must be >= 1")


@dataclass(frozen=True, eq=False)
class PopulationSnapshot:
    """Cells alive at ``time``; the measure puts weight ``1/scaling_K`` on each."""

    time: float
    scaling_K: int
    sizes: NDArray[np.float64] = field(repr=False)
    labels: tuple[str, ...] | None = field(default=None, repr=False)
    divisions: NDArray[np.float64] | None = field(default=None, repr=False)
    seed_state: dict | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        sizes = np.asarray(self.sizes, dtype=float)
        if sizes.ndim != 1:
            raise ValueError("sizes must be one-dimensional")
        if np.any(~(sizes > 0)):
            raise ValueError("all cell sizes must be strictly positive")
        if self.labels is not None and len(self.labels) != sizes.size:
            raise ValueError("labels and sizes differ in length")
        object.__setattr__(self, "sizes", sizes)

    @property
    def count(self) -> int:
        return int(self.sizes.size)


def init_population(
    K: int,
    initial: ArrayLike | Callable[[np.random.Generator, int], ArrayLike],
    rng: np.random.Generator | None = None,
    count: int | None = None,
    labels: bool = False,
) -> PopulationSnapshot:
    """Snapshot at time 0 from explicit sizes or from a sampler ``f(rng, m)``.

    With a sampler, ``count`` cells are drawn (default ``K``).
    """
    if int(K) != K or K < 1:
        raise ValueError(f"simulate: scaling K must be a positive integer, got {K}")
    if callable(initial):
        if rng is None:
            raise ValueError("simulate: a sampler needs an rng")
        m = int(K if count is None else count)
        sizes = np.asarray(initial(rng, m), dtype=float).ravel()
    else:
        sizes = np.atleast_1d(np.asarray(initial, dtype=float)).ravel().copy()
    if sizes.size == 0:
        raise ValueError("simulate: at least one initial cell is required")
    if np.any(~(sizes > 0)):
        raise ValueError("simulate: initial sizes must be strictly positive")
    lab = tuple(str(i) for i in range(sizes.size)) if labels else None
    return PopulationSnapshot(0.0, int(K), sizes, lab)


def split_size(x: float, gamma: float) -> tuple[float, float]:
    """Daughter sizes ``(gamma x, (1 - gamma) x)`` whose float sum is exactly ``x``.

    The larger daughter is computed by multiplication and the smaller one as
    the difference; since the larger part lies in ``[x/2, x]`` the
    subtraction is exact.
    """
    if gamma >= 0.5:
        d0 = gamma * x
        d1 = x - d0
    else:
        d1 = (1.0 - gamma) * x
        d0 = x - d1
    return d0, d1


def _daughter_label(label: str, side: int) -> str:
    return f"{label}{'' if '.' in label else '.'}{side}"


def advance(
    snapshot: PopulationSnapshot,
    config: SimConfig,
    t_end: float,
    rng: np.random.Generator,
) -> PopulationSnapshot:
    """Simulate exactly from ``snapshot.time`` to ``t_end``."""
    t0 = float(snapshot.time)
    if t_end < t0:
        raise ValueError(f"simulate: t_end={t_end} precedes snapshot time {t0}")
    alpha, R = float(config.alpha), float(config.rate_R)
    track_l = config.track_labels
    track_d = config.track_divisions
    cap = int(config.max_cells)
    if snapshot.count > cap:
        raise PopulationOverflowError(f"population {snapshot.count} exceeds cap {cap}")

    offs = (snapshot.sizes - alpha * t0).tolist()
    labels = None
    if track_l:
        labels = list(snapshot.labels) if snapshot.labels is not None else [str(i) for i in range(len(offs))]
    divs: list[tuple[float, float, float]] = []
    m = len(offs)
    t = t0
    kernel = config.kernel
    k = _BLOCK
    E = U = G = None
    while True:
        if k == _BLOCK:
            E = rng.standard_exponential(_BLOCK).tolist()
            U = rng.random(_BLOCK).tolist()
            G = np.asarray(kernel.sample(rng, _BLOCK)).tolist()
            k = 0
        tau = E[k] / (R * m)
        if t + tau > t_end:
            break
        t += tau
        i = int(U[k] * m)
        gam = G[k]
        k += 1
        at = alpha * t
        x = offs[i] + at
        d0, d1 = split_size(x, gam)
        if d0 <= 0.0 or d1 <= 0.0:
            # gamma within one ulp of 0 or 1: keep both daughters positive
            d0 = max(d0, x * 1e-300)
            d1 = max(d1, x * 1e-300)
        offs[i] = d0 - at
        offs.append(d1 - at)
        if track_l:
            lab = labels[i]
            labels[i] = _daughter_label(lab, 0)
            labels.append(_daughter_label(lab, 1))
        if track_d:
            divs.append((t, x, gam))
        m += 1
        if m > cap:
            raise PopulationOverflowError(
                f"population exceeded the cap of {cap} cells at t={t:.4g}; expected growth is e^(R t)"
            )
    sizes = np.asarray(offs) + alpha * t_end
    if track_d:
        prev = snapshot.divisions if snapshot.divisions is not None else np.zeros((0, 3))
        dv = np.vstack([prev, np.asarray(divs, dtype=float).reshape(-1, 3)])
    else:
        dv = None
    return PopulationSnapshot(
        float(t_end),
        snapshot.scaling_K,
        sizes,
        tuple(labels) if track_l else None,
        dv,
        rng.bit_generator.state,
    )


def measure(snapshot: PopulationSnapshot, f: Callable[[NDArray[np.float64]], ArrayLike]) -> float:
    """``<Z, f> = (1/K) sum_i f(x_i)``."""
    vals = np.asarray(f(snapshot.sizes), dtype=float)
    vals = np.broadcast_to(vals, snapshot.sizes.shape)
    return float(np.sum(vals)) / snapshot.scaling_K


def sample_sizes(snapshot: PopulationSnapshot, n: int, rng: np.random.Generator) -> SizeSample:
    """Pick ``n`` cells uniformly at random with replacement."""
    if n < 1:
        raise ValueError("simulate: n must be >= 1")
    if snapshot.count == 0:
        raise ValueError("simulate: cannot sample from an empty snapshot")
    idx = rng.integers(0, snapshot.count, size=n)
    return SizeSample(snapshot.sizes[idx])


def division_log(snapshot: PopulationSnapshot) -> NDArray[np.float64]:
    """Rows ``(time, mother size, gamma)``; ``gamma`` is the share of daughter 0."""
    if snapshot.divisions is None:
        raise TrackingError("division tracking was not enabled for this simulation")
    return snapshot.divisions


def expected_count(m0: float, rate_R: float, t: float) -> float:
    """Mean number of cells (per unit K) at time ``t``."""
    return m0 * float(np.exp(rate_R * t))


def expected_total_size(S0: float, m0: float, alpha: float, rate_R: float, t: float) -> float:
    """Mean total size (per unit K): divisions conserve size, growth adds ``alpha`` per cell."""
    return S0 + alpha * m0 * float(np.expm1(rate_R * t)) / rate_R
