"""Monte Carlo risk campaigns, weighted risk metrics and rate sweeps."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import simpson

from .bandwidth import BandwidthFamily, SelectionGrid, SplitSpectra, split_sample
from .estimator import EstimatorConfig, SizeSample, invert_to_g, symmetrize
from .kernels import DivisionKernel
from .simulate import SimConfig, advance, init_population, sample_sizes
from .spectrum import SpectrumGrid
from .stationary import StationaryDensity, sample_from_N, solve_stationary

logger = logging.getLogger(__name__)

RULES = ("crit1", "crit2", "oracle")


def run_rng(master_seed: int, index: int) -> tuple[np.random.Generator, int]:
    """Generator for run ``index``: a hash of ``(master_seed, index)`` via ``SeedSequence``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    seed = int(ss.generate_state(1, dtype=np.uint64)[0])
    return np.random.default_rng(ss), seed


def default_workers() -> int:
    env = os.environ.get("FRAGDECONV_WORKERS")
    if env:
        try:
            w = int(env)
        except ValueError:
            raise ValueError(f"FRAGDECONV_WORKERS must be an integer, got {env!r}") from None
        if w < 1:
            raise ValueError("FRAGDECONV_WORKERS must be >= 1")
        return w
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# risk metrics


def risk_x_grid(u_min: float = -12.0, n_half: int = 8192) -> NDArray[np.float64]:
    """Grid on (0, 1), symmetric about 1/2, geometric towards both ends."""
    left = np.exp(np.linspace(u_min, math.log(0.5), n_half))
    return np.concatenate([left, 1.0 - left[-2::-1]])


def identity_x_grid(u_min: float = -12.0, n_half: int = 8192, v_min: float = -40.0) -> NDArray[np.float64]:
    """Grid on ``[e^{u_min}, 1]``, the image of ``[u_min, 0]``, geometric towards both ends."""
    left = np.exp(np.linspace(u_min, math.log(0.5), n_half))
    right = 1.0 - np.exp(np.linspace(math.log(0.5), v_min, n_half))
    return np.concatenate([left, right[1:], [1.0]])


@dataclass(frozen=True)
class WeightedRisks:
    plain_L2: float
    exp_weighted: float
    m_weighted: float
    x_weighted: float

    @property
    def identity_gap(self) -> float:
        """``|int (ĥ-h)^2 x dx - ||ĝ-g||^2|``."""
        return abs(self.x_weighted - self.plain_L2**2)

    @property
    def inequality_holds(self) -> bool:
        return self.m_weighted <= self.plain_L2**2


def weighted_risks(
    ghat: ArrayLike,
    g: ArrayLike,
    u_grid: ArrayLike,
    hhat: ArrayLike,
    h: ArrayLike,
    x_grid: ArrayLike,
    hhat_sym: ArrayLike | None = None,
    h_sym: ArrayLike | None = None,
    x_sym: ArrayLike | None = None,
) -> WeightedRisks:
    """Four risk quadratures, all by composite Simpson rules.

    ``plain_L2 = ||ĝ - g||_2`` and ``exp_weighted = int e^{-u}(ĝ - g)^2`` on
    the u-grid; ``x_weighted = int (ĥ - h)^2 x`` on ``x_grid`` and
    ``m_weighted = int (ĥ_sym - h)^2 x(1-x)`` on ``x_sym``.  Without a
    separate symmetric grid, ``x_grid`` serves for both.
    """
    u = np.asarray(u_grid, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    dg = np.asarray(ghat, dtype=float) - np.asarray(g, dtype=float)
    if dg.shape != u.shape:
        raise ValueError("ghat, g and u_grid must have matching shapes")
    hh = np.asarray(hhat, dtype=float)
    hv = np.asarray(h, dtype=float)
    if not (hh.shape == hv.shape == x.shape):
        raise ValueError("hhat, h and x_grid must have matching shapes")
    if hhat_sym is None:
        hhat_sym = symmetrize(hh, x, tol=1e-9)
    xs = x if x_sym is None else np.asarray(x_sym, dtype=float)
    hs = np.asarray(hhat_sym, dtype=float)
    hvs = hv if h_sym is None else np.asarray(h_sym, dtype=float)
    if not (hs.shape == hvs.shape == xs.shape):
        raise ValueError("hhat_sym, h_sym and x_sym must have matching shapes")
    plain = math.sqrt(float(simpson(dg**2, x=u)))
    expw = float(simpson(np.exp(-u) * dg**2, x=u))
    xw = float(simpson((hh - hv) ** 2 * x, x=x))
    mw = float(simpson((hs - hvs) ** 2 * xs * (1 - xs), x=xs))
    return WeightedRisks(plain, expw, mw, xw)


def weighted_risks_for(ghat_star: SpectrumGrid, cutoff: float, u_grid: ArrayLike, kernel: DivisionKernel,
                       n_half: int = 16384) -> WeightedRisks:
    """All four risks of the estimate with spectrum ``ghat_star`` and cutoff ``1/ell``.

    ``ĝ`` is evaluated by exact Fourier inversion both on the u-grid and at
    ``log x`` on the x-grids, so the two sides of the identity use
    independent nodes.
    """
    u = np.asarray(u_grid, dtype=float)
    xi_ = identity_x_grid(u[0], n_half)
    xs = risk_x_grid(u[0], n_half)
    gu = invert_to_g(ghat_star, u, cutoff)
    hh = invert_to_g(ghat_star, np.log(xi_), cutoff) / xi_
    hs = symmetrize(invert_to_g(ghat_star, np.log(xs), cutoff) / xs, xs, tol=1e-9)
    return weighted_risks(gu, kernel.g(u), u, hh, kernel.h(xi_), xi_, hs, kernel.h(xs), xs)


# ---------------------------------------------------------------------------
# campaigns


@dataclass
class RunRecord:
    index: int
    seed: int
    ok: bool
    ell: dict[str, float] = field(default_factory=dict)
    error: dict[str, float] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)
    message: str = ""


@dataclass
class RiskReport:
    """Per-run results and summary of a campaign.

    ``error`` is the squared L2 risk ``||ĝ_ell - g||_2^2`` on the u-grid.
    """

    kernel: dict
    n: int
    V: int
    rules: tuple[str, ...]
    master_seed: int
    runs: list[RunRecord]
    summary: dict[str, dict[str, float]]
    metadata: dict

    @property
    def complete(self) -> bool:
        return all(r.ok for r in self.runs)

    def to_dict(self, timings: bool = True) -> dict:
        """JSON-ready mapping; ``timings=False`` drops wall-clock fields so equal seeds give equal bytes."""
        runs = [asdict(r) for r in self.runs]
        meta = dict(self.metadata)
        if not timings:
            meta.pop("wall_seconds", None)
            for r in runs:
                r.pop("seconds")
        return {
            "kernel": self.kernel,
            "n": self.n,
            "V": self.V,
            "rules": list(self.rules),
            "master_seed": self.master_seed,
            "complete": self.complete,
            "summary": self.summary,
            "metadata": meta,
            "runs": runs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RiskReport":
        runs = [RunRecord(**r) for r in d["runs"]]
        return cls(d["kernel"], d["n"], d["V"], tuple(d["rules"]), d["master_seed"], runs,
                   d["summary"], d["metadata"])

    def csv_rows(self, timings: bool = True) -> tuple[list[str], list[list]]:
        """One row per (run, rule)."""
        header = ["run", "seed", "rule", "ell", "error", "ok"] + (["seconds"] if timings else [])
        nan = float("nan")
        rows = []
        for r in self.runs:
            for rule in self.rules:
                row = [r.index, r.seed, rule, r.ell.get(rule, nan), r.error.get(rule, nan), int(r.ok)]
                if timings:
                    row.append(r.seconds.get(rule, nan))
                rows.append(row)
        return header, rows


def summarize(runs: list[RunRecord], rules) -> dict[str, dict[str, float]]:
    out = {}
    for rule in rules:
        e = np.array([r.error[rule] for r in runs if r.ok])
        l = np.array([r.ell[rule] for r in runs if r.ok])
        k = e.size
        out[rule] = {
            "mean_error": float(np.mean(e)) if k else float("nan"),
            "se_error": float(np.std(e, ddof=1) / math.sqrt(k)) if k > 1 else float("nan"),
            "median_error": float(np.median(e)) if k else float("nan"),
            "mean_ell": float(np.mean(l)) if k else float("nan"),
            "se_ell": float(np.std(l, ddof=1) / math.sqrt(k)) if k > 1 else float("nan"),
            "runs_ok": int(k),
        }
    return out


@dataclass(frozen=True, eq=False)
class _CampaignContext:
    kernel: DivisionKernel
    N: StationaryDensity
    grid: SelectionGrid
    g_true: NDArray[np.float64]
    n: int
    V: int
    rules: tuple[str, ...]
    master_seed: int
    simulation: dict | None


_CTX: _CampaignContext | None = None


def _init_worker(ctx: _CampaignContext) -> None:
    global _CTX
    _CTX = ctx


def _draw_sample(ctx: _CampaignContext, rng: np.random.Generator) -> SizeSample:
    if ctx.simulation is None:
        return sample_from_N(ctx.N, ctx.n, rng)
    sim = ctx.simulation
    cfg = SimConfig(ctx.N.alpha, ctx.N.rate_R, ctx.kernel, max_cells=int(sim.get("max_cells", 10**7)))
    snap = init_population(int(sim["K"]), lambda r, m: sample_from_N(ctx.N, m, r).values, rng)
    snap = advance(snap, cfg, float(sim["t_end"]), rng)
    return sample_sizes(snap, ctx.n, rng)


def _one_run(index: int, ctx: _CampaignContext | None = None) -> RunRecord:
    ctx = ctx or _CTX
    rng, seed = run_rng(ctx.master_seed, index)
    rec = RunRecord(index, seed, False)
    try:
        sample = _draw_sample(ctx, rng)
        plan = split_sample(sample.n, ctx.V, rng) if ({"crit1", "crit2"} & set(ctx.rules)) else None
        t0 = time.perf_counter()
        spec = SplitSpectra.compute(sample, plan, ctx.grid)
        risks = ctx.grid.l2_risks(spec.full, ctx.g_true)
        shared = time.perf_counter() - t0
        fam = ctx.grid.family.values
        for rule in ctx.rules:
            t1 = time.perf_counter()
            if rule == "oracle":
                k = int(np.argmin(risks))
            elif rule == "crit1":
                k = int(np.argmin(spec.crit1_table()))
            elif rule == "crit2":
                k = int(np.argmin(spec.crit2_table().min(axis=1)))
            else:
                raise ValueError(f"unknown rule {rule!r}")
            rec.ell[rule] = float(fam[k])
            rec.error[rule] = float(risks[k])
            rec.seconds[rule] = shared + time.perf_counter() - t1
        rec.ok = True
    except Exception as exc:  # recorded per run, campaign continues
        rec.message = f"{type(exc).__name__}: {exc}"
        logger.warning("run %d failed: %s", index, rec.message)
    return rec


def run_campaign(
    kernel: DivisionKernel,
    n: int = 30000,
    V: int = 10,
    rules=RULES,
    runs: int = 100,
    master_seed: int = 0,
    *,
    alpha: float = 0.7,
    rate_R: float = 1.0,
    family: BandwidthFamily | None = None,
    config: EstimatorConfig | None = None,
    N: StationaryDensity | None = None,
    workers: int | None = None,
    simulation: dict | None = None,
) -> RiskReport:
    """Repeat: sample ``n`` sizes, select ``ell`` per rule, record ``||ĝ_ell - g||_2^2``."""
    rules = tuple(rules)
    for r in rules:
        if r not in RULES:
            raise ValueError(f"bench: unknown rule {r!r}; expected one of {RULES}")
    if runs < 1:
        raise ValueError("bench: runs must be >= 1")
    family = family or BandwidthFamily.default()
    config = config or EstimatorConfig(alpha=alpha, rate_R=rate_R)
    t_start = time.perf_counter()
    if N is None:
        N = solve_stationary(kernel, alpha, rate_R)
    grid = SelectionGrid.from_config(family, config)
    ctx = _CampaignContext(kernel, N, grid, kernel.g(grid.u), int(n), int(V), rules, int(master_seed), simulation)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or runs == 1:
        records = [_one_run(i, ctx) for i in range(runs)]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(ctx,)) as ex:
            records = list(ex.map(_one_run, range(runs)))
    records.sort(key=lambda r: r.index)
    meta = {
        "alpha": alpha,
        "rate_R": rate_R,
        "family": family.values.tolist(),
        "xi_step": grid.dxi,
        "u_grid": [grid.u_min, 0.0, grid.n_u],
        "error_metric": "squared L2 risk of g_hat on the u-grid",
        "sampling": "stationary density" if simulation is None else {"simulation": simulation},
        "wall_seconds": time.perf_counter() - t_start,
        "runs_failed": int(sum(not r.ok for r in records)),
    }
    return RiskReport(kernel.to_spec(), int(n), int(V), rules, int(master_seed), records,
                      summarize(records, rules), meta)


def ordering_holds(report: RiskReport) -> dict[str, bool]:
    """``oracle <= crit2 <= crit1 + 1 standard error`` on mean squared risks."""
    s = report.summary
    se = s["crit1"]["se_error"]
    return {
        "oracle<=crit2": s["oracle"]["mean_error"] <= s["crit2"]["mean_error"],
        "crit2<=crit1+se": s["crit2"]["mean_error"] <= s["crit1"]["mean_error"] + se,
    }


# ---------------------------------------------------------------------------
# rate sweep


@dataclass
class RateSweep:
    n: list[int]
    mean_risk: list[float]
    se_risk: list[float]
    slope: float
    slope_ci: tuple[float, float]
    baseline: float
    rule: str

    def strictly_decreasing(self) -> bool:
        m = self.mean_risk
        return all(b < a for a, b in zip(m, m[1:]))


def rate_sweep(
    kernel: DivisionKernel,
    n_list=(1000, 5000, 30000),
    runs: int = 20,
    rule: str = "oracle",
    master_seed: int = 0,
    *,
    alpha: float = 0.7,
    rate_R: float = 1.0,
    N: StationaryDensity | None = None,
    V: int = 10,
    n_boot: int = 2000,
    workers: int | None = 1,
) -> RateSweep:
    """Mean risk per sample size and a log-log slope with a bootstrap 95% interval."""
    n_list = [int(v) for v in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("bench: n_list must be increasing")
    if N is None:
        N = solve_stationary(kernel, alpha, rate_R)
    per_n = []
    baseline = None
    for j, n in enumerate(n_list):
        rep = run_campaign(kernel, n, V, (rule,), runs, master_seed + 7919 * j, alpha=alpha, rate_R=rate_R,
                           N=N, workers=workers)
        per_n.append(np.array([r.error[rule] for r in rep.runs if r.ok]))
        if baseline is None:
            grid = SelectionGrid.from_config(BandwidthFamily.default(), EstimatorConfig(alpha=alpha, rate_R=rate_R))
            baseline = float(np.trapezoid(kernel.g(grid.u) ** 2, grid.u))
    means = [float(e.mean()) for e in per_n]
    ses = [float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else float("nan") for e in per_n]
    x = np.log(n_list)
    slope = float(np.polyfit(x, np.log(means), 1)[0])
    rng = np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(10**6,)))
    boots = np.empty(n_boot)
    for b in range(n_boot):
        m = [float(e[rng.integers(0, e.size, e.size)].mean()) for e in per_n]
        boots[b] = np.polyfit(x, np.log(m), 1)[0]
    ci = (float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975)))
    return RateSweep(n_list, means, ses, slope, ci, baseline, rule)


# ---------------------------------------------------------------------------
# truncated-inverse error bound


@dataclass
class TruncationStudy:
    """Monte Carlo ``E|Δ(xi)|^2`` against ``min{|M*|^-2, n^-1 |M*|^-4}``.

    ``Δ = 1_{|M̂*| >= n^{-1/2}} / M̂* - 1/M*``.  The constant is fitted on all
    but the largest ``n`` and must dominate the held-out column.
    """

    xi: list[float]
    n: list[int]
    mean_sq: NDArray[np.float64]      # (len(n), len(xi))
    se: NDArray[np.float64]
    bound: NDArray[np.float64]
    C_fit: float

    @property
    def ratio(self) -> NDArray[np.float64]:
        return self.mean_sq / self.bound

    @property
    def dominates(self) -> bool:
        # allow two Monte Carlo standard errors on the held-out estimates
        held = self.mean_sq[-1] - 2.0 * self.se[-1]
        return bool(np.all(held <= self.C_fit * self.bound[-1]))


def truncation_study(
    N: StationaryDensity,
    xi_values=(1.0, 5.0, 10.0, 20.0),
    n_list=(100, 400, 1600),
    reps: int = 2000,
    seed: int = 0,
) -> TruncationStudy:
    from .estimator import ecf_sums, truncated_inverse_values
    from .stationary import true_spectra

    xs = np.asarray(xi_values, dtype=float)
    if np.any(xs <= 0):
        raise ValueError("xi_values must be positive")
    n_list = [int(v) for v in n_list]
    if len(n_list) < 2:
        raise ValueError("need at least two sample sizes (one is held out)")
    sym = np.concatenate([-xs[::-1], [0.0], xs])
    M, _, _ = true_spectra(N, sym)
    Mt = M.values[xs.size + 1:]
    rng = np.random.default_rng(seed)
    means, ses, bounds = [], [], []
    for n in n_list:
        d2 = np.empty((reps, xs.size))
        for r in range(reps):
            s = sample_from_N(N, n, rng)
            sm, _ = ecf_sums(s.log_values, xs)
            d2[r] = np.abs(truncated_inverse_values(sm / n, n) - 1.0 / Mt) ** 2
        means.append(d2.mean(axis=0))
        ses.append(d2.std(axis=0, ddof=1) / math.sqrt(reps))
        absM = np.abs(Mt)
        with np.errstate(divide="ignore"):
            bounds.append(np.minimum(absM**-2.0, absM**-4.0 / n))
    mean_sq, se, bound = np.array(means), np.array(ses), np.array(bounds)
    C = float(np.max(mean_sq[:-1] / bound[:-1]))
    return TruncationStudy(xs.tolist(), n_list, mean_sq, se, bound, C)
