"""Fast invariant suite run by ``fragdeconv check``."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bandwidth import BandwidthFamily, SelectionGrid, SplitSpectra, split_sample
from .bench import run_campaign, weighted_risks_for
from .config import RunConfig
from .estimator import EstimatorConfig, empirical_D_star, empirical_M_star, g_hat_star
from .kernels import DivisionKernel
from .simulate import SimConfig, advance, division_log, init_population
from .spectrum import symmetric_xi_grid
from .stationary import StationaryDensity, identity_gstar, sample_from_N, solve_stationary, true_spectra


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _kernel_mass(kernel: DivisionKernel, N: StationaryDensity, cfg: RunConfig):
    x = np.linspace(0.0, 1.0, 20001)
    h = kernel.h(x)
    mass = float(np.trapezoid(h, x))
    asym = float(np.max(np.abs(h - h[::-1])))
    return abs(mass - 1) < 1e-6 and asym < 1e-10, f"mass={mass:.10f} asym={asym:.1e}"


def _stationary(kernel, N, cfg):
    a, R = cfg.model.alpha, cfg.model.rate_R
    mass, mean, n0 = N.mass(), N.mean(), float(N.values[0])
    ok = abs(mass - 1) < 1e-6 and n0 == 0.0 and abs(mean - a / R) <= 0.005 * a / R
    return ok, f"mass={mass:.9f} mean={mean:.6f} (target {a / R:g}) N(0)={n0:g}"


def _spectral(kernel, N, cfg):
    xi = symmetric_xi_grid(20.0, 0.05)
    M, D, _ = true_spectra(N, xi)
    lhs = identity_gstar(M, D, cfg.model.alpha, cfg.model.rate_R).values
    err = float(np.max(np.abs(lhs - kernel.g_star(xi))))
    return err < 1e-4, f"sup|ident - g*| on |xi|<=20: {err:.2e}"


def _size_bookkeeping(kernel, N, cfg):
    a = cfg.model.alpha
    rng = np.random.default_rng(12345)
    sim = SimConfig(a, cfg.model.rate_R, kernel, track_divisions=True)
    snap = init_population(100, np.linspace(0.5, 1.5, 100))
    t_end = 2.0
    out = advance(snap, sim, t_end, rng)
    log = division_log(out)
    # total size = initial size + alpha * (integrated cell count)
    expected = snap.sizes.sum() + a * (snap.count * t_end + float(np.sum(t_end - log[:, 0])))
    rel = abs(out.sizes.sum() - expected) / expected
    ok = rel < 1e-12 and out.count == snap.count + log.shape[0]
    return ok, f"cells={out.count} divisions={log.shape[0]} relerr={rel:.1e}"


def _estimator(kernel, N, cfg):
    rng = np.random.default_rng(2024)
    s = sample_from_N(N, 30000, rng)
    ec = EstimatorConfig(cfg.model.alpha, cfg.model.rate_R, ell=0.3)
    xi = ec.xi_grid()
    gs = g_hat_star(ec, empirical_M_star(s, xi), empirical_D_star(s, xi), s.n)
    w = weighted_risks_for(gs, ec.cutoff, np.linspace(ec.u_min, 0.0, 16385), kernel)
    herm = gs.hermitian_error()
    ok = herm < 1e-12 and w.plain_L2**2 < 0.2 and w.identity_gap < 1e-6 and w.inequality_holds
    return ok, (f"risk={w.plain_L2 ** 2:.4f} identity gap={w.identity_gap:.1e} "
                f"m-weighted={w.m_weighted:.4f} hermitian={herm:.1e}")


def _crit_diagonal(kernel, N, cfg):
    rng = np.random.default_rng(99)
    s = sample_from_N(N, 4000, rng)
    fam = BandwidthFamily.default(20)
    grid = SelectionGrid.from_config(fam, EstimatorConfig(cfg.model.alpha, cfg.model.rate_R))
    sp = SplitSpectra.compute(s, split_sample(s.n, 5, rng), grid)
    err = float(np.max(np.abs(np.diag(sp.crit2_table()) - sp.crit1_table())))
    return err < 1e-9, f"max|J2(l,l) - J1(l)| = {err:.1e}"


def _determinism(kernel, N, cfg):
    kw = dict(n=2000, V=4, runs=2, master_seed=5, N=N, workers=1,
              family=BandwidthFamily.default(20))
    a = run_campaign(kernel, **kw)
    b = run_campaign(kernel, **kw)
    same = all(ra.ell == rb.ell and ra.error == rb.error for ra, rb in zip(a.runs, b.runs))
    return same and a.complete, f"runs={len(a.runs)} identical={same}"


CHECKS: list[tuple[str, Callable]] = [
    ("kernel normalization and symmetry", _kernel_mass),
    ("stationary mass, mean and N(0)", _stationary),
    ("spectral identity", _spectral),
    ("simulator size bookkeeping", _size_bookkeeping),
    ("estimator risk and pathwise identity", _estimator),
    ("Crit2 diagonal equals Crit1", _crit_diagonal),
    ("campaign determinism", _determinism),
]


def run_checks(cfg: RunConfig) -> list[CheckResult]:
    kernel = cfg.kernel()
    t0 = time.perf_counter()
    N = solve_stationary(kernel, cfg.model.alpha, cfg.model.rate_R, x_max=cfg.x_max, J=cfg.grids.J)
    solve_s = time.perf_counter() - t0
    results = []
    for name, fn in CHECKS:
        t = time.perf_counter()
        try:
            ok, detail = fn(kernel, N, cfg)
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t + (solve_s if not results else 0)))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  time(s)  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:7.2f}  {r.detail}")
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} checks passed")
    return "\n".join(lines)

