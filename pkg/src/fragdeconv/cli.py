"""Command-line interface: ``fragdeconv <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .bandwidth import crit1_select, crit2_select, oracle_bandwidth, split_sample
from .bench import default_workers, run_campaign
from .config import ConfigValidationError, RunConfig, initial_sampler, parse_config
from .estimator import EstimatorConfig, SizeSample, estimate
from .simulate import SimConfig, advance, init_population, sample_sizes
from .spectrum import symmetric_xi_grid
from .stationary import sample_from_N, solve_stationary, true_spectra

logger = logging.getLogger("fragdeconv")


class CLIError(RuntimeError):
    """User-facing failure; printed without a traceback."""


def _workers(args) -> int:
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise CLIError("cli: --workers must be >= 1")
        return args.workers
    try:
        return default_workers()
    except ValueError as exc:
        raise CLIError(f"cli: {exc}") from None


def _stationary_for(cfg: RunConfig, method: str = "fixed_point"):
    return solve_stationary(cfg.kernel(), cfg.model.alpha, cfg.model.rate_R, x_max=cfg.x_max,
                            J=cfg.grids.J, method=method)


def read_sample(path: str | Path) -> SizeSample:
    cols = fio.read_float_columns(path, required=("x",))
    return SizeSample(cols["x"])


def write_sample(path: str | Path, sample: SizeSample) -> None:
    fio.write_columns(path, {"x": sample.values})


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, cfg: RunConfig) -> int:
    cfg = cfg.with_overrides("simulation", K=args.k, t_end=args.t_end)
    s = cfg.simulation
    rng = np.random.default_rng(args.seed)
    N = _stationary_for(cfg) if s.initial["kind"] == "stationary" else None
    sim = SimConfig(cfg.model.alpha, cfg.model.rate_R, cfg.kernel(),
                    track_labels=s.track_labels or args.labels,
                    track_divisions=s.track_divisions or args.divisions is not None,
                    max_cells=s.max_cells)
    snap = init_population(s.K, initial_sampler(cfg, N), rng, labels=sim.track_labels)
    out = advance(snap, sim, s.t_end, rng)
    cols: dict = {"size": out.sizes}
    if out.labels is not None:
        cols["label"] = list(out.labels)
    fio.write_columns(args.out, cols)
    if args.divisions is not None:
        d = out.divisions
        fio.write_columns(args.divisions, {"time": d[:, 0], "mother_size": d[:, 1], "gamma": d[:, 2]})
    if args.sample_n:
        write_sample(args.sample_out, sample_sizes(out, args.sample_n, rng))
    print(f"t={out.time:g} K={out.scaling_K} cells={out.count} -> {args.out}")
    return 0


def cmd_stationary(args, cfg: RunConfig) -> int:
    N = _stationary_for(cfg, args.method)
    fio.write_columns(args.out, {"x": N.x_grid, "N": N.values})
    if args.spectra:
        xi = symmetric_xi_grid(args.xi_max if args.xi_max is not None else cfg.grids.xi_max, cfg.grids.dxi)
        M, D, F = true_spectra(N, xi)
        fio.write_columns(args.spectra, {
            "xi": xi,
            "reM": M.values.real, "imM": M.values.imag,
            "reD": D.values.real, "imD": D.values.imag,
            "refrakD": F.values.real, "imfrakD": F.values.imag,
        })
    if args.sample_n:
        rng = np.random.default_rng(args.seed)
        write_sample(args.sample_out, sample_from_N(N, args.sample_n, rng))
    print(f"mass={N.mass():.9f} mean={N.mean():.9f} iterations={N.iterations} -> {args.out}")
    return 0


def _estimator_config(args, cfg: RunConfig) -> EstimatorConfig:
    cfg = cfg.with_overrides("model", alpha=args.alpha, rate_R=args.rate)
    return cfg.estimator_config(ell=getattr(args, "ell", None))


def cmd_estimate(args, cfg: RunConfig) -> int:
    ec = _estimator_config(args, cfg)
    sample = read_sample(args.sample)
    est = estimate(sample, ec)
    fio.write_columns(args.out, {"x": est.x_grid, "h_hat": est.h_hat, "h_hat_sym": est.h_hat_sym})
    g_out = args.g_out or Path(args.out).with_name("g_est.csv")
    fio.write_columns(g_out, {"u": est.u_grid, "g_hat": est.g_hat})
    print(f"n={est.n} ell={ec.ell:g} leakage={est.leakage:.3e} -> {args.out}, {g_out}")
    return 0


def cmd_select(args, cfg: RunConfig) -> int:
    ec = _estimator_config(args, cfg)
    cfg = cfg.with_overrides("estimation", V=args.v, rule=args.rule)
    rule, V = cfg.estimation.rule, cfg.estimation.V
    family = cfg.family()
    sample = read_sample(args.sample)
    if rule == "oracle":
        sel = oracle_bandwidth(sample, family, cfg.kernel().g(ec.u_grid()), ec)
        extra = {"kernel": cfg.model.kernel}
    else:
        plan = split_sample(sample.n, V, args.seed)
        fn = crit1_select if rule == "crit1" else crit2_select
        sel = fn(sample, family, V, ec, plan=plan)
        extra = {"seed": args.seed}
    out = sel.to_dict()
    out.update(extra)
    out["n"] = sample.n
    fio.write_json(args.out, out)
    print(f"rule={rule} ell={sel.ell:.6g} -> {args.out}")
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    cfg = cfg.with_overrides("campaign", n=args.n, runs=args.runs, master_seed=args.seed)
    cfg = cfg.with_overrides("estimation", V=args.v)
    cfg = cfg.with_overrides("simulation", K=args.k, t_end=args.t_end)
    c = cfg.campaign
    simulation = None
    if args.from_simulation:
        s = cfg.simulation
        simulation = {"K": s.K, "t_end": s.t_end, "max_cells": s.max_cells}
    report = run_campaign(
        cfg.kernel(), c.n, cfg.estimation.V, c.rules, c.runs, c.master_seed,
        alpha=cfg.model.alpha, rate_R=cfg.model.rate_R, family=cfg.family(),
        config=cfg.estimator_config(), N=_stationary_for(cfg), workers=_workers(args),
        simulation=simulation,
    )
    fio.write_json(args.out, report.to_dict(timings=args.timings))
    if args.csv:
        header, rows = report.csv_rows(timings=args.timings)
        fio.write_csv(args.csv, header, rows)
    for rule, s in report.summary.items():
        print(f"{rule:>6}: mean error {s['mean_error']:.5f} (se {s['se_error']:.5f})  "
              f"mean ell {s['mean_ell']:.5f}  runs ok {s['runs_ok']}/{c.runs}")
    if not report.complete:
        print(f"warning: {report.metadata['runs_failed']} run(s) failed", file=sys.stderr)
    return 0


def cmd_check(args, cfg: RunConfig) -> int:
    from .checks import format_table, run_checks

    results = run_checks(cfg)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fragdeconv", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(sp, seed_default=0):
        sp.add_argument("--config", type=Path, default=None, help="TOML configuration file")
        sp.add_argument("--seed", type=int, default=seed_default, help="seed for all random draws")

    sp = sub.add_parser("simulate", help="exact stochastic simulation of the cell population")
    common(sp)
    sp.add_argument("--t-end", type=float, default=None)
    sp.add_argument("--k", type=int, default=None, help="scaling parameter K (initial cell count)")
    sp.add_argument("--out", type=Path, required=True, help="snapshot CSV (size[,label])")
    sp.add_argument("--divisions", type=Path, default=None, help="division log CSV")
    sp.add_argument("--labels", action="store_true", help="track genealogical labels")
    sp.add_argument("--sample-n", type=int, default=0, help="also draw this many sizes from the snapshot")
    sp.add_argument("--sample-out", type=Path, default=Path("sample.csv"))
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("stationary", help="solve for the stationary size density")
    common(sp)
    sp.add_argument("--out", type=Path, required=True, help="CSV with columns x,N")
    sp.add_argument("--spectra", type=Path, default=None, help="CSV of M*, D*, frakD*")
    sp.add_argument("--xi-max", type=float, default=None)
    sp.add_argument("--method", choices=("fixed_point", "time_march"), default="fixed_point")
    sp.add_argument("--sample-n", type=int, default=0, help="also draw this many sizes from N")
    sp.add_argument("--sample-out", type=Path, default=Path("sample.csv"))
    sp.set_defaults(func=cmd_stationary)

    sp = sub.add_parser("estimate", help="estimate the division kernel at a fixed bandwidth")
    sp.add_argument("--config", type=Path, default=None)
    sp.add_argument("--sample", type=Path, required=True, help="CSV with column x")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--rate", type=float, default=None)
    sp.add_argument("--ell", type=float, default=None)
    sp.add_argument("--out", type=Path, required=True, help="CSV x,h_hat,h_hat_sym")
    sp.add_argument("--g-out", type=Path, default=None, help="CSV u,g_hat (default g_est.csv next to --out)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("select", help="select the bandwidth")
    common(sp, seed_default=7)
    sp.add_argument("--sample", type=Path, required=True)
    sp.add_argument("--rule", choices=("crit1", "crit2", "oracle"), default=None)
    sp.add_argument("--v", type=int, default=None, help="number of half splits")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--rate", type=float, default=None)
    sp.add_argument("--out", type=Path, required=True)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("bench", help="Monte Carlo risk campaign")
    sp.add_argument("--config", type=Path, default=None)
    sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    sp.add_argument("--out", type=Path, required=True, help="JSON report")
    sp.add_argument("--csv", type=Path, default=None, help="one row per (run, rule)")
    sp.add_argument("--runs", type=int, default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--v", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None, help="worker processes (env FRAGDECONV_WORKERS)")
    sp.add_argument("--from-simulation", action="store_true", help="sample from simulated populations")
    sp.add_argument("--k", type=int, default=None, help="K for --from-simulation")
    sp.add_argument("--t-end", type=float, default=None, help="t for --from-simulation")
    sp.add_argument("--timings", action="store_true", help="include wall-clock durations in the outputs")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("check", help="run the invariant suite")
    sp.add_argument("--config", type=Path, default=None)
    sp.set_defaults(func=cmd_check)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        return int(args.func(args, cfg))
    except (CLIError, ConfigValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error [{args.command}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
