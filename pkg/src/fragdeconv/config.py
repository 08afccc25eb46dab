"""Run configuration: a TOML key/value tree with defaults and validation.

Every section is optional; an empty file yields the default configuration.

.. code-block:: toml

    [model]
    alpha = 0.7
    rate_R = 1.0
    kernel = { kind = "beta22" }

    [grids]
    x_max = 8.4        # default 12 alpha / R
    J = 4096
    xi_max = 50.0
    dxi = 0.05
    u_min = -12.0
    n_u = 2048

    [estimation]
    ell = 0.3
    delta_max = 50
    V = 10
    rule = "crit1"

    [campaign]
    n = 30000
    runs = 100
    master_seed = 0
    rules = ["crit1", "crit2", "oracle"]

    [simulation]
    K = 1000
    t_end = 5.0
    initial = { kind = "stationary" }
    track_labels = false
    track_divisions = false
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from .bandwidth import BandwidthFamily
from .bench import RULES
from .estimator import EstimatorConfig
from .kernels import DivisionKernel
from .simulate import DEFAULT_MAX_CELLS


class ConfigValidationError(ValueError):
    """A configuration value violates a constraint; the message names the module."""


def _fail(module: str, msg: str) -> None:
    raise ConfigValidationError(f"{module}: {msg}")


def _positive(module: str, name: str, v: float) -> None:
    if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
        _fail(module, f"{name} must be a positive finite number (got {v!r})")


def _int_at_least(module: str, name: str, v: Any, lo: int) -> None:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        _fail(module, f"{name} must be an integer >= {lo} (got {v!r})")


@dataclass(frozen=True)
class ModelSection:
    alpha: float = 0.7
    rate_R: float = 1.0
    kernel: dict = field(default_factory=lambda: {"kind": "beta22"})


@dataclass(frozen=True)
class GridSection:
    x_max: float | None = None
    J: int = 4096
    xi_max: float = 50.0
    dxi: float = 0.05
    u_min: float = -12.0
    n_u: int = 2048


@dataclass(frozen=True)
class EstimationSection:
    ell: float = 0.3
    delta_max: int = 50
    V: int = 10
    rule: str = "crit1"


@dataclass(frozen=True)
class CampaignSection:
    n: int = 30000
    runs: int = 100
    master_seed: int = 0
    rules: tuple[str, ...] = RULES


@dataclass(frozen=True)
class SimulationSection:
    K: int = 1000
    t_end: float = 5.0
    initial: dict = field(default_factory=lambda: {"kind": "stationary"})
    track_labels: bool = False
    track_divisions: bool = False
    max_cells: int = DEFAULT_MAX_CELLS


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    grids: GridSection = field(default_factory=GridSection)
    estimation: EstimationSection = field(default_factory=EstimationSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    io: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    # -- derived objects -------------------------------------------------
    def kernel(self) -> DivisionKernel:
        return DivisionKernel.from_spec(self.model.kernel, self.base_dir)

    def family(self) -> BandwidthFamily:
        return BandwidthFamily.default(self.estimation.delta_max)

    def estimator_config(self, ell: float | None = None) -> EstimatorConfig:
        g = self.grids
        return EstimatorConfig(
            alpha=self.model.alpha,
            rate_R=self.model.rate_R,
            ell=self.estimation.ell if ell is None else ell,
            xi_max=g.xi_max,
            dxi=g.dxi,
            u_min=g.u_min,
            n_u=g.n_u,
        )

    @property
    def x_max(self) -> float:
        g = self.grids
        return 12.0 * self.model.alpha / self.model.rate_R if g.x_max is None else g.x_max

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["campaign"]["rules"] = list(d["campaign"]["rules"])
        return d

    def with_overrides(self, section: str, **values: Any) -> "RunConfig":
        """Copy with ``values`` replaced in ``section``, re-validated."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        new = replace(self, **{section: replace(getattr(self, section), **values)})
        validate(new)
        return new


_SECTIONS = {
    "model": ModelSection,
    "grids": GridSection,
    "estimation": EstimationSection,
    "campaign": CampaignSection,
    "simulation": SimulationSection,
}

_INITIAL_KINDS = ("stationary", "bump", "uniform", "constant")


def _section(name: str, raw: Any):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        _fail("cli", f"[{name}] must be a table")
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        _fail("cli", f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    vals = dict(raw)
    if name == "campaign" and "rules" in vals:
        vals["rules"] = tuple(vals["rules"])
    return cls(**vals)


def validate(cfg: RunConfig) -> RunConfig:
    """Check every constraint and raise :class:`ConfigValidationError` naming the module."""
    m = cfg.model
    _positive("stationary", "model.alpha", m.alpha)
    _positive("stationary", "model.rate_R", m.rate_R)
    try:
        DivisionKernel.from_spec(m.kernel, cfg.base_dir)
    except (ValueError, OSError) as exc:
        _fail("kernels", f"model.kernel: {exc}")

    g = cfg.grids
    if g.x_max is not None:
        _positive("stationary", "grids.x_max", g.x_max)
    _int_at_least("stationary", "grids.J", g.J, 16)
    _positive("estimator", "grids.xi_max", g.xi_max)
    _positive("estimator", "grids.dxi", g.dxi)
    if not (isinstance(g.u_min, (int, float)) and g.u_min < 0):
        _fail("estimator", f"grids.u_min must be negative (got {g.u_min!r})")
    _int_at_least("estimator", "grids.n_u", g.n_u, 2)

    e = cfg.estimation
    _positive("estimator", "estimation.ell", e.ell)
    if 1.0 / e.ell > g.xi_max * (1 + 1e-12):
        _fail("estimator", f"cutoff 1/ell = {1 / e.ell:.4g} exceeds grids.xi_max = {g.xi_max}")
    _int_at_least("bandwidth", "estimation.delta_max", e.delta_max, 1)
    if 0.5 * e.delta_max > g.xi_max * (1 + 1e-12):
        _fail("bandwidth", f"largest cutoff 0.5*delta_max = {0.5 * e.delta_max} exceeds grids.xi_max = {g.xi_max}")
    step = 0.5 / g.dxi
    if abs(step - round(step)) > 1e-9:
        _fail("bandwidth", f"grids.dxi = {g.dxi} must divide 0.5 so that every cutoff is a grid node")
    _int_at_least("bandwidth", "estimation.V", e.V, 1)
    if e.rule not in RULES:
        _fail("bandwidth", f"estimation.rule must be one of {RULES} (got {e.rule!r})")

    c = cfg.campaign
    _int_at_least("bench", "campaign.n", c.n, 2)
    if c.n % 2:
        _fail("bandwidth", f"campaign.n must be even for half splits (got {c.n})")
    _int_at_least("bench", "campaign.runs", c.runs, 1)
    _int_at_least("bench", "campaign.master_seed", c.master_seed, 0)
    bad = [r for r in c.rules if r not in RULES]
    if bad or not c.rules:
        _fail("bench", f"campaign.rules must be a nonempty subset of {RULES} (got {list(c.rules)})")

    s = cfg.simulation
    _int_at_least("simulate", "simulation.K", s.K, 1)
    if not (isinstance(s.t_end, (int, float)) and s.t_end >= 0):
        _fail("simulate", f"simulation.t_end must be >= 0 (got {s.t_end!r})")
    _int_at_least("simulate", "simulation.max_cells", s.max_cells, 1)
    kind = s.initial.get("kind") if isinstance(s.initial, dict) else None
    if kind not in _INITIAL_KINDS:
        _fail("simulate", f"simulation.initial.kind must be one of {_INITIAL_KINDS} (got {kind!r})")
    if kind == "bump":
        _positive("simulate", "simulation.initial.center", s.initial.get("center", 2.0))
        _positive("simulate", "simulation.initial.width", s.initial.get("width", 0.3))
    if kind == "uniform":
        lo, hi = s.initial.get("low", 0.5), s.initial.get("high", 1.5)
        if not 0 < lo < hi:
            _fail("simulate", "simulation.initial needs 0 < low < high")
    if kind == "constant":
        _positive("simulate", "simulation.initial.size", s.initial.get("size", 1.0))
    return cfg


def from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    unknown = set(raw) - set(_SECTIONS) - {"io"}
    if unknown:
        _fail("cli", f"unknown section(s): {', '.join(sorted(unknown))}")
    kwargs = {name: _section(name, raw[name]) for name in _SECTIONS if name in raw}
    io = raw.get("io", {})
    if not isinstance(io, dict):
        _fail("cli", "[io] must be a table")
    cfg = RunConfig(**kwargs, io=dict(io), base_dir=base_dir or Path.cwd())
    return validate(cfg)


def parse_config(path: str | Path | None) -> RunConfig:
    """Read and validate a TOML configuration; ``None`` gives the defaults."""
    if path is None:
        return validate(RunConfig())
    p = Path(path)
    if not p.is_file():
        _fail("cli", f"config file not found: {p}")
    try:
        with p.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        _fail("cli", f"malformed config {p}: {exc}")
    return from_dict(raw, p.resolve().parent)


def initial_sampler(cfg: RunConfig, stationary_density=None):
    """Sampler ``f(rng, m)`` for the configured initial population."""
    ini = cfg.simulation.initial
    kind = ini["kind"]
    if kind == "stationary":
        from .stationary import sample_from_N

        return lambda rng, m: sample_from_N(stationary_density, m, rng).values
    if kind == "bump":
        from scipy.stats import truncnorm

        c, w = float(ini.get("center", 2.0)), float(ini.get("width", 0.3))
        dist = truncnorm(-c / w, np.inf, loc=c, scale=w)
        return lambda rng, m: np.maximum(dist.rvs(size=m, random_state=rng), 1e-12)
    if kind == "uniform":
        lo, hi = float(ini.get("low", 0.5)), float(ini.get("high", 1.5))
        return lambda rng, m: rng.uniform(lo, hi, m)
    size = float(ini.get("size", 1.0))
    return lambda rng, m: np.full(m, size)
