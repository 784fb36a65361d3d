"""Experiment configuration, orchestration, persistence, and the property-suite runner."""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import DoubleWell, compute_c_eta
from .environment import EnvironmentSpec, make_environment, shift_environment, verify_growth_bounds
from .geometry import Direction, LatticeCuboid, OrientedCube
from .grids import EnergyModel, EnergyParams, cube_grid
from .solve import SolverConfig
from .cell import (
    bounds_check,
    cell_problem_r,
    eps_scaled_cell,
    f_hom_estimate,
    glued_partition_energy,
    mu_nu,
    sigma_pair,
    verify_positivity,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "PropertyResult",
    "load_config",
    "build_manifest",
    "run_sigma",
    "run_cell",
    "run_homogenize",
    "run_sweep",
    "run_property_suite",
    "write_cell_csv",
    "write_json",
]


class ConfigError(ValueError):
    """Configuration is syntactically or semantically invalid."""


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _parse_direction(token: str, n: int) -> Direction:
    token = token.strip()
    if token.startswith("p:"):
        parts = token[2:].replace(",", " ").split()
        try:
            ints = [int(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"bad integer direction {token!r}") from exc
        if len(ints) != n:
            raise ConfigError(f"direction {token!r} has wrong dimension for n={n}")
        return Direction.from_integers(*ints)
    try:
        value = float(token)
    except ValueError as exc:
        raise ConfigError(f"bad direction token {token!r}") from exc
    if n == 1:
        return Direction.from_integers(1 if value >= 0 else -1)
    return Direction.from_angle_degrees(value)


@dataclass
class ExperimentConfig:
    """Parsed, validated experiment description (flat key = value sections)."""

    dimension: int = 2
    h: float = 0.25
    r_list: tuple[float, ...] = (8.0, 16.0, 32.0)
    nu_list: tuple[Direction, ...] = (Direction.from_integers(0, 1),)
    seeds: tuple[int, ...] = (0,)
    x0_list: tuple[tuple[float, ...], ...] = ((0.0, 0.0),)
    epsilon_list: tuple[float, ...] = (1.0,)
    env: EnvironmentSpec = field(default_factory=EnvironmentSpec)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(restarts=1, max_iters=20000))
    positivity_regime_q_max: float = 0.25
    out_dir: str = "out"
    out_format: str = "both"  # csv | json | both
    threads: int = 0  # 0 -> os.cpu_count()
    raw_text: str = ""

    def validate(self):
        if self.dimension not in (1, 2):
            raise ConfigError("dimension must be 1 or 2")
        if self.h <= 0:
            raise ConfigError("h must be positive")
        if any(r < 4 for r in self.r_list):
            raise ConfigError("all r values must be >= 4")
        if self.epsilon_list and self.h > min(self.epsilon_list) / 4.0 + 1e-12:
            raise ConfigError(
                f"h = {self.h} cannot resolve the smallest scale {min(self.epsilon_list)}; need h <= eps/4"
            )
        for nu in self.nu_list:
            if nu.n != self.dimension:
                raise ConfigError("direction dimension does not match experiment dimension")
        for x0 in self.x0_list:
            if len(x0) != self.dimension:
                raise ConfigError("x0 dimension does not match experiment dimension")
        if self.out_format not in ("csv", "json", "both"):
            raise ConfigError("format must be csv, json, or both")
        return self

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:16]


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()

    cfg = ExperimentConfig(raw_text=raw)
    exp = parser["experiment"] if parser.has_section("experiment") else {}
    try:
        cfg.dimension = int(exp.get("dimension", cfg.dimension))
        cfg.h = float(exp.get("h", cfg.h))
        if "r_list" in exp:
            cfg.r_list = _parse_floats(exp["r_list"])
        if "epsilon_list" in exp:
            cfg.epsilon_list = _parse_floats(exp["epsilon_list"])
        if "seeds" in exp:
            cfg.seeds = tuple(int(v) for v in _parse_floats(exp["seeds"]))
        if "nu_list" in exp:
            cfg.nu_list = tuple(_parse_direction(tok, cfg.dimension) for tok in exp["nu_list"].split())
        else:
            cfg.nu_list = (Direction.from_integers(*([0] * (cfg.dimension - 1) + [1])),)
        if "x0_list" in exp:
            x0s = []
            for tok in exp["x0_list"].split():
                vals = tuple(float(v) for v in tok.split(","))
                x0s.append(vals)
            cfg.x0_list = tuple(x0s)
        else:
            cfg.x0_list = ((0.0,) * cfg.dimension,)
        if "positivity_regime_q_max" in exp:
            cfg.positivity_regime_q_max = float(exp["positivity_regime_q_max"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad [experiment] section: {exc}") from exc

    if parser.has_section("environment"):
        envsec = parser["environment"]
        try:
            cfg.env = EnvironmentSpec(
                kind=envsec.get("kind", "homogeneous"),
                a_range=tuple(_parse_floats(envsec.get("a_range", "1 1")))[:2],
                b_range=tuple(_parse_floats(envsec.get("b_range", "0.05 0.05")))[:2],
                c_range=tuple(_parse_floats(envsec.get("c_range", "1 1")))[:2],
                q=float(envsec.get("q", 0.05)),
                c1=float(envsec.get("c1", 1.0)),
                c2=float(envsec.get("c2", 1.0)),
                seed=int(envsec.get("seed", 0)),
            )
        except ValueError as exc:
            raise ConfigError(f"bad [environment] section: {exc}") from exc

    if parser.has_section("solver"):
        sol = parser["solver"]
        try:
            grad_tol = sol.get("grad_tol", "auto")
            cfg.solver = SolverConfig(
                max_iters=int(sol.get("max_iters", 20000)),
                grad_tol=None if grad_tol in ("auto", "") else float(grad_tol),
                restarts=int(sol.get("restarts", 1)),
                noise_scale=float(sol.get("noise_scale", 0.05)),
                noise_seed=int(sol.get("noise_seed", 0)),
            )
        except ValueError as exc:
            raise ConfigError(f"bad [solver] section: {exc}") from exc

    if parser.has_section("output"):
        out = parser["output"]
        cfg.out_dir = out.get("dir", cfg.out_dir)
        cfg.out_format = out.get("format", cfg.out_format)

    if overrides:
        if overrides.get("seed") is not None:
            cfg.env = cfg.env.with_seed(int(overrides["seed"]))
        if overrides.get("out") is not None:
            cfg.out_dir = overrides["out"]
        if overrides.get("format") is not None:
            cfg.out_format = overrides["format"]
        if overrides.get("threads") is not None:
            cfg.threads = int(overrides["threads"])
    return cfg.validate()


@dataclass
class RunManifest:
    """Provenance of one run: config hash, version, per-record work-item ids."""

    config_hash: str
    tool_version: str
    command: str
    started: str
    records: list = field(default_factory=list)

    def add(self, work_id: str, seed: int):
        self.records.append({"work_id": work_id, "seed": seed})

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "command": self.command,
            "started": self.started,
            "records": self.records,
        }


def build_manifest(cfg: ExperimentConfig, command: str) -> RunManifest:
    return RunManifest(
        config_hash=cfg.config_hash,
        tool_version=__version__,
        command=command,
        started=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )


def _pool_map(fn, items, threads: int):
    """Ordered parallel map; results are reduced in submission order regardless of thread count."""
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def write_cell_csv(path: str, records) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nu_deg", "r", "seed", "x0_index", "m_hat", "normalized", "iters", "grad_norm", "wall_ms"])
        for rec, x0_index in records:
            writer.writerow(
                [
                    _fmt(rec.nu.angle_degrees()),
                    _fmt(rec.r),
                    rec.seed,
                    x0_index,
                    _fmt(rec.m_hat),
                    _fmt(rec.normalized),
                    rec.diagnostics.get("iters", ""),
                    _fmt(rec.diagnostics.get("grad_norm", float("nan"))),
                    _fmt(round(rec.diagnostics.get("wall_ms", 0.0), 3)),
                ]
            )


def write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommand drivers
# ---------------------------------------------------------------------------


def run_sigma(cfg: ExperimentConfig) -> dict:
    well = DoubleWell()
    try:
        minus, plus = sigma_pair(well, cfg.env.q, cfg.epsilon_list, cfg.solver, n=1)
    except ValueError as exc:
        raise ConfigError(f"sigma needs scales resolvable on the unit slab: {exc}") from exc
    payload = {
        "q": cfg.env.q,
        "sigma_minus": minus.value,
        "sigma_plus": plus.value,
        "best_epsilon": {"minus": minus.best_epsilon, "plus": plus.best_epsilon},
        "per_epsilon": {
            "minus": {str(k): v for k, v in minus.per_epsilon.items()},
            "plus": {str(k): v for k, v in plus.per_epsilon.items()},
        },
        "c_eta": compute_c_eta(well, cfg.env.q),
    }
    if cfg.out_format in ("json", "both"):
        write_json(os.path.join(cfg.out_dir, "sigma.json"), payload)
    return payload


def run_cell(cfg: ExperimentConfig) -> list:
    work = [
        (nu, r, seed, i, x0)
        for nu in cfg.nu_list
        for r in cfg.r_list
        for seed in cfg.seeds
        for i, x0 in enumerate(cfg.x0_list)
    ]

    def solve(item):
        nu, r, seed, i, x0 = item
        env = make_environment(cfg.env.with_seed(seed))
        return (cell_problem_r(env, nu, r, x0, cfg.solver, cfg.h), i)

    results = _pool_map(solve, work, cfg.threads)
    if cfg.out_format in ("csv", "both"):
        write_cell_csv(os.path.join(cfg.out_dir, "cell.csv"), results)
    return results


def run_homogenize(cfg: ExperimentConfig) -> dict:
    def estimate(nu):
        return f_hom_estimate(cfg.env, nu, cfg.r_list, cfg.seeds, cfg.x0_list, cfg.solver, cfg.h)

    estimates = _pool_map(estimate, list(cfg.nu_list), cfg.threads)
    table = {}
    all_records = []
    for nu, est in zip(cfg.nu_list, estimates):
        table[f"{nu.angle_degrees():.6g}"] = {
            "estimate": est.estimate,
            "stderr": est.stderr,
            "per_seed_limit": {str(k): v for k, v in est.per_seed_limit.items()},
            "x0_spread": {str(k): v for k, v in est.x0_spread.items()},
        }
        all_records.extend((rec, 0) for rec in est.records)
    payload = {"f_hom": table, "r_schedule": list(cfg.r_list)}
    if cfg.out_format in ("json", "both"):
        write_json(os.path.join(cfg.out_dir, "fhom.json"), payload)
    if cfg.out_format in ("csv", "both"):
        write_cell_csv(os.path.join(cfg.out_dir, "fhom_records.csv"), all_records)
    return payload


def run_sweep(cfg: ExperimentConfig) -> dict:
    """Polar-plot data: direction angle versus estimated density."""
    payload = run_homogenize(cfg)
    rows = [(float(k), v["estimate"], v["stderr"]) for k, v in payload["f_hom"].items()]
    rows.sort()
    path = os.path.join(cfg.out_dir, "sweep.csv")
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nu_deg", "f_hom", "stderr"])
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return payload


# ---------------------------------------------------------------------------
# Property suite
# ---------------------------------------------------------------------------


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str
    informational: bool = False


def _prop_gradient(cfg: ExperimentConfig) -> PropertyResult:
    rng = np.random.default_rng(1)
    env = make_environment(cfg.env)
    worst = 0.0
    nu = cfg.nu_list[0]
    for _ in range(5):
        cube = OrientedCube((0.0,) * cfg.dimension, 2.0, nu)
        g = cube_grid(cube, 1.0 / 8.0, frame_width=0.25)
        g.values[...] = rng.uniform(-1.5, 1.5, g.shape)
        model = EnergyModel(g, env, EnergyParams(1.0, "general"))
        grad = model.gradient(g.values)
        for _ in range(8):
            v = rng.normal(size=g.shape)
            v[g.frozen] = 0.0
            d = 1e-6
            fd = (model.energy(g.values + d * v) - model.energy(g.values - d * v)) / (2 * d)
            an = float(np.sum(grad * v))
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    return PropertyResult("gradient-consistency", worst < 1e-5, f"max rel err {worst:.3e}")


def _prop_growth(cfg: ExperimentConfig) -> PropertyResult:
    rng = np.random.default_rng(2)
    env = make_environment(cfg.env)
    nu = cfg.nu_list[0]
    violations = 0
    worst = 0.0
    for _ in range(50):
        cube = OrientedCube((0.0,) * cfg.dimension, 2.0, nu)
        g = cube_grid(cube, 0.25, frame_width=0.0)
        g.values[...] = rng.uniform(-2.0, 2.0, g.shape)
        e = EnergyModel(g, env, EnergyParams(1.0, "general")).energy(g.values)
        lo = cfg.env.c1 * EnergyModel(g, env, EnergyParams(1.0, "m_minus")).energy(g.values)
        hi = cfg.env.c2 * EnergyModel(g, env, EnergyParams(1.0, "m_plus")).energy(g.values)
        scale = 1e-10 * (1.0 + abs(e))
        if e < lo - scale or e > hi + scale:
            violations += 1
            worst = max(worst, lo - e, e - hi)
    return PropertyResult("growth-sandwich", violations == 0, f"{violations} violations")


def _prop_positivity(cfg: ExperimentConfig) -> PropertyResult:
    q = cfg.env.q
    report = verify_positivity(q, (1.0, 1.0) if cfg.dimension == 2 else (1.0,), 1.0 / 16.0, 3, cfg.solver)
    if q > cfg.positivity_regime_q_max:
        return PropertyResult(
            "positivity",
            True,
            f"outside regime (q = {q} > {cfg.positivity_regime_q_max}); observed min {report.minimum:.3e}",
            informational=True,
        )
    return PropertyResult("positivity", report.passed, f"min {report.minimum:.3e}")


def _lattice_direction(cfg: ExperimentConfig) -> Direction:
    for nu in cfg.nu_list:
        if nu.rational_flag:
            return nu
    return Direction.from_integers(*([0] * (cfg.dimension - 1) + [1]))


def _outside_regime(cfg: ExperimentConfig, name: str) -> PropertyResult | None:
    if cfg.env.q > cfg.positivity_regime_q_max:
        return PropertyResult(
            name,
            True,
            f"skipped: q = {cfg.env.q} outside the sign-controlled regime",
            informational=True,
        )
    return None


def _prop_mu_bounds(cfg: ExperimentConfig) -> PropertyResult:
    if cfg.dimension != 2:
        return PropertyResult("mu-bounds", True, "skipped for n=1", informational=True)
    gated = _outside_regime(cfg, "mu-bounds")
    if gated:
        return gated
    nu = _lattice_direction(cfg)
    env = make_environment(cfg.env)
    c_eta = compute_c_eta(DoubleWell(), cfg.env.q)
    ok = True
    details = []
    for base in ((0.0, 2.0), (0.5, 1.5)):
        cub = LatticeCuboid((base,), nu)
        sample = mu_nu(env, cub, cfg.solver, cfg.h)
        upper = cfg.env.c2 * c_eta * cub.base_area
        good = -1e-6 <= sample.value <= upper + 1e-9 and not sample.anomaly
        ok = ok and good
        details.append(f"{base}: {sample.value:.4g} <= {upper:.4g}")
    return PropertyResult("mu-bounds", ok, "; ".join(details))


def _prop_subadditivity(cfg: ExperimentConfig) -> PropertyResult:
    if cfg.dimension != 2:
        return PropertyResult("subadditivity", True, "skipped for n=1", informational=True)
    nu = _lattice_direction(cfg)
    env = make_environment(cfg.env)
    cub = LatticeCuboid(((0.0, 3.0),), nu)
    out = glued_partition_energy(env, cub, [1.5], cfg.solver, cfg.h)
    return PropertyResult(
        "subadditivity",
        out["slack"] <= 1e-9,
        f"glued - sum = {out['slack']:.3e}",
    )


def _prop_stationarity(cfg: ExperimentConfig) -> PropertyResult:
    if cfg.dimension != 2:
        return PropertyResult("stationarity", True, "skipped for n=1", informational=True)
    nu = _lattice_direction(cfg)
    env = make_environment(cfg.env)
    cub = LatticeCuboid(((0.0, 2.0),), nu)
    worst = 0.0
    for z in ((1,), (-2,)):
        shifted_env = shift_environment(env, tuple(int(v) for v in cub.lattice_shift_vector(z)))
        a = mu_nu(shifted_env, cub, cfg.solver, cfg.h)
        b = mu_nu(env, cub.shifted(z), cfg.solver, cfg.h)
        worst = max(worst, abs(a.value - b.value) / max(abs(b.value), 1e-12))
    return PropertyResult("stationarity", worst <= 1e-9, f"max rel gap {worst:.3e}")


def _prop_bounds(cfg: ExperimentConfig) -> PropertyResult:
    gated = _outside_regime(cfg, "bounds")
    if gated:
        return gated
    well = DoubleWell()
    minus, plus = sigma_pair(well, cfg.env.q, (0.25, 0.125), cfg.solver, n=1)
    nu = cfg.nu_list[0]
    est = f_hom_estimate(cfg.env, nu, cfg.r_list, cfg.seeds[:2] or (0,), None, cfg.solver, cfg.h)
    report = bounds_check(est.estimate, minus.value, plus.value, cfg.env.c1, cfg.env.c2)
    return PropertyResult(
        "bounds",
        report.passed,
        f"{report.lower:.4g} <= {report.value:.4g} <= {report.upper:.4g}",
    )


def _prop_monotonicity(cfg: ExperimentConfig) -> PropertyResult:
    gated = _outside_regime(cfg, "monotonicity")
    if gated:
        return gated
    env = make_environment(cfg.env)
    nu = cfg.nu_list[0]
    eps = min(cfg.epsilon_list) if cfg.epsilon_list else 0.125
    c_eta = compute_c_eta(DoubleWell(), cfg.env.q)
    rhos = [4 * eps, 8 * eps, 16 * eps]
    seq = []
    for rho in rhos:
        rec = eps_scaled_cell(env, nu, rho, eps, (0.0,) * cfg.dimension, cfg.solver, h=eps / 4.0)
        seq.append(rec.m_hat - cfg.env.c2 * c_eta * rho ** (cfg.dimension - 1))
    ok = all(seq[i + 1] <= seq[i] + 0.02 * abs(seq[i]) + 1e-9 for i in range(len(seq) - 1))
    return PropertyResult("monotonicity", ok, f"sequence {['%.4g' % s for s in seq]}")


def _prop_growth_random_env(cfg: ExperimentConfig) -> PropertyResult:
    env = make_environment(cfg.env)
    report = verify_growth_bounds(env, samples=400, n=cfg.dimension, seed=5)
    return PropertyResult("growth-pointwise", report.passed, f"{len(report.counterexamples)} counterexamples")


def run_property_suite(cfg: ExperimentConfig) -> list[PropertyResult]:
    checks = [
        _prop_gradient,
        _prop_growth,
        _prop_growth_random_env,
        _prop_positivity,
        _prop_mu_bounds,
        _prop_subadditivity,
        _prop_stationarity,
        _prop_bounds,
        _prop_monotonicity,
    ]
    return [check(cfg) for check in checks]
