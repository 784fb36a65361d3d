"""Cell problems and limit objects: transition constants, slab process, homogenized density.

Every solved value here is an upper bound for the corresponding infimum; all
inequality checks downstream are phrased in the direction that upper bounds
preserve, with configurable slack for solver tolerance.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import DoubleWell, compute_c_eta
from .environment import Environment, EnvironmentSpec, make_environment
from .geometry import Direction, LatticeCuboid, OrientedCube
from .grids import (
    EnergyModel,
    EnergyParams,
    ResolutionError,
    box_grid,
    cube_grid,
    cuboid_grid,
    frame_width_for,
    profile_values,
    slab_grid,
)
from .solve import SolverConfig, SolveResult, minimize_energy

__all__ = [
    "CellRecord",
    "SigmaEstimate",
    "MuSample",
    "FHomEstimate",
    "ErgodicAverage",
    "PositivityReport",
    "BoundsReport",
    "sigma_pm",
    "sigma_pair",
    "cell_problem_r",
    "eps_scaled_cell",
    "mu_nu",
    "glued_partition_energy",
    "f_hom_estimate",
    "ergodic_average",
    "verify_positivity",
    "bounds_check",
]

SOLVER_SLACK = 1e-6
MINUS_VARIANT_Q_MAX = 0.25


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class CellRecord:
    """One solved cell problem and its normalized value (an f_hom sample)."""

    nu: Direction
    r: float
    epsilon: float
    seed: int
    x0: tuple[float, ...]
    m_hat: float
    normalized: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics.get("converged", False))


@dataclass
class SigmaEstimate:
    """Upper bound for one optimal transition constant, minimized over a scale grid."""

    variant: str
    value: float
    epsilon_grid: tuple[float, ...]
    best_epsilon: float
    per_epsilon: dict


@dataclass
class MuSample:
    """One evaluation of the subadditive slab process."""

    cuboid: LatticeCuboid
    seed: int
    value: float
    raw_value: float
    fallback: bool
    anomaly: bool
    diagnostics: dict = field(default_factory=dict)


@dataclass
class FHomEstimate:
    """Per-seed extrapolated limits of normalized cell values plus spread diagnostics."""

    nu: Direction
    estimate: float
    stderr: float
    per_seed_limit: dict
    records: list
    x0_spread: dict
    r_schedule: tuple[float, ...]


@dataclass
class ErgodicAverage:
    mean: float
    stderr: float
    values: tuple[float, ...]


@dataclass
class PositivityReport:
    q: float
    sides: tuple[float, ...]
    minimum: float
    per_start: tuple[float, ...]
    passed: bool


@dataclass
class BoundsReport:
    value: float
    lower: float
    upper: float
    passed: bool


# ---------------------------------------------------------------------------
# Transition constants sigma+-
# ---------------------------------------------------------------------------


def _slab_solve(variant: str, q: float, epsilon: float, h: float, n: int, cfg: SolverConfig,
                well: DoubleWell) -> SolveResult:
    grid = slab_grid(1.0, h, frame_width_for(h, epsilon, "slab"), n=n)
    grid.values[...] = profile_values(grid, epsilon)
    # admissible datum is exactly +-1 near the top/bottom faces
    sign_col = np.sign(grid.axis_coords(n - 1))
    shape = [1] * n
    shape[-1] = len(sign_col)
    signs = np.broadcast_to(sign_col.reshape(shape), grid.shape)
    grid.values[grid.frozen] = signs[grid.frozen]
    env = make_environment(EnvironmentSpec(q=q), well)
    return minimize_energy(grid, env, EnergyParams(epsilon, variant), cfg)


def sigma_pm(
    variant: str,
    well: DoubleWell,
    q: float,
    epsilon_grid,
    cfg: SolverConfig = SolverConfig(),
    n: int = 1,
    h_for=None,
    minus_q_max: float = MINUS_VARIANT_Q_MAX,
) -> SigmaEstimate:
    """Upper bound for sigma+ or sigma-: min over the scale grid of unit-slab solves.

    The slab is the unit cube with periodic lateral faces and values frozen to
    +-1 near the top/bottom faces; each admissible scale contributes one solve.
    Scales the mesh cannot resolve are skipped with a warning.  The minus
    variant is gated to small q, where the comparison energy stays positive.
    """
    if variant not in ("plus", "minus"):
        raise ValueError("variant must be 'plus' or 'minus'")
    if variant == "minus" and q > minus_q_max:
        raise ValueError(f"minus variant requires q <= {minus_q_max} (got {q})")
    if h_for is None:
        h_for = lambda eps: eps / 8.0
    per_eps = {}
    for eps in epsilon_grid:
        if not 0.0 < eps <= 1.0:
            raise ValueError("scales must lie in (0, 1]")
        h = h_for(eps)
        try:
            res = _slab_solve("m_plus" if variant == "plus" else "m_minus", q, eps, h, n, cfg, well)
        except ResolutionError as exc:
            warnings.warn(f"skipping unresolved scale {eps}: {exc}")
            continue
        if not res.field.free_mask().any():
            # frame covers the whole slab: the datum is the only competitor
            warnings.warn(f"skipping degenerate scale {eps}: frozen frame fills the unit slab")
            continue
        per_eps[eps] = res.value
    if not per_eps:
        raise ValueError("no resolvable scale in the grid")
    best_eps = min(per_eps, key=per_eps.get)
    return SigmaEstimate(
        variant=variant,
        value=per_eps[best_eps],
        epsilon_grid=tuple(epsilon_grid),
        best_epsilon=best_eps,
        per_epsilon=per_eps,
    )


def sigma_pair(
    well: DoubleWell,
    q: float,
    epsilon_grid,
    cfg: SolverConfig = SolverConfig(),
    n: int = 1,
) -> tuple[SigmaEstimate, SigmaEstimate]:
    """(sigma-_hat, sigma+_hat) with the minus bound also fed the plus minimizers.

    Evaluating the minus energy on the plus minimizer keeps the estimated pair
    ordered (the minus integrand is dominated pointwise) while remaining a valid
    upper bound for sigma-.
    """
    plus = sigma_pm("plus", well, q, epsilon_grid, cfg, n=n)
    minus = sigma_pm("minus", well, q, epsilon_grid, cfg, n=n)
    env = make_environment(EnvironmentSpec(q=q), well)
    per_eps = dict(minus.per_epsilon)
    for eps in plus.per_epsilon:
        res = _slab_solve("m_plus", q, eps, eps / 8.0, n, cfg, well)
        minus_at_plus = EnergyModel(res.field, env, EnergyParams(eps, "m_minus")).energy(res.field.values)
        per_eps[eps] = min(per_eps.get(eps, np.inf), minus_at_plus)
    best_eps = min(per_eps, key=per_eps.get)
    minus = SigmaEstimate("minus", per_eps[best_eps], minus.epsilon_grid, best_eps, per_eps)
    return minus, plus


# ---------------------------------------------------------------------------
# Cell problems
# ---------------------------------------------------------------------------


def _solve_profile_cell(
    env: Environment,
    cube: OrientedCube,
    epsilon: float,
    h: float,
    cfg: SolverConfig,
) -> SolveResult:
    grid = cube_grid(cube, h, frame_width_for(h, epsilon, "cell"))
    grid.values[...] = profile_values(grid, epsilon)
    return minimize_energy(grid, env, EnergyParams(epsilon, "general"), cfg)


def cell_problem_r(
    env: Environment,
    nu: Direction,
    r: float,
    x0,
    cfg: SolverConfig = SolverConfig(),
    h: float = 0.25,
) -> CellRecord:
    """Unit-scale cell problem on the cube of side r centered at r*x0.

    Boundary datum is the width-1 transition ramp through the center; the
    normalized value m_hat / r^(n-1) is one sample of the homogenized density.
    """
    if r < 4:
        raise ValueError("cell problems need r >= 4")
    x0 = tuple(float(v) for v in np.atleast_1d(x0))
    center = tuple(r * v for v in x0)
    cube = OrientedCube(center, float(r), nu)
    t0 = time.perf_counter()
    res = _solve_profile_cell(env, cube, 1.0, h, cfg)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    normalized = res.value / r ** (nu.n - 1)
    return CellRecord(
        nu=nu,
        r=float(r),
        epsilon=1.0,
        seed=env.spec.seed,
        x0=x0,
        m_hat=res.value,
        normalized=normalized,
        diagnostics={
            "iters": res.iters,
            "grad_norm": res.final_grad_norm,
            "converged": res.converged,
            "wall_ms": wall_ms,
            "h": h,
        },
    )


def eps_scaled_cell(
    env: Environment,
    nu: Direction,
    rho: float,
    epsilon: float,
    x0,
    cfg: SolverConfig = SolverConfig(),
    h: float | None = None,
) -> CellRecord:
    """Scaled cell problem on the cube of side rho centered at x0, at scale epsilon.

    Under the change of variables r = rho/epsilon this is the unit-scale problem
    on matched grids, so normalized = m_hat / rho^(n-1) approximates the same
    density sample as cell_problem_r(r).
    """
    if rho < 4.0 * epsilon - 1e-12:
        raise ValueError("need rho >= 4*epsilon so the transition fits inside")
    if h is None:
        h = epsilon / 4.0
    x0 = tuple(float(v) for v in np.atleast_1d(x0))
    cube = OrientedCube(x0, float(rho), nu)
    t0 = time.perf_counter()
    res = _solve_profile_cell(env, cube, epsilon, h, cfg)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    normalized = res.value / rho ** (nu.n - 1)
    return CellRecord(
        nu=nu,
        r=rho / epsilon,
        epsilon=epsilon,
        seed=env.spec.seed,
        x0=x0,
        m_hat=res.value,
        normalized=normalized,
        diagnostics={
            "iters": res.iters,
            "grad_norm": res.final_grad_norm,
            "converged": res.converged,
            "wall_ms": wall_ms,
            "h": h,
            "rho": rho,
        },
    )


# ---------------------------------------------------------------------------
# Subadditive slab process
# ---------------------------------------------------------------------------


def _cuboid_solution(env: Environment, cuboid: LatticeCuboid, cfg: SolverConfig, h: float) -> SolveResult:
    grid = cuboid_grid(cuboid, h, frame_width_for(h, 1.0, "cell"))
    grid.values[...] = profile_values(grid, 1.0)
    return minimize_energy(grid, env, EnergyParams(1.0, "general"), cfg)


def mu_nu(
    env: Environment,
    cuboid: LatticeCuboid,
    cfg: SolverConfig = SolverConfig(),
    h: float = 0.25,
) -> MuSample:
    """Value of the subadditive slab process on one base cuboid.

    Bases with every side of length >= 1 are solved (value m_hat / M^(n-1));
    smaller bases take the deterministic fallback c2 * C_eta * area, matching
    the branch where the solved value is not sign-controlled.  A solved value
    below -SOLVER_SLACK is clamped to zero and flagged as an anomaly.
    """
    m = cuboid.m_nu
    n = cuboid.n
    spec = env.spec
    if min(cuboid.base_lengths) < 1.0:
        c_eta = compute_c_eta(env.well, spec.q)
        value = spec.c2 * c_eta * cuboid.base_area
        return MuSample(cuboid, spec.seed, value, value, fallback=True, anomaly=False)
    t0 = time.perf_counter()
    res = _cuboid_solution(env, cuboid, cfg, h)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    raw = res.value / m ** (n - 1)
    anomaly = raw < -SOLVER_SLACK
    value = max(raw, 0.0) if anomaly else raw
    return MuSample(
        cuboid,
        spec.seed,
        value,
        raw,
        fallback=False,
        anomaly=anomaly,
        diagnostics={"iters": res.iters, "converged": res.converged, "wall_ms": wall_ms, "h": h},
    )


def glued_partition_energy(
    env: Environment,
    cuboid: LatticeCuboid,
    cut_points,
    cfg: SolverConfig = SolverConfig(),
    h: float = 0.25,
) -> dict:
    """Paste sub-cuboid minimizers into the full slab and evaluate its energy.

    `cut_points` split the (1d) base interval into parts; each part is solved
    on its own cuboid, the minimizers are pasted into the full grid (they agree
    with the boundary ramp on the collars), and the leftover region keeps the
    ramp, whose integrand vanishes there.  Returns the glued energy and the sum
    of the part minima; subadditivity predicts glued <= sum to rounding.
    """
    if cuboid.n != 2:
        raise NotImplementedError("partition gluing is implemented for n = 2")
    (a, b), = cuboid.base
    cuts = sorted(float(c) for c in cut_points)
    if any(not a < c < b for c in cuts):
        raise ValueError("cut points must fall inside the base interval")
    edges = [a] + cuts + [b]
    m = cuboid.m_nu

    big = cuboid_grid(cuboid, h, frame_width_for(h, 1.0, "cell"))
    big.values[...] = profile_values(big, 1.0)
    lo_lat, lo_vert = big.lo

    parts = []
    total = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        part = LatticeCuboid(((left, right),), cuboid.direction)
        res = _cuboid_solution(env, part, cfg, h)
        total += res.value
        parts.append((part, res))
        bounds = part.local_bounds()
        off_lat = (bounds[0][0] - lo_lat) / h
        off_vert = (bounds[1][0] - lo_vert) / h
        if abs(off_lat - round(off_lat)) > 1e-9 or abs(off_vert - round(off_vert)) > 1e-9:
            raise ValueError("partition is not commensurate with the mesh")
        i0, j0 = int(round(off_lat)), int(round(off_vert))
        ni, nj = res.field.shape
        big.values[i0 : i0 + ni, j0 : j0 + nj] = res.field.values
    glued = EnergyModel(big, env, EnergyParams(1.0, "general")).energy(big.values)
    return {
        "glued_energy": glued,
        "sum_part_minima": total,
        "part_values": tuple(res.value for _, res in parts),
        "edges": tuple(edges),
        "slack": glued - total,
    }


# ---------------------------------------------------------------------------
# Homogenized density estimation
# ---------------------------------------------------------------------------


def _fit_limit(rs: np.ndarray, values: np.ndarray) -> float:
    """Least-squares fit of value = limit + A/r on the top three scales."""
    order = np.argsort(rs)[-3:]
    r, v = rs[order], values[order]
    if len(r) == 1:
        return float(v[0])
    design = np.stack([np.ones_like(r), 1.0 / r], axis=1)
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return float(coef[0])


def f_hom_estimate(
    spec: EnvironmentSpec,
    nu: Direction,
    r_schedule,
    seeds,
    x0_list=None,
    cfg: SolverConfig = SolverConfig(),
    h: float = 0.25,
    well: DoubleWell | None = None,
) -> FHomEstimate:
    """Estimate the homogenized density for one normal direction.

    For every (seed, r, x0) a unit-scale cell problem is solved; per-seed
    limits extrapolate the x0-averaged normalized values in 1/r over the top
    three scales (boundary-frame heuristic, reported alongside raw records).
    Non-converged solves are excluded with a warning.
    """
    r_schedule = tuple(sorted(float(r) for r in r_schedule))
    if r_schedule[0] < 4:
        raise ValueError("r schedule must start at 4 or above")
    if not seeds:
        raise ValueError("need at least one seed")
    if x0_list is None:
        x0_list = ((0.0,) * nu.n,)
    records = []
    per_seed_limit = {}
    x0_spread = {}
    r_max = r_schedule[-1]
    for seed in seeds:
        env = make_environment(spec.with_seed(seed), well)
        by_r = {}
        top_r_values = []
        for r in r_schedule:
            vals = []
            for x0 in x0_list:
                rec = cell_problem_r(env, nu, r, x0, cfg, h)
                records.append(rec)
                if not rec.converged:
                    warnings.warn(f"excluding non-converged solve (seed={seed}, r={r}, x0={x0})")
                    continue
                vals.append(rec.normalized)
                if r == r_max:
                    top_r_values.append(rec.normalized)
            if vals:
                by_r[r] = float(np.mean(vals))
        if len(by_r) >= 2:
            rs = np.array(sorted(by_r))
            vs = np.array([by_r[r] for r in rs])
            per_seed_limit[seed] = _fit_limit(rs, vs)
        elif by_r:
            per_seed_limit[seed] = next(iter(by_r.values()))
        if len(top_r_values) > 1:
            mean = float(np.mean(top_r_values))
            x0_spread[seed] = float((np.max(top_r_values) - np.min(top_r_values)) / abs(mean))
    limits = np.array([per_seed_limit[s] for s in per_seed_limit])
    estimate = float(np.mean(limits))
    stderr = float(np.std(limits, ddof=1) / np.sqrt(len(limits))) if len(limits) > 1 else 0.0
    return FHomEstimate(
        nu=nu,
        estimate=estimate,
        stderr=stderr,
        per_seed_limit=per_seed_limit,
        records=records,
        x0_spread=x0_spread,
        r_schedule=r_schedule,
    )


def ergodic_average(
    spec: EnvironmentSpec,
    nu: Direction,
    r: float,
    seeds,
    cfg: SolverConfig = SolverConfig(),
    h: float = 0.25,
    well: DoubleWell | None = None,
) -> ErgodicAverage:
    """Monte-Carlo mean over seeds of the normalized cell value at one scale."""
    seeds = tuple(seeds)
    if len(seeds) < 2:
        raise ValueError("averaging needs at least two seeds")
    origin = (0.0,) * nu.n
    values = []
    for seed in seeds:
        env = make_environment(spec.with_seed(seed), well)
        values.append(cell_problem_r(env, nu, r, origin, cfg, h).normalized)
    values = np.array(values)
    return ErgodicAverage(
        mean=float(values.mean()),
        stderr=float(values.std(ddof=1) / np.sqrt(len(values))),
        values=tuple(float(v) for v in values),
    )


# ---------------------------------------------------------------------------
# Property checks
# ---------------------------------------------------------------------------


def verify_positivity(
    q: float,
    sides=(1.0, 1.0),
    h: float = 1.0 / 16.0,
    n_starts: int = 5,
    cfg: SolverConfig = SolverConfig(restarts=0),
    seed: int = 0,
    well: DoubleWell | None = None,
    threshold: float = -SOLVER_SLACK,
    epsilon: float = 1.0,
) -> PositivityReport:
    """Free minimization of the minus comparison energy from random starts.

    At epsilon = 1 this probes int W - q|grad u|^2 + |hess u|^2 >= 0 on boxes
    with all sides >= 1; smaller epsilon probes the scaled smallness inequality
    (gradient term controlled by potential plus second-gradient terms).  Small q
    keeps the infimum nonnegative; large q leaves the validity regime and
    genuinely negative minima are expected (and reported, not hidden).
    """
    sides = tuple(float(s) for s in sides)
    if min(sides) < 1.0:
        raise ValueError("positivity regime needs all sides >= 1")
    n = len(sides)
    direction = Direction.from_integers(*([0] * (n - 1) + [1]))
    env = make_environment(EnvironmentSpec(q=q), well)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(max(1, n_starts)):
        grid = box_grid(direction, (0.0,) * n, sides, h)
        grid.values[...] = rng.uniform(-1.5, 1.5, grid.shape)
        res = minimize_energy(grid, env, EnergyParams(epsilon, "m_minus"), cfg)
        values.append(res.value)
    minimum = float(min(values))
    return PositivityReport(
        q=q,
        sides=sides,
        minimum=minimum,
        per_start=tuple(values),
        passed=minimum >= threshold,
    )


def bounds_check(
    f_hom_value: float,
    sigma_minus: float,
    sigma_plus: float,
    c1: float,
    c2: float,
    slack: float = 0.05,
) -> BoundsReport:
    """Check c1*sigma- <= f_hom <= c2*sigma+ with relative slack on both sides.

    Both sigma inputs are solver upper bounds; using the minus bound on the left
    only tightens the test.
    """
    lower = c1 * sigma_minus * (1.0 - slack)
    upper = c2 * sigma_plus * (1.0 + slack)
    return BoundsReport(
        value=f_hom_value,
        lower=lower,
        upper=upper,
        passed=lower <= f_hom_value <= upper,
    )
