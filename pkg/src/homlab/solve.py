"""Nonconvex descent over free nodes: two-point adaptive steps, monotone acceptance, restarts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import Environment
from .geometry import rotation_for
from .grids import EnergyModel, EnergyParams, GridField
from .core import DEFAULT_PROFILE

__all__ = ["SolverConfig", "SolveResult", "DivergenceError", "minimize_energy", "glue_fields"]


class DivergenceError(RuntimeError):
    """Raised when the energy turns non-finite during descent."""


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule, step rule, and restart policy for minimize_energy.

    grad_tol = None resolves to 1e-6 * h^n at solve time (gradient entries scale
    with the cell volume).  `restarts` counts perturbed re-solves on top of the
    unperturbed first pass.
    """

    max_iters: int = 50_000
    grad_tol: float | None = None
    step_rule: str = "adaptive"  # "adaptive" (two-point) | "fixed"
    fixed_step: float | None = None
    restarts: int = 3
    noise_scale: float = 0.05
    noise_seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.step_rule not in ("adaptive", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == "fixed" and not self.fixed_step:
            raise ValueError("fixed step rule needs fixed_step")


@dataclass
class SolveResult:
    field: GridField
    value: float
    iters: int
    final_grad_norm: float
    converged: bool
    restarts_used: int = 0
    diagnostics: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        """JSON-serializable summary (the field itself is exported separately)."""
        return {
            "value": self.value,
            "iters": self.iters,
            "final_grad_norm": self.final_grad_norm,
            "converged": self.converged,
            "restarts_used": self.restarts_used,
            "shape": list(self.field.shape),
            "h": self.field.h,
            "nu": list(self.field.direction.nu),
            **{k: v for k, v in self.diagnostics.items() if isinstance(v, (int, float, str, bool))},
        }


def _initial_step(model: EnergyModel) -> float:
    # crude curvature bound of the quadratic-form terms; refined by the two-point rule
    h, eps, n = model.h, model.eps, model.n
    a_hi = float(np.max(model.a))
    b_hi = float(np.max(np.abs(model.b)))
    c_hi = float(np.max(model.c))
    lip = h**n * (104.0 * a_hi / eps + 8.0 * n * b_hi * eps / h**2 + 32.0 * n**2 * c_hi * eps**3 / h**4)
    return 1.0 / lip


def _descend(model: EnergyModel, u0: np.ndarray, cfg: SolverConfig, grad_tol: float, cap: float):
    """Two-point adaptive gradient iteration with best-so-far tracking.

    The raw trajectory may oscillate (that is what makes the two-point step fast
    on the stiff fourth-order term); accepted states are the best-so-far ones,
    so the reported energy sequence is nonincreasing.  A blow-up beyond the best
    energy by a wide margin resets the trajectory to the best state with a
    smaller step; a non-finite energy raises DivergenceError.
    """
    u = np.clip(u0, -cap, cap)
    energy, grad = model.value_and_gradient(u)
    if not np.isfinite(energy):
        raise DivergenceError(f"initial energy is not finite ({energy})")
    t0 = cfg.fixed_step if cfg.fixed_step else _initial_step(model)
    t = t0
    best_u, best_e = u.copy(), energy
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    converged = gnorm <= grad_tol
    iters = 0
    resets = 0
    while iters < cfg.max_iters and not converged:
        iters += 1
        trial = np.clip(u - t * grad, -cap, cap)
        e_trial, grad_new = model.value_and_gradient(trial)
        if not np.isfinite(e_trial):
            resets += 1
            if resets > 60:
                raise DivergenceError(f"energy diverged at iteration {iters} (step {t})")
            u, (energy, grad) = best_u.copy(), model.value_and_gradient(best_u)
            t = max(t * 0.01, 1e-300)
            continue
        if e_trial > best_e + 1e3 * (abs(best_e) + 1.0):
            # runaway trajectory: restart from the record with a cautious step
            resets += 1
            u, (energy, grad) = best_u.copy(), model.value_and_gradient(best_u)
            t *= 0.1
            continue
        if cfg.step_rule == "adaptive":
            s = trial - u
            y = grad_new - grad
            sy = float(np.sum(s * y))
            ss = float(np.sum(s * s))
            if np.isfinite(sy) and sy > 0.0:
                t = min(max(ss / sy, 1e-12 * t0), 1e14 * t0)
            else:
                t *= 2.0
        u, energy, grad = trial, e_trial, grad_new
        if energy < best_e:
            best_e = energy
            best_u = u.copy()
        gnorm = float(np.max(np.abs(grad)))
        converged = gnorm <= grad_tol
    if converged and energy <= best_e:
        best_u, best_e = u, energy
        final_gnorm = gnorm
    else:
        final_gnorm = float(np.max(np.abs(model.gradient(best_u)))) if best_u.size else 0.0
    return best_u, best_e, iters, final_gnorm, converged


def minimize_energy(
    initial: GridField,
    env: Environment,
    params: EnergyParams,
    cfg: SolverConfig = SolverConfig(),
) -> SolveResult:
    """Monotone descent from `initial` (plus perturbed restarts); returns the best pass.

    Accepted iterates never increase the energy, frozen nodes are preserved
    bit-exactly, and the reported value is the discrete energy of the returned
    field.  The value has upper-bound semantics for the underlying infimum.
    """
    model = EnergyModel(initial, env, params)
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-6 * initial.h**initial.n
    cap = initial.u_cap
    if initial.frozen.any() and float(np.max(np.abs(initial.values[initial.frozen]))) > cap:
        raise ValueError("frozen boundary data exceeds the value cap")

    free = initial.free_mask()
    best = None
    total_iters = 0
    for attempt in range(1 + max(0, cfg.restarts)):
        u0 = initial.values.copy()
        if attempt > 0:
            rng = np.random.Generator(np.random.Philox(key=cfg.noise_seed, counter=attempt))
            u0[free] += cfg.noise_scale * rng.standard_normal(int(free.sum()))
        u, energy, iters, gnorm, converged = _descend(model, u0, cfg, grad_tol, cap)
        total_iters += iters
        if best is None or energy < best[1]:
            best = (u, energy, gnorm, converged, attempt)
    u, energy, gnorm, converged, which = best
    out = initial.copy_with(u)
    return SolveResult(
        field=out,
        value=model.energy(u),
        iters=total_iters,
        final_grad_norm=gnorm,
        converged=converged,
        restarts_used=max(0, cfg.restarts),
        diagnostics={"best_attempt": which, "grad_tol": grad_tol},
    )


# ---------------------------------------------------------------------------
# Cutoff gluing of fields on overlapping boxes
# ---------------------------------------------------------------------------


def glue_fields(u_field: GridField, v_field: GridField, axis: int, blend_lo: float, blend_hi: float) -> GridField:
    """C2-cutoff blend of two fields across an overlap slab along one local axis.

    The output equals u below blend_lo, v above blend_hi, and the smoothstep
    combination phi*u + (1-phi)*v in between.  Both fields must share h,
    direction, and lattice alignment; their boxes may differ only along `axis`.
    """
    if abs(u_field.h - v_field.h) > 1e-12 or u_field.n != v_field.n:
        raise ValueError("glued fields must share spacing and dimension")
    if u_field.direction.nu != v_field.direction.nu:
        raise ValueError("glued fields must share orientation")
    h, n = u_field.h, u_field.n
    if blend_hi - blend_lo < 4.0 * h - 1e-9:
        raise ValueError("overlap must span at least 4 cells")

    # compare boxes in the shared rotated frame (fold each physical shift into lo)
    rot = rotation_for(u_field.direction)

    def absolute_lo(f: GridField) -> np.ndarray:
        return np.asarray(f.lo) + rot.T @ np.asarray(f.physical_shift)

    u_lo = absolute_lo(u_field)
    v_lo = absolute_lo(v_field)
    for a in range(n):
        off = (v_lo[a] - u_lo[a]) / h
        if abs(off - round(off)) > 1e-9:
            raise ValueError("grids are not lattice-aligned")
        if a != axis and (abs(u_lo[a] - v_lo[a]) > 1e-9 or u_field.shape[a] != v_field.shape[a]):
            raise ValueError("boxes may differ only along the blend axis")

    lo = min(u_lo[axis], v_lo[axis])
    hi = max(
        u_lo[axis] + u_field.shape[axis] * h,
        v_lo[axis] + v_field.shape[axis] * h,
    )
    count = int(round((hi - lo) / h))
    coords = lo + (np.arange(count) + 0.5) * h

    def span(f: GridField) -> tuple[int, int]:
        start = int(round((absolute_lo(f)[axis] - lo) / h))
        return start, start + f.shape[axis]

    u_start, u_end = span(u_field)
    v_start, v_end = span(v_field)
    u_cover_hi = lo + u_end * h
    v_cover_lo = lo + v_start * h
    if blend_hi > u_cover_hi + 1e-9 or blend_lo < v_cover_lo - 1e-9:
        raise ValueError("blend window must be covered by both fields")

    shape = list(u_field.shape)
    shape[axis] = count
    frozen = np.zeros(shape, dtype=bool)

    # smoothstep weight for u: 1 below the window, 0 above
    s = np.clip((coords - blend_lo) / (blend_hi - blend_lo), 0.0, 1.0)
    phi = 1.0 - (1.0 + DEFAULT_PROFILE(s - 0.5)) / 2.0
    w_shape = [1] * n
    w_shape[axis] = count
    phi = phi.reshape(w_shape)

    u_big = np.zeros(shape)
    v_big = np.zeros(shape)
    u_cover = np.zeros(count, dtype=bool)
    v_cover = np.zeros(count, dtype=bool)
    idx = [slice(None)] * n
    idx[axis] = slice(u_start, u_end)
    u_big[tuple(idx)] = u_field.values
    u_cover[u_start:u_end] = True
    idx[axis] = slice(v_start, v_end)
    v_big[tuple(idx)] = v_field.values
    v_cover[v_start:v_end] = True
    # outside its own box each field contributes with weight zero
    only_u = (~v_cover).reshape(w_shape)
    only_v = (~u_cover).reshape(w_shape)
    weight_u = np.where(only_u, 1.0, np.where(only_v, 0.0, phi))
    # exact copies at weight 0/1 and exact pass-through where the fields agree
    blend = v_big + weight_u * (u_big - v_big)
    values = np.where(weight_u >= 1.0, u_big, np.where(weight_u <= 0.0, v_big, blend))

    idx[axis] = slice(u_start, u_end)
    frozen[tuple(idx)] |= u_field.frozen
    idx[axis] = slice(v_start, v_end)
    frozen[tuple(idx)] |= v_field.frozen

    new_lo = list(u_lo)
    new_lo[axis] = lo
    return GridField(
        direction=u_field.direction,
        lo=tuple(float(v) for v in new_lo),
        h=h,
        values=values,
        frozen=frozen,
        periodic=u_field.periodic,
        physical_shift=(0.0,) * n,
        geometry=None,
        u_cap=u_field.u_cap,
    )
