"""Uniform grids on oriented cubes and cuboids, finite-difference stencils, discrete energies.

Grids are cell-centered in local rotated coordinates (axis -1 along the interface
normal).  Stencils pad by edge replication on clamped axes and wrap on periodic
axes; for profile-type boundary data the clamped ghost values coincide with the
datum, so the lattice edge introduces no error beyond the frame convention itself.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import DoubleWell, TransitionProfile, DEFAULT_PROFILE
from .environment import Environment
from .geometry import Direction, LatticeCuboid, OrientedCube, rotation_for

__all__ = [
    "GridField",
    "EnergyParams",
    "ResolutionError",
    "box_grid",
    "cube_grid",
    "slab_grid",
    "cuboid_grid",
    "frame_width_for",
    "profile_field",
    "profile_values",
    "discrete_gradient",
    "discrete_hessian",
    "discrete_energy",
    "discrete_energy_gradient",
    "EnergyModel",
]

U_CAP = 3.0

FREE, FROZEN_DIRICHLET, PERIODIC_PAIR = np.uint8(0), np.uint8(1), np.uint8(2)


class ResolutionError(ValueError):
    """Raised when the mesh cannot resolve the requested transition width."""


# ---------------------------------------------------------------------------
# Grid container
# ---------------------------------------------------------------------------


@dataclass
class GridField:
    """Scalar field on a uniform cell-centered lattice in local rotated coordinates.

    `lo` is the low corner of the local box, `physical_shift` the translation
    applied after rotating local coordinates (the cube center, or zero for
    cuboids).  Frozen nodes are never touched by solvers; periodic axes wrap.
    """

    direction: Direction
    lo: tuple[float, ...]
    h: float
    values: np.ndarray
    frozen: np.ndarray
    periodic: tuple[bool, ...]
    physical_shift: tuple[float, ...]
    geometry: object = None
    u_cap: float = U_CAP

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def sides(self) -> tuple[float, ...]:
        return tuple(m * self.h for m in self.shape)

    def axis_coords(self, axis: int) -> np.ndarray:
        m = self.shape[axis]
        return self.lo[axis] + (np.arange(m) + 0.5) * self.h

    def local_points(self) -> np.ndarray:
        grids = np.meshgrid(*(self.axis_coords(a) for a in range(self.n)), indexing="ij")
        return np.stack(grids, axis=-1)

    def physical_points(self) -> np.ndarray:
        rot = rotation_for(self.direction)
        return self.local_points() @ rot.T + np.asarray(self.physical_shift)

    def copy_with(self, values: np.ndarray) -> "GridField":
        if values.shape != self.values.shape:
            raise ValueError("replacement values have the wrong shape")
        return dataclasses.replace(self, values=values)

    def free_mask(self) -> np.ndarray:
        return ~self.frozen

    def boundary_mask(self) -> np.ndarray:
        """Per-node flags: 0 free, 1 frozen-Dirichlet, 2 periodic-pair (wrapped axes)."""
        mask = np.zeros(self.shape, dtype=np.uint8)
        for axis, wrap in enumerate(self.periodic):
            if not wrap:
                continue
            edge = [slice(None)] * self.n
            for side in (0, -1):
                edge[axis] = side
                mask[tuple(edge)] = PERIODIC_PAIR
        mask[self.frozen] = FROZEN_DIRICHLET
        return mask


def frame_width_for(h: float, epsilon: float, kind: str = "cell") -> float:
    """Frozen Dirichlet frame width: max(2h, eps) for cell problems, max(2h, eps/2) for slabs."""
    if kind == "cell":
        return max(2.0 * h, epsilon)
    if kind == "slab":
        return max(2.0 * h, 0.5 * epsilon)
    raise ValueError(f"unknown frame kind {kind!r}")


def _node_counts(sides, h: float) -> tuple[int, ...]:
    counts = []
    for side in sides:
        m = int(round(side / h))
        if m < 1 or abs(m * h - side) > 1e-9:
            raise ValueError(f"spacing {h} does not divide side {side}")
        counts.append(m)
    return tuple(counts)


def box_grid(
    direction: Direction,
    lo,
    sides,
    h: float,
    physical_shift=None,
    frame_width: float = 0.0,
    periodic_axes: tuple[bool, ...] | None = None,
    geometry=None,
) -> GridField:
    """Empty grid over the local box prod [lo_k, lo_k + sides_k); general constructor."""
    lo = tuple(float(v) for v in lo)
    sides = tuple(float(v) for v in sides)
    n = len(sides)
    counts = _node_counts(sides, h)
    periodic = tuple(periodic_axes) if periodic_axes is not None else (False,) * n
    if physical_shift is None:
        physical_shift = (0.0,) * n
    values = np.zeros(counts)
    frozen = np.zeros(counts, dtype=bool)
    if frame_width > 0:
        tol = 1e-9 * h
        for axis in range(n):
            if periodic[axis]:
                continue
            coords = lo[axis] + (np.arange(counts[axis]) + 0.5) * h
            near = (coords - lo[axis] < frame_width - tol) | (lo[axis] + sides[axis] - coords < frame_width - tol)
            shape = [1] * n
            shape[axis] = counts[axis]
            frozen |= near.reshape(shape)
    return GridField(
        direction=direction,
        lo=lo,
        h=h,
        values=values,
        frozen=frozen,
        periodic=periodic,
        physical_shift=tuple(float(v) for v in physical_shift),
        geometry=geometry,
    )


def cube_grid(cube: OrientedCube, h: float, frame_width: float, periodic_lateral: bool = False) -> GridField:
    """Grid on an oriented cube with a frozen Dirichlet frame on non-periodic faces."""
    n = cube.n
    periodic = tuple([periodic_lateral] * (n - 1) + [False])
    return box_grid(
        cube.direction,
        lo=(-cube.side / 2.0,) * n,
        sides=(cube.side,) * n,
        h=h,
        physical_shift=cube.center,
        frame_width=frame_width,
        periodic_axes=periodic,
        geometry=cube,
    )


def slab_grid(side: float, h: float, frame_width: float, n: int = 1, direction: Direction | None = None) -> GridField:
    """Laterally periodic grid on an axis cube, frozen only near the top/bottom faces."""
    if direction is None:
        direction = Direction.from_integers(*([0] * (n - 1) + [1]))
    cube = OrientedCube((0.0,) * n, side, direction)
    return cube_grid(cube, h, frame_width, periodic_lateral=True)


def cuboid_grid(cuboid: LatticeCuboid, h: float, frame_width: float) -> GridField:
    bounds = cuboid.local_bounds()
    return box_grid(
        cuboid.direction,
        lo=tuple(b[0] for b in bounds),
        sides=tuple(b[1] - b[0] for b in bounds),
        h=h,
        frame_width=frame_width,
        geometry=cuboid,
    )


# ---------------------------------------------------------------------------
# Profile data
# ---------------------------------------------------------------------------


def profile_values(
    grid: GridField,
    epsilon: float,
    normal_offset: float = 0.0,
    profile: TransitionProfile = DEFAULT_PROFILE,
) -> np.ndarray:
    """eta((t_n + offset)/eps) as node values; constant along lateral axes by construction."""
    t = grid.axis_coords(grid.n - 1) + normal_offset
    column = profile(t / epsilon)
    shape = [1] * grid.n
    shape[-1] = len(column)
    return np.broadcast_to(column.reshape(shape), grid.shape).copy()


def profile_field(
    cube: OrientedCube,
    nu,
    x0,
    epsilon: float,
    h: float,
    frame_width: float | None = None,
    periodic_lateral: bool = False,
    profile: TransitionProfile = DEFAULT_PROFILE,
) -> GridField:
    """Regularized-jump field eta(((y - x0) . nu)/eps) sampled on a cube grid.

    When nu is the cube's own axis the values are computed from the local normal
    coordinate (exactly constant along lateral node lines); otherwise they fall
    back to physical dot products.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    d = nu if isinstance(nu, Direction) else Direction.from_vector(nu)
    if frame_width is None:
        frame_width = frame_width_for(h, epsilon, "cell")
    grid = cube_grid(cube, h, frame_width, periodic_lateral=periodic_lateral)
    x0 = np.asarray(x0, dtype=float)
    if d.nu == cube.direction.nu:
        offset = float(np.dot(np.asarray(cube.center) - x0, np.asarray(d.nu)))
        grid.values[...] = profile_values(grid, epsilon, normal_offset=offset, profile=profile)
    else:
        signed = (grid.physical_points() - x0) @ np.asarray(d.nu)
        grid.values[...] = profile(signed / epsilon)
    return grid


# ---------------------------------------------------------------------------
# Stencils (forward and adjoint); second-order central differences
# ---------------------------------------------------------------------------


def _pad1(u: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    width = [(0, 0)] * u.ndim
    width[axis] = (1, 1)
    return np.pad(u, width, mode="wrap" if periodic else "edge")


def _sl(ndim: int, axis: int, s: slice):
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def _unpad_accumulate(w: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    nd = w.ndim
    core = w[_sl(nd, axis, slice(1, -1))].copy()
    first = w[_sl(nd, axis, slice(0, 1))]
    last = w[_sl(nd, axis, slice(-1, None))]
    if periodic:
        core[_sl(nd, axis, slice(-1, None))] += first
        core[_sl(nd, axis, slice(0, 1))] += last
    else:
        core[_sl(nd, axis, slice(0, 1))] += first
        core[_sl(nd, axis, slice(-1, None))] += last
    return core


def _d1(u: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    p = _pad1(u, axis, periodic)
    nd = p.ndim
    return (p[_sl(nd, axis, slice(2, None))] - p[_sl(nd, axis, slice(0, -2))]) / (2.0 * h)


def _d1_adjoint(w: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    nd = w.ndim
    pad_shape = list(w.shape)
    pad_shape[axis] += 2
    q = np.zeros(pad_shape)
    q[_sl(nd, axis, slice(2, None))] += w / (2.0 * h)
    q[_sl(nd, axis, slice(0, -2))] -= w / (2.0 * h)
    return _unpad_accumulate(q, axis, periodic)


def _d2(u: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    p = _pad1(u, axis, periodic)
    nd = p.ndim
    return (
        p[_sl(nd, axis, slice(2, None))] - 2.0 * p[_sl(nd, axis, slice(1, -1))] + p[_sl(nd, axis, slice(0, -2))]
    ) / (h * h)


def _d2_adjoint(w: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    nd = w.ndim
    pad_shape = list(w.shape)
    pad_shape[axis] += 2
    q = np.zeros(pad_shape)
    q[_sl(nd, axis, slice(2, None))] += w / (h * h)
    q[_sl(nd, axis, slice(1, -1))] -= 2.0 * w / (h * h)
    q[_sl(nd, axis, slice(0, -2))] += w / (h * h)
    return _unpad_accumulate(q, axis, periodic)


def _cross(u: np.ndarray, h: float, ax0: int, ax1: int, per: tuple[bool, ...]) -> np.ndarray:
    return _d1(_d1(u, h, ax0, per[ax0]), h, ax1, per[ax1])


def _cross_adjoint(w: np.ndarray, h: float, ax0: int, ax1: int, per: tuple[bool, ...]) -> np.ndarray:
    return _d1_adjoint(_d1_adjoint(w, h, ax1, per[ax1]), h, ax0, per[ax0])


def discrete_gradient(field: GridField, node: tuple[int, ...]) -> np.ndarray:
    """Central-difference gradient at one node, in local coordinates."""
    u, h, per = field.values, field.h, field.periodic
    return np.array([_d1(u, h, a, per[a])[tuple(node)] for a in range(field.n)])


def discrete_hessian(field: GridField, node: tuple[int, ...], frame: str = "local") -> np.ndarray:
    """Central-difference Hessian at one node (four-point cross stencil off-diagonal)."""
    u, h, per, n = field.values, field.h, field.periodic, field.n
    hess = np.empty((n, n))
    for a in range(n):
        hess[a, a] = _d2(u, h, a, per[a])[tuple(node)]
    for a in range(n):
        for b in range(a + 1, n):
            hess[a, b] = hess[b, a] = _cross(u, h, a, b, per)[tuple(node)]
    if frame == "physical":
        rot = rotation_for(field.direction)
        hess = rot @ hess @ rot.T
    return hess


# ---------------------------------------------------------------------------
# Discrete energies
# ---------------------------------------------------------------------------

VARIANTS = ("general", "m_plus", "m_minus")


@dataclass(frozen=True)
class EnergyParams:
    """Scale and flavor of the discrete energy: general density or the comparison pair."""

    epsilon: float = 1.0
    variant: str = "general"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown energy variant {self.variant!r}")


class EnergyModel:
    """Discrete energy and its exact gradient for one (field geometry, env, params) triple.

    Built once per solve: coefficient lookups and masks are hoisted out of the
    iteration loop.  The energy is the midpoint-rule node sum
        h^n * sum  a W(u)/eps + b eps |grad u|^2 + c eps^3 |hess u|^2,
    with coefficients sampled at physical points x/eps (the oscillating density),
    and |.| evaluated from local-frame stencils (both norms are frame-invariant).
    """

    def __init__(self, field: GridField, env: Environment, params: EnergyParams):
        if field.h > params.epsilon / 4.0 + 1e-12:
            raise ResolutionError(
                f"h = {field.h} cannot resolve epsilon = {params.epsilon}; need h <= eps/4"
            )
        self.h = field.h
        self.n = field.n
        self.eps = params.epsilon
        self.variant = params.variant
        self.periodic = field.periodic
        self.free = field.free_mask()
        self.well: DoubleWell = env.well
        self.cell_volume = field.h**field.n
        if params.variant == "general":
            pts = field.physical_points() / params.epsilon
            a, b, c = env.coefficients_at_points(pts.reshape(-1, field.n))
            self.a = a.reshape(field.shape)
            self.b = b.reshape(field.shape)
            self.c = c.reshape(field.shape)
        else:
            q = env.spec.q
            self.a = 1.0
            self.b = q if params.variant == "m_plus" else -q
            self.c = 1.0

    # -- forward -----------------------------------------------------------

    def _derivative_squares(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h, per, n = self.h, self.periodic, self.n
        gsq = np.zeros_like(u)
        hsq = np.zeros_like(u)
        for a in range(n):
            d = _d1(u, h, a, per[a])
            gsq += d * d
            d = _d2(u, h, a, per[a])
            hsq += d * d
        for a in range(n):
            for b in range(a + 1, n):
                d = _cross(u, h, a, b, per)
                hsq += 2.0 * d * d
        return gsq, hsq

    def energy(self, u: np.ndarray) -> float:
        gsq, hsq = self._derivative_squares(u)
        eps = self.eps
        dens = self.a * self.well(u) / eps + self.b * (eps * gsq) + self.c * (eps**3 * hsq)
        return float(self.cell_volume * dens.sum())

    def energy_density(self, u: np.ndarray) -> np.ndarray:
        gsq, hsq = self._derivative_squares(u)
        eps = self.eps
        return self.a * self.well(u) / eps + self.b * (eps * gsq) + self.c * (eps**3 * hsq)

    # -- gradient (adjoint of the stencils) --------------------------------

    def gradient(self, u: np.ndarray) -> np.ndarray:
        h, per, n, eps = self.h, self.periodic, self.n, self.eps
        vol = self.cell_volume
        g = self.a * self.well.derivative(u) * (vol / eps)
        wgt1 = 2.0 * vol * eps * self.b
        wgt2 = 2.0 * vol * eps**3 * self.c
        for a in range(n):
            g += _d1_adjoint(wgt1 * _d1(u, h, a, per[a]), h, a, per[a])
            g += _d2_adjoint(wgt2 * _d2(u, h, a, per[a]), h, a, per[a])
        for a in range(n):
            for b in range(a + 1, n):
                g += _cross_adjoint(2.0 * wgt2 * _cross(u, h, a, b, per), h, a, b, per)
        g[~self.free] = 0.0
        return g

    def value_and_gradient(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        """Energy and gradient in one pass (stencils evaluated once)."""
        h, per, n, eps = self.h, self.periodic, self.n, self.eps
        vol = self.cell_volume
        dens_w = self.a * self.well(u)
        g = self.a * self.well.derivative(u) * (vol / eps)
        wgt1 = 2.0 * vol * eps * self.b
        wgt2 = 2.0 * vol * eps**3 * self.c
        gsq = np.zeros_like(u)
        hsq = np.zeros_like(u)
        for a in range(n):
            d = _d1(u, h, a, per[a])
            gsq += d * d
            g += _d1_adjoint(wgt1 * d, h, a, per[a])
            d = _d2(u, h, a, per[a])
            hsq += d * d
            g += _d2_adjoint(wgt2 * d, h, a, per[a])
        for a in range(n):
            for b in range(a + 1, n):
                d = _cross(u, h, a, b, per)
                hsq += 2.0 * d * d
                g += _cross_adjoint(2.0 * wgt2 * d, h, a, b, per)
        g[~self.free] = 0.0
        dens = dens_w / eps + self.b * (eps * gsq) + self.c * (eps**3 * hsq)
        energy = float(vol * dens.sum())
        return energy, g


def export_field(field: GridField, path: str, fmt: str = "text") -> None:
    """Write node values row-major for plotting, with a small geometry header.

    Text format: a commented 'n ... sides ... h ... nu ...' header line, then
    one row per leading index.  Binary format: numpy .npy values plus a .hdr
    sidecar carrying the same header line.
    """
    header = f"n {field.n} sides {' '.join(str(s) for s in field.sides)} h {field.h} nu {' '.join(str(v) for v in field.direction.nu)}"
    if fmt == "text":
        np.savetxt(path, field.values.reshape(field.shape[0], -1), header=header)
    elif fmt == "binary":
        np.save(path, field.values)
        with open(str(path) + ".hdr", "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
    else:
        raise ValueError(f"unknown export format {fmt!r}")


def discrete_energy(field: GridField, env: Environment, params: EnergyParams) -> float:
    return EnergyModel(field, env, params).energy(field.values)


def discrete_energy_gradient(field: GridField, env: Environment, params: EnergyParams) -> np.ndarray:
    """Exact derivative of discrete_energy w.r.t. free node values (zero at frozen nodes)."""
    return EnergyModel(field, env, params).gradient(field.values)
