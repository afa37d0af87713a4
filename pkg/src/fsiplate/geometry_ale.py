"""Grids, sampled fields and the ALE change of coordinates.

The fluid lives on the fixed rectangle Omega = Gamma x (-1, 0).  The map

    A_w(X, z) = (X, (z + 1) * w(X) + z)

sends it onto the deformed channel below the plate graph z = w(X).  Every
fluid quantity is stored on the fixed grid; derivatives in physical space are
recovered with the inverse gradient of A_w evaluated at each node.

Array layout: plate arrays have shape ``grid.plate_shape`` (one axis per
plate direction); fluid arrays have shape ``grid.fluid_shape`` which appends
the vertical axis (index 0 is the channel bottom z = -1, the last index is the
plate z = 0).  Vector fields carry the component axis first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (CollisionError, DimensionError, GridMismatchError,
                     ValidationError)

TOPOLOGIES = ("periodic", "clamped")


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on Gamma x (-1, 0).

    ``ny``/``ly`` switch on a second plate direction (three-dimensional
    fluid).  Periodic plates have ``nx`` nodes per period; clamped plates keep
    both end nodes, so they have ``nx + 1``.
    """

    nx: int
    nz: int
    lx: float = 2 * np.pi
    plate_topology: str = "periodic"
    ny: int | None = None
    ly: float | None = None

    def __post_init__(self):
        if int(self.nx) != self.nx or self.nx < 4:
            raise ValidationError(f"grid.nx must be an integer >= 4, got {self.nx}")
        if int(self.nz) != self.nz or self.nz < 4:
            raise ValidationError(f"grid.nz must be an integer >= 4, got {self.nz}")
        if not self.lx > 0:
            raise ValidationError(f"grid.lx must be positive, got {self.lx}")
        if self.plate_topology not in TOPOLOGIES:
            raise ValidationError(f"unknown plate topology {self.plate_topology!r}")
        if self.ny is not None:
            if int(self.ny) != self.ny or self.ny < 4:
                raise ValidationError(f"grid.ny must be an integer >= 4, got {self.ny}")
            if self.ly is None:
                object.__setattr__(self, "ly", float(self.lx))
            if not self.ly > 0:
                raise ValidationError(f"grid.ly must be positive, got {self.ly}")

    @property
    def d(self) -> int:
        """Fluid dimension."""
        return 2 if self.ny is None else 3

    @property
    def periodic(self) -> bool:
        return self.plate_topology == "periodic"

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float | None:
        return None if self.ny is None else self.ly / self.ny

    @property
    def hz(self) -> float:
        return 1.0 / self.nz

    @property
    def plate_cells(self) -> tuple[int, ...]:
        return (self.nx,) if self.ny is None else (self.nx, self.ny)

    @property
    def plate_lengths(self) -> tuple[float, ...]:
        return (self.lx,) if self.ny is None else (self.lx, self.ly)

    @property
    def plate_spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.plate_lengths, self.plate_cells))

    @property
    def plate_shape(self) -> tuple[int, ...]:
        extra = 0 if self.periodic else 1
        return tuple(n + extra for n in self.plate_cells)

    @property
    def fluid_shape(self) -> tuple[int, ...]:
        return self.plate_shape + (self.nz + 1,)

    def plate_axes(self) -> list[np.ndarray]:
        """Node coordinates along each plate direction."""
        return [np.arange(n) * h for n, h in zip(self.plate_shape, self.plate_spacing)]

    def z_nodes(self) -> np.ndarray:
        return np.linspace(-1.0, 0.0, self.nz + 1)

    def plate_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.plate_axes(), indexing="ij"))

    def fluid_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.plate_axes(), self.z_nodes(), indexing="ij"))

    def plate_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights on Gamma."""
        wts = np.full(self.plate_shape, float(np.prod(self.plate_spacing)))
        if not self.periodic:
            for ax in range(len(self.plate_shape)):
                idx = [slice(None)] * wts.ndim
                idx[ax] = [0, -1]
                wts[tuple(idx)] *= 0.5
        return wts

    def z_weights(self) -> np.ndarray:
        wz = np.full(self.nz + 1, self.hz)
        wz[[0, -1]] *= 0.5
        return wz

    def fluid_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights on the fixed domain."""
        return self.plate_weights()[..., None] * self.z_weights()

    def with_resolution(self, nx: int, nz: int, ny: int | None = None) -> "Grid":
        return Grid(nx, nz, self.lx, self.plate_topology,
                    ny if ny is not None else (None if self.ny is None else self.ny),
                    self.ly)


def _frozen(values, shape, what):
    arr = np.array(values, dtype=float)
    if arr.shape != tuple(shape):
        raise GridMismatchError(f"{what} has shape {arr.shape}, grid expects {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PlateField:
    """Samples of a scalar function on the plate nodes."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.plate_shape, "plate field"))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a scalar function on the fixed-domain nodes."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.fluid_shape, "scalar field"))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Samples of a d-vector function; component axis first."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        shape = (self.grid.d,) + self.grid.fluid_shape
        object.__setattr__(self, "values", _frozen(self.values, shape, "vector field"))


@dataclass(frozen=True, eq=False)
class TensorField:
    """d x d matrix per node, ``values[a, b]`` is the derivative of component a along b."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        d = self.grid.d
        object.__setattr__(self, "values", _frozen(self.values, (d, d) + self.grid.fluid_shape,
                                                   "tensor field"))


def plate_field(fn, grid: Grid) -> PlateField:
    """Sample ``fn(*plate_coords)`` on the plate nodes."""
    return PlateField(np.broadcast_to(fn(*grid.plate_mesh()), grid.plate_shape), grid)


def scalar_field(fn, grid: Grid) -> ScalarField:
    """Sample ``fn(*plate_coords, z)`` on the fixed-domain nodes."""
    return ScalarField(np.broadcast_to(fn(*grid.fluid_mesh()), grid.fluid_shape), grid)


def vector_field(fns: Sequence, grid: Grid) -> VectorField:
    mesh = grid.fluid_mesh()
    return VectorField(np.stack([np.broadcast_to(f(*mesh), grid.fluid_shape) for f in fns]), grid)


def check_same_grid(*fields):
    grids = [f.grid for f in fields]
    for g in grids[1:]:
        if g != grids[0]:
            raise GridMismatchError(f"fields live on different grids: {grids[0]} vs {g}")
    return grids[0]


# --------------------------------------------------------------------------
# stencils

def diff_axis(a: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    """Second-order first derivative along one axis.

    Centered in the interior, wraparound when periodic, one-sided second
    order at rigid ends.
    """
    if periodic:
        return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * h)
    return np.gradient(a, h, axis=axis, edge_order=2)


def plate_gradient_values(w: np.ndarray, grid: Grid) -> np.ndarray:
    """Gradient of plate samples, shape ``(d - 1,) + plate_shape``."""
    return np.stack([diff_axis(w, h, ax, grid.periodic)
                     for ax, h in enumerate(grid.plate_spacing)])


def fluid_gradient_values(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Reference-coordinate gradient of fixed-domain samples (derivative axis first)."""
    parts = [diff_axis(f, h, ax, grid.periodic) for ax, h in enumerate(grid.plate_spacing)]
    parts.append(np.gradient(f, grid.hz, axis=len(grid.plate_spacing), edge_order=2))
    return np.stack(parts)


# --------------------------------------------------------------------------
# the ALE map and its derived quantities

@dataclass(frozen=True, eq=False)
class AleGeometry:
    """Everything the transformed operators need for one plate configuration."""

    w: PlateField
    wt: PlateField
    jacobian: ScalarField
    inv_grad: np.ndarray  # fluid_shape + (d, d), rows of (grad A_w)^-1
    ale_velocity: VectorField
    grad_w: np.ndarray = field(repr=False, default=None)

    @property
    def grid(self) -> Grid:
        return self.w.grid


def _sample_plate(w: PlateField, X) -> np.ndarray:
    grid = w.grid
    if grid.d == 2:
        xs = grid.plate_axes()[0]
        X = np.asarray(X, dtype=float)
        if grid.periodic:
            return np.interp(X, xs, w.values, period=grid.lx)
        return np.interp(X, xs, w.values)
    from scipy.interpolate import RegularGridInterpolator
    xs, ys = grid.plate_axes()
    vals = w.values
    if grid.periodic:
        xs = np.append(xs, grid.lx)
        ys = np.append(ys, grid.ly)
        vals = np.pad(vals, ((0, 1), (0, 1)), mode="wrap")
    pts = np.stack(np.broadcast_arrays(*X), axis=-1)
    if grid.periodic:
        pts = np.mod(pts, [grid.lx, grid.ly])
    return RegularGridInterpolator((xs, ys), vals)(pts)


def ale_map(w: PlateField, X, z):
    """Physical point ``(X, (z + 1) w(X) + z)`` of the reference point (X, z).

    ``X`` is a plate coordinate (a pair for two-dimensional plates); between
    nodes ``w`` is interpolated linearly.
    """
    wx = _sample_plate(w, X)
    if np.any(1.0 + wx <= 0.0):
        raise CollisionError("1 + w(X) <= 0: the plate touches the channel bottom")
    z = np.asarray(z, dtype=float)
    if np.any((z < -1.0) | (z > 0.0)):
        raise ValidationError("z must lie in [-1, 0]")
    y = (z + 1.0) * wx + z
    if w.grid.d == 2:
        return np.asarray(X, dtype=float), y
    return np.asarray(X[0], dtype=float), np.asarray(X[1], dtype=float), y


def check_collision(w: np.ndarray, threshold: float = 0.0):
    gap = 1.0 + np.min(w)
    if not gap > threshold:
        raise CollisionError(f"min(1 + w) = {gap:.6g} <= {threshold:g}")


def build_geometry(w: PlateField, wt: PlateField | None = None) -> AleGeometry:
    """Jacobian, inverse gradient and ALE velocity for displacement ``w``."""
    grid = w.grid
    if wt is None:
        wt = PlateField(np.zeros(grid.plate_shape), grid)
    check_same_grid(w, wt)
    check_collision(w.values)
    d = grid.d
    z = grid.z_nodes()
    one_w = (1.0 + w.values)[..., None]
    zp1 = np.broadcast_to(z + 1.0, grid.fluid_shape)
    gw = plate_gradient_values(w.values, grid)

    inv = np.zeros(grid.fluid_shape + (d, d))
    for k in range(d - 1):
        inv[..., k, k] = 1.0
        inv[..., d - 1, k] = -zp1 / one_w * gw[k][..., None]
    inv[..., d - 1, d - 1] = 1.0 / np.broadcast_to(one_w, grid.fluid_shape)

    vel = np.zeros((d,) + grid.fluid_shape)
    vel[d - 1] = zp1 * wt.values[..., None]
    jac = np.broadcast_to(one_w, grid.fluid_shape)
    return AleGeometry(w, wt, ScalarField(jac, grid), inv, VectorField(vel, grid), gw)


def _apply_inv(g: np.ndarray, inv: np.ndarray) -> np.ndarray:
    # g: (d, ...) reference gradient; returns (d, ...) transformed gradient
    return np.einsum("c...,...cb->b...", g, inv)


def transformed_gradient(f, geo: AleGeometry):
    """Physical gradient of a pulled-back field, ``grad f . inv_grad``.

    A scalar field gives a VectorField; a vector field gives a TensorField with
    ``values[a, b]`` the derivative of component ``a`` along physical axis ``b``.
    """
    check_same_grid(f, geo.jacobian)
    grid = geo.grid
    if isinstance(f, ScalarField):
        return VectorField(_apply_inv(fluid_gradient_values(f.values, grid), geo.inv_grad), grid)
    if isinstance(f, VectorField):
        out = np.stack([_apply_inv(fluid_gradient_values(fa, grid), geo.inv_grad)
                        for fa in f.values])
        return TensorField(out, grid)
    raise TypeError("transformed_gradient expects a ScalarField or VectorField")


def transformed_divergence(F: VectorField, geo: AleGeometry) -> ScalarField:
    """Trace of the transformed gradient."""
    G = transformed_gradient(F, geo).values
    return ScalarField(np.trace(G, axis1=0, axis2=1), geo.grid)


def extension_operator(f: PlateField, geo: AleGeometry) -> VectorField:
    """Pull-back of the vertical extension ``f (z + 1) / (w + 1) e_d``.

    On the deformed channel ``z + 1 = (zeta + 1)(w + 1)``, so on the fixed
    grid the field reads ``f(X) (zeta + 1) e_d`` and its transformed
    divergence is exactly ``f / (w + 1)``.
    """
    check_same_grid(f, geo.w)
    check_collision(geo.w.values)
    grid = geo.grid
    out = np.zeros((grid.d,) + grid.fluid_shape)
    out[-1] = f.values[..., None] * (grid.z_nodes() + 1.0)
    return VectorField(out, grid)


def surface_jacobian(w: PlateField) -> PlateField:
    """Area factor ``sqrt(1 + |grad w|^2)`` of the plate graph."""
    gw = plate_gradient_values(w.values, w.grid)
    return PlateField(np.sqrt(1.0 + np.sum(gw ** 2, axis=0)), w.grid)


def graph_normal(w: PlateField) -> np.ndarray:
    """Upward unit normal ``(-grad w, 1) / sqrt(1 + |grad w|^2)``, component axis first."""
    gw = plate_gradient_values(w.values, w.grid)
    s = np.sqrt(1.0 + np.sum(gw ** 2, axis=0))
    return np.concatenate([-gw / s, (1.0 / s)[None]], axis=0)


def material_derivative_identity_residual(q_snapshots, geo_snapshots, dt: float,
                                          eulerian_dt) -> list[ScalarField]:
    """Residual of ``d/dt (q o A) = (dq/dt) o A + ale_velocity . grad^w (q o A)``.

    ``q_snapshots`` are pulled-back samples ``q o A_w(t_n)``; ``eulerian_dt``
    holds the pulled-back Eulerian time derivatives at the same instants.  The
    left side uses centered differences, so one residual is returned per
    interior snapshot.
    """
    n = len(q_snapshots)
    if n < 3:
        raise ValidationError("need at least three consecutive snapshots")
    if len(geo_snapshots) != n or len(eulerian_dt) != n:
        raise ValidationError("snapshot sequences have different lengths")
    out = []
    for k in range(1, n - 1):
        q, geo = q_snapshots[k], geo_snapshots[k]
        lhs = (q_snapshots[k + 1].values - q_snapshots[k - 1].values) / (2.0 * dt)
        conv = np.sum(geo.ale_velocity.values * transformed_gradient(q, geo).values, axis=0)
        out.append(ScalarField(lhs - eulerian_dt[k].values - conv, geo.grid))
    return out


def require_d2(grid: Grid, what: str):
    if grid.d != 2:
        raise DimensionError(f"{what} is implemented for two-dimensional fluids only")
