"""Barotropic compressible Navier-Stokes operators on the fixed domain.

Density and velocity are stored pulled back, ``r = rho o A_w`` and
``U = u o A_w``.  Mass is transported in flux form on the dual cells of the
node grid: the reference-coordinate flux of ``J r`` through a face normal to
a plate direction is ``J r U_k`` and through a horizontal face it is
``r (U_d - (z + 1)(grad w . U_plate + w_t))``, the latter being the flow
relative to the moving grid.  This keeps ``sum J r * volume`` exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (DomainError, SolverDivergenceError, TopologyError,
                     ValidationError, VacuumError)
from .geometry_ale import (AleGeometry, Grid, ScalarField, TensorField,
                           VectorField, check_same_grid, transformed_gradient)

R_FLOOR = 1e-10


@dataclass(frozen=True)
class FluidParams:
    """Pressure law ``p = r^gamma`` and Newtonian stress coefficients.

    ``rho_ref`` sets an ambient pressure ``rho_ref^gamma`` acting on the top
    side of the plate; the plate is loaded by ``p - rho_ref^gamma``.  The
    default 0 gives an unloaded top side.
    """

    gamma: float = 2.0
    mu: float = 1.0
    lam: float = 0.0
    rho_ref: float = 0.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValidationError(f"gamma must be > 1, got {self.gamma}")
        if not self.mu > 0:
            raise ValidationError(f"mu must be > 0, got {self.mu}")
        if not self.lam + 2.0 * self.mu / 3.0 > 0:
            raise ValidationError(f"lambda + 2 mu / 3 must be > 0, got lambda={self.lam}, mu={self.mu}")
        if not self.rho_ref >= 0:
            raise ValidationError(f"rho_ref must be >= 0, got {self.rho_ref}")

    @property
    def p_ref(self) -> float:
        return self.rho_ref ** self.gamma


def gamma_lower_bound(d: int, alpha_positive: bool) -> float:
    """Smallest admissible adiabatic exponent (exclusive) for a dimension and damping case."""
    if d == 2:
        return 1.0
    if d == 3:
        return 1.5 if alpha_positive else 12.0 / 7.0
    raise ValidationError(f"fluid dimension must be 2 or 3, got {d}")


def validate_gamma_case(gamma: float, d: int, alpha: float):
    lo = gamma_lower_bound(d, alpha > 0)
    if not gamma > lo:
        raise ValidationError(
            f"gamma={gamma} is not admissible for d={d}, alpha{'>' if alpha > 0 else '='}0: need gamma > {lo:.6g}")


@dataclass(frozen=True, eq=False)
class FluidState:
    r: ScalarField
    U: VectorField

    def __post_init__(self):
        check_same_grid(self.r, self.U)
        if np.any(self.r.values < 0):
            raise ValidationError("density must be nonnegative")


def pressure(r: ScalarField, params: FluidParams) -> ScalarField:
    if np.any(r.values < 0):
        raise DomainError("negative density in the pressure law")
    return ScalarField(r.values ** params.gamma, r.grid)


def stress_tensor(gradU: TensorField | np.ndarray, params: FluidParams):
    """``mu gradU + (mu + lambda) tr(gradU) I`` nodewise (component axes first)."""
    G = gradU.values if isinstance(gradU, TensorField) else np.asarray(gradU)
    d = G.shape[0]
    S = params.mu * G
    tr = np.trace(G, axis1=0, axis2=1)
    S = S + (params.mu + params.lam) * np.einsum("ab,...->ab...", np.eye(d), tr)
    return TensorField(S, gradU.grid) if isinstance(gradU, TensorField) else S


# --------------------------------------------------------------------------
# flux-form transport

def _require_periodic(grid: Grid):
    if not grid.periodic:
        raise TopologyError("fluid transport is implemented for periodic plates only")


def face_velocity_fluxes(U: np.ndarray, geo: AleGeometry) -> list[np.ndarray]:
    """Volume fluxes through the dual-cell faces, one array per axis.

    The entry for plate axis ``k`` at node ``i`` is the flux through the face
    between ``i`` and its periodic ``+1`` neighbour along ``k``.  The vertical
    entry at level ``j`` is the face between levels ``j`` and ``j + 1``; the
    top level carries the impermeable plate and is zero.
    """
    grid = geo.grid
    _require_periodic(grid)
    nk = len(grid.plate_spacing)
    J = 1.0 + geo.w.values
    cell = float(np.prod(grid.plate_spacing))
    wz = grid.z_weights()
    out = []
    for k, h in enumerate(grid.plate_spacing):
        Jf = 0.5 * (J + np.roll(J, -1, axis=k))
        Uf = 0.5 * (U[k] + np.roll(U[k], -1, axis=k))
        out.append((cell / h) * wz * Jf[..., None] * Uf)
    zf = 0.5 * (grid.z_nodes()[:-1] + grid.z_nodes()[1:]) + 1.0
    Uv = 0.5 * (U[-1][..., :-1] + U[-1][..., 1:])
    tang = sum(geo.grad_w[k][..., None] * 0.5 * (U[k][..., :-1] + U[k][..., 1:]) for k in range(nk))
    az = np.zeros(grid.fluid_shape)
    az[..., :-1] = cell * (Uv - zf * (tang + geo.wt.values[..., None]))
    out.append(az)
    return out


def upwind_mass_fluxes(r: np.ndarray, a_list: list[np.ndarray]) -> list[np.ndarray]:
    """Multiply face volume fluxes by the upwind density."""
    # along z the wrapped top slab has zero flux, so rolling is harmless
    return [np.where(a > 0, r, np.roll(r, -1, axis=k)) * a for k, a in enumerate(a_list)]


def flux_divergence(F_list: list[np.ndarray]) -> np.ndarray:
    """Net outflow of each dual cell."""
    return sum(F - np.roll(F, 1, axis=k) for k, F in enumerate(F_list))


def continuity_rhs(state: FluidState, geo: AleGeometry) -> ScalarField:
    """``d r / dt`` at fixed reference points, ``w . grad^w r - div^w (r U)``.

    Evaluated as ``-(div_h(upwind flux) / volume + r w_t) / J``, which is the
    same expression in conservation form and keeps total mass exact.
    """
    check_same_grid(state.r, geo.jacobian)
    grid = geo.grid
    r = state.r.values
    a = face_velocity_fluxes(state.U.values, geo)
    div = flux_divergence(upwind_mass_fluxes(r, a))
    J = geo.jacobian.values
    rhs = -(div / grid.fluid_weights() + r * geo.wt.values[..., None]) / J
    return ScalarField(rhs, grid)


def total_mass(r: ScalarField, geo: AleGeometry) -> float:
    return float(np.sum(r.grid.fluid_weights() * geo.jacobian.values * r.values))


def _one_sided(f: np.ndarray, h: float, axis: int, periodic: bool, forward: bool) -> np.ndarray:
    if periodic:
        return (np.roll(f, -1, axis) - f) / h if forward else (f - np.roll(f, 1, axis)) / h
    out = np.empty_like(f)
    n = f.shape[axis]
    lo = [slice(None)] * f.ndim
    hi = [slice(None)] * f.ndim
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    d = (f[tuple(hi)] - f[tuple(lo)]) / h
    if forward:
        out[tuple(lo)] = d
        last = [slice(None)] * f.ndim
        last[axis] = slice(n - 1, n)
        out[tuple(last)] = np.take(d, [n - 2], axis=axis)
    else:
        out[tuple(hi)] = d
        first = [slice(None)] * f.ndim
        first[axis] = slice(0, 1)
        out[tuple(first)] = np.take(d, [0], axis=axis)
    return out


def upwind_transport(U: np.ndarray, f: np.ndarray, geo: AleGeometry) -> np.ndarray:
    """``(U - ale_velocity) . grad^w f`` with first-order upwind differences."""
    grid = geo.grid
    d = grid.d
    rel = U - geo.ale_velocity.values
    # reference-coordinate advection speed: c_c = sum_b inv[c, b] rel_b
    c = np.einsum("...cb,b...->c...", geo.inv_grad, rel)
    spacings = list(grid.plate_spacing) + [grid.hz]
    out = np.zeros_like(f)
    for ax in range(d):
        per = grid.periodic and ax < d - 1
        fwd = _one_sided(f, spacings[ax], ax, per, True)
        bwd = _one_sided(f, spacings[ax], ax, per, False)
        out += np.where(c[ax] > 0, c[ax] * bwd, c[ax] * fwd)
    return out


def momentum_rhs(state: FluidState, geo: AleGeometry, params: FluidParams) -> VectorField:
    """``d U / dt`` at fixed reference points.

    ``w . grad^w U - U . grad^w U - grad^w(r^gamma) / r + div^w S(grad^w U) / r``
    with upwind convection and centred pressure and viscous terms.
    """
    check_same_grid(state.r, geo.jacobian)
    r = state.r.values
    if np.any(r < R_FLOOR):
        raise VacuumError(f"density below the floor {R_FLOOR:g}: min r = {r.min():.3g}")
    grid = geo.grid
    U = state.U.values
    conv = np.stack([upwind_transport(U, U[a], geo) for a in range(grid.d)])
    gp = transformed_gradient(ScalarField(r ** params.gamma, grid), geo).values
    S = stress_tensor(transformed_gradient(state.U, geo), params).values
    divS = np.stack([sum(transformed_gradient(ScalarField(S[a, b], grid), geo).values[b]
                         for b in range(grid.d)) for a in range(grid.d)])
    rhs = -conv + (divS - gp) / r
    if not np.all(np.isfinite(rhs)):
        raise SolverDivergenceError("momentum right side is not finite")
    return VectorField(rhs, grid)


# --------------------------------------------------------------------------
# pressure potential

def _phi(t: np.ndarray, gamma: float) -> np.ndarray:
    """``t^gamma - gamma (t - 1) - 1``, cancellation-free near t = 1."""
    t = np.asarray(t, dtype=float)
    out = t ** gamma - gamma * (t - 1.0) - 1.0
    e = t - 1.0
    near = np.abs(e) < 1e-2
    if np.any(near):
        en = e[near]
        series = np.zeros_like(en)
        coef = 1.0
        power = np.ones_like(en)
        for k in range(1, 12):
            coef *= (gamma - k + 1) / k
            power = power * en
            if k >= 2:
                series += coef * power
        out = np.array(out, dtype=float)
        out[near] = series
    return out


def pressure_potential(x, y, gamma: float):
    """``x^gamma - gamma y^(gamma-1) (x - y) - y^gamma`` for x >= 0, y > 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y <= 0):
        raise DomainError("pressure potential needs x >= 0 and y > 0")
    if not gamma > 1:
        raise DomainError("pressure potential needs gamma > 1")
    out = y ** gamma * _phi(x / y, gamma)
    return float(out) if out.ndim == 0 else out


def bregman_pressure(x: np.ndarray, y, gamma: float) -> np.ndarray:
    """Pressure potential extended to y = 0 by its limit x^gamma."""
    x = np.asarray(x, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
    out = x ** gamma
    pos = y > 0
    if np.any(pos):
        out = np.array(out)
        out[pos] = pressure_potential(x[pos], y[pos], gamma)
    return out


class PotentialBounds(NamedTuple):
    """Constants of the two lower bounds of the pressure potential.

    ``c_band``: f(x, y) >= c_band |x - y|^band_exponent for y/2 <= x <= 2y.
    ``c_far``: f(x, y) >= c_far (1 + x^far_exponent) outside that band.
    ``c`` is the smaller of the two.
    """

    c: float
    c_band: float
    c_far: float
    band_exponent: float
    far_exponent: float


def _scan_min(ratio, lo, hi, n):
    """Grid minimum of ``ratio`` on [lo, hi] refined by a bounded Brent search."""
    xs = np.linspace(lo, hi, n)
    vals = ratio(xs)
    k = int(np.nanargmin(vals))
    best = vals[k]
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, n - 1)]
    if b > a:
        res = minimize_scalar(lambda s: float(ratio(np.array([s]))[0]), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-12 * max(1.0, abs(b))})
        if res.success and np.isfinite(res.fun):
            best = min(best, res.fun)
    return float(best)


def pressure_potential_bounds(c_r2: float, C_r2: float, gamma: float,
                              band_exponent: float | None = None,
                              n_x: int = 10_000, n_y: int = 41,
                              x_max_factor: float = 50.0) -> PotentialBounds:
    """Largest constants in the two lower bounds, uniformly for y in [c_r2, C_r2].

    ``band_exponent`` defaults to ``min(2, gamma)``; the far-field bound always
    uses that exponent.  The infimum is located by a grid scan of ``n_x``
    points per region and per sampled ``y`` followed by local Brent
    refinement, so it is not larger than the true infimum up to the solver
    tolerance.
    """
    if not (0 < c_r2 <= C_r2):
        raise ValidationError("need 0 < c_r2 <= C_r2")
    q = min(2.0, gamma)
    qb = q if band_exponent is None else float(band_exponent)
    ys = np.unique(np.concatenate([np.linspace(c_r2, C_r2, n_y), [c_r2, C_r2]]))
    c_band = np.inf
    c_far = np.inf
    for y in ys:
        def band(x, y=y):
            d = np.abs(x - y)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = pressure_potential(x, y, gamma) / d ** qb
            return np.where(d > 0, out, np.inf)

        def far(x, y=y):
            return pressure_potential(x, y, gamma) / (1.0 + x ** q)

        # the band ratio is singular-looking at x = y: scan each side separately
        c_band = min(c_band, _scan_min(band, y / 2, y, n_x // 2), _scan_min(band, y, 2 * y, n_x // 2))
        c_far = min(c_far, _scan_min(far, 0.0, y / 2, n_x // 2),
                    _scan_min(far, 2 * y, x_max_factor * max(C_r2, 1.0), n_x // 2))
    c_band = max(c_band, 0.0)
    return PotentialBounds(float(min(c_band, c_far)), float(c_band), float(c_far), qb, q)
