"""Scalar functionals of coupled states: energy, relative entropy, remainder.

All integrals are trapezoid sums on the fixed reference domain, weighted by
the Jacobian ``J = 1 + w`` where the physical domain is meant, and trapezoid
sums in time.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .coupling import CoupledState, Trajectory
from .errors import DomainError, GridMismatchError, ValidationError
from .fluid import (FluidParams, FluidState, bregman_pressure,
                    pressure_potential_bounds, stress_tensor)
from .geometry_ale import (Grid, PlateField, ScalarField, VectorField,
                           transformed_gradient)
from .plate import (PlateModel, PlateState, bilaplacian, gradient_sq_integral,
                    integrate, laplacian, plate_force, potential)


def _J(state: CoupledState) -> np.ndarray:
    return 1.0 + state.plate.w.values[..., None]


def _fluid_int(f: np.ndarray, grid: Grid) -> float:
    return float(np.sum(grid.fluid_weights() * f))


def _has_potential(model: PlateModel) -> bool:
    return not (model.kind == "linear"
                or (model.kind == "thermo_semilinear" and model.coefficients is None))


# --------------------------------------------------------------------------
# energy

@dataclass(frozen=True)
class EnergyReport:
    """Terms of the energy inequality at one time.

    ``stored`` is the instantaneous energy, ``total`` adds the cumulative
    dissipation so that the inequality reads ``total(t) <= stored(0)``.
    ``potential`` (nonlinear plate force) may be negative; every other term is
    nonnegative.
    """

    kinetic: float
    internal: float
    plate_kinetic: float
    bending: float
    viscous_dissipation_cum: float
    plate_dissipation_cum: float
    potential: float = 0.0
    thermal: float = 0.0
    thermal_dissipation_cum: float = 0.0

    @property
    def stored(self) -> float:
        return (self.kinetic + self.internal + self.plate_kinetic + self.bending
                + self.potential + self.thermal)

    @property
    def total(self) -> float:
        return (self.stored + self.viscous_dissipation_cum + self.plate_dissipation_cum
                + self.thermal_dissipation_cum)

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["total"] = self.total
        return out


ENERGY_COLUMNS = ("kinetic", "internal", "plate_kinetic", "bending",
                  "viscous_dissipation_cum", "plate_dissipation_cum", "total")


def energy(state: CoupledState, params: FluidParams, model: PlateModel,
           viscous_cum: float = 0.0, plate_cum: float = 0.0,
           thermal_cum: float = 0.0) -> EnergyReport:
    """Energy of one state plus the supplied cumulative dissipation.

    The internal energy is ``int J f(r, rho_ref) / (gamma - 1)`` with ``f`` the
    pressure potential; for ``rho_ref = 0`` this is ``int J r^gamma / (gamma - 1)``.
    """
    grid = state.grid
    J = _J(state)
    r = state.fluid.r.values
    U = state.fluid.U.values
    g = params.gamma
    kinetic = 0.5 * _fluid_int(J * r * np.sum(U ** 2, axis=0), grid)
    internal = _fluid_int(J * bregman_pressure(r, params.rho_ref, g), grid) / (g - 1.0)
    v = state.plate.v.values
    plate_kinetic = 0.5 * integrate(v ** 2, grid)
    bending = 0.5 * integrate(laplacian(state.plate.w).values ** 2, grid)
    pot = potential(model, state.plate.w) if _has_potential(model) else 0.0
    theta = state.plate.theta
    thermal = 0.5 * integrate(theta.values ** 2, grid) if theta is not None else 0.0
    return EnergyReport(kinetic, internal, plate_kinetic, bending, float(viscous_cum),
                        float(plate_cum), float(pot), thermal, float(thermal_cum))


def viscous_rate(state: CoupledState, params: FluidParams) -> float:
    """``int J S(grad^w U) : grad^w U`` from centred transformed gradients."""
    geo = state.geometry()
    G = transformed_gradient(state.fluid.U, geo).values
    S = stress_tensor(G, params)
    return _fluid_int(geo.jacobian.values * np.einsum("ab...,ab...->...", S, G), state.grid)


def plate_rate(state: CoupledState, model: PlateModel) -> float:
    return model.alpha * gradient_sq_integral(state.plate.v)


class BudgetReport(NamedTuple):
    times: np.ndarray
    totals: np.ndarray  # stored energy + cumulative dissipation
    initial: float
    gaps: np.ndarray  # totals - initial
    tolerance: float
    flagged: list  # snapshot indices whose gap exceeds the tolerance

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gaps))


def energy_budget(trajectory: Trajectory | Sequence[CoupledState], params: FluidParams,
                  model: PlateModel, tolerance: float | None = None,
                  include_thermal: bool | None = None) -> BudgetReport:
    """Per-snapshot gap ``E(t) + dissipation(0, t) - E(0)``.

    A Trajectory from ``run`` carries the exact dissipated amounts of the
    scheme; a plain list of states falls back to trapezoid integration of the
    dissipation rates.  Gaps above ``tolerance`` (default
    ``1e-6 (1 + E(0))``) are flagged.  The thermal terms are excluded by
    default because the heat equation is driven by the plate without feeding
    back, so its energy is not balanced by the plate.
    """
    if isinstance(trajectory, Trajectory):
        states = trajectory.states
        visc, plate, therm = trajectory.viscous_cum, trajectory.plate_cum, trajectory.thermal_cum
    else:
        states = list(trajectory)
        t = np.array([s.time for s in states])
        visc = cumulative_trapezoid([viscous_rate(s, params) for s in states], t, initial=0.0)
        plate = cumulative_trapezoid([plate_rate(s, model) for s in states], t, initial=0.0)
        therm = cumulative_trapezoid(
            [gradient_sq_integral(s.plate.theta) if s.plate.theta is not None else 0.0
             for s in states], t, initial=0.0)
    if include_thermal is None:
        include_thermal = False
    totals = []
    for s, a, b, c in zip(states, visc, plate, therm):
        rep = energy(s, params, model, a, b, c if include_thermal else 0.0)
        tot = rep.total if include_thermal else rep.total - rep.thermal
        totals.append(tot)
    totals = np.array(totals)
    e0 = float(totals[0])
    tol = 1e-6 * (1.0 + abs(e0)) if tolerance is None else float(tolerance)
    gaps = totals - e0
    flagged = [int(k) for k in np.flatnonzero(gaps > tol)]
    return BudgetReport(np.array([s.time for s in states]), totals, e0, gaps, tol, flagged)


# --------------------------------------------------------------------------
# relative entropy

@dataclass(frozen=True)
class EntropyReport:
    fluid_kinetic_gap: float
    pressure_gap: float
    plate_velocity_gap: float
    bending_gap: float
    thermal_gap: float = 0.0
    quasilinear_gap: float = 0.0

    @property
    def total(self) -> float:
        return (self.fluid_kinetic_gap + self.pressure_gap + self.plate_velocity_gap
                + self.bending_gap + self.thermal_gap + self.quasilinear_gap)

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["total"] = self.total
        return out


ENTROPY_COLUMNS = ("fluid_kinetic_gap", "pressure_gap", "plate_velocity_gap",
                   "bending_gap", "thermal_gap", "quasilinear_gap", "total")


def _same_grid(s1: CoupledState, s2: CoupledState):
    if s1.grid != s2.grid:
        raise GridMismatchError("states live on different grids")


def relative_entropy(s1: CoupledState, s2: CoupledState, params: FluidParams,
                     model: PlateModel | None = None) -> EntropyReport:
    """Distance of ``s1`` from ``s2``; the Jacobian is taken from ``s1``.

    ``r2 = 0`` nodes use the limit ``r1^gamma`` of the pressure gap.
    """
    _same_grid(s1, s2)
    grid = s1.grid
    J = _J(s1)
    g = params.gamma
    r1, r2 = s1.fluid.r.values, s2.fluid.r.values
    if np.any(r1 < 0) or np.any(r2 < 0):
        raise DomainError("relative entropy needs nonnegative densities")
    dU = s1.fluid.U.values - s2.fluid.U.values
    kin = 0.5 * _fluid_int(J * r1 * np.sum(dU ** 2, axis=0), grid)
    pres = _fluid_int(J * bregman_pressure(r1, r2, g), grid) / (g - 1.0)
    dv = s1.plate.v.values - s2.plate.v.values
    pv = 0.5 * integrate(dv ** 2, grid)
    l1 = laplacian(s1.plate.w).values
    l2 = laplacian(s2.plate.w).values
    bend = 0.5 * integrate((l1 - l2) ** 2, grid)
    thermal = 0.0
    if s1.plate.theta is not None and s2.plate.theta is not None:
        thermal = 0.5 * integrate((s1.plate.theta.values - s2.plate.theta.values) ** 2, grid)
    quasi = 0.0
    if model is not None and model.kind == "thermo_quasilinear":
        quasi = integrate((l1 ** 3 - l2 ** 3) * (l1 - l2), grid)
    return EntropyReport(kin, pres, pv, bend, thermal, quasi)


# --------------------------------------------------------------------------
# density distance

class DensityDistanceReport(NamedTuple):
    lhs: float  # ||r1 - r2||^2 in L^q, q = min(2, gamma)
    rhs: float  # bound from the relative entropy
    entropy: float
    c_check: float  # rhs / entropy
    parts: dict  # per-regime bounds

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300


def density_distance_check(s1: CoupledState, s2: CoupledState, params: FluidParams,
                           c_r2: float, C_r2: float, bounds=None,
                           model: PlateModel | None = None) -> DensityDistanceReport:
    """Bound ``||r1 - r2||^2_{L^q}`` by the relative entropy, ``q = min(2, gamma)``.

    The domain splits into ``r1 < r2/2``, ``r2/2 <= r1 <= 2 r2`` and
    ``r1 > 2 r2``.  With ``K = (gamma - 1) / min J`` the pressure gap gives
    ``int f <= K E``, and the two lower bounds of ``f`` turn that into

    * low:  ``(C_r2^q K E / c_far)^(2/q)``
    * band: ``|Omega|^(2/q - 1) K E / c_band`` (band exponent 2, then Hoelder)
    * high: ``(K E / c_far)^(2/q)``

    whose sum times ``3^(2/q - 1)`` bounds the squared norm.
    """
    _same_grid(s1, s2)
    grid = s1.grid
    g = params.gamma
    r1, r2 = s1.fluid.r.values, s2.fluid.r.values
    if np.any(r2 < c_r2 * (1 - 1e-12)) or np.any(r2 > C_r2 * (1 + 1e-12)):
        raise DomainError(f"r2 leaves the band [{c_r2}, {C_r2}]")
    q = min(2.0, g)
    wts = grid.fluid_weights()
    lhs = float(np.sum(wts * np.abs(r1 - r2) ** q)) ** (2.0 / q)
    if bounds is None:
        bounds = pressure_potential_bounds(c_r2, C_r2, g, band_exponent=2.0)
    if bounds.band_exponent != 2.0:
        raise ValidationError("density_distance_check needs band bounds with exponent 2")
    E = relative_entropy(s1, s2, params, model).total
    K = (g - 1.0) / float(np.min(1.0 + s1.plate.w.values))
    vol = float(np.sum(wts))
    KE = K * E
    low = (C_r2 ** q * KE / bounds.c_far) ** (2.0 / q)
    band = vol ** (2.0 / q - 1.0) * KE / bounds.c_band
    high = (KE / bounds.c_far) ** (2.0 / q)
    rhs = 3.0 ** (2.0 / q - 1.0) * (low + band + high)
    c_check = rhs / E if E > 0 else 0.0
    return DensityDistanceReport(lhs, rhs, E, c_check, {"low": low, "band": band, "high": high})


# --------------------------------------------------------------------------
# relative energy inequality

class RelativeEnergyReport(NamedTuple):
    times: np.ndarray
    entropy: np.ndarray
    dissipation_cum: np.ndarray
    remainder_cum: np.ndarray
    residual: np.ndarray  # entropy + dissipation - entropy(0) - remainder
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residual <= self.tolerance))

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))


def _states(traj) -> list:
    return list(traj.states if isinstance(traj, Trajectory) else traj)


def _time_derivative(stack: np.ndarray, t: np.ndarray) -> np.ndarray:
    if len(t) < 2:
        return np.zeros_like(stack)
    return np.gradient(stack, t, axis=0, edge_order=2 if len(t) >= 3 else 1)


def remainder_terms(s1: CoupledState, s2: CoupledState, dU2: np.ndarray, dpi2: np.ndarray,
                    dv2: np.ndarray, params: FluidParams, model: PlateModel,
                    dtheta2: np.ndarray | None = None, as_printed: bool = False) -> dict:
    """Integrands of the remainder at one time, keyed by term.

    ``dU2``, ``dpi2`` and ``dv2`` are the time derivatives of ``U2``,
    ``r2^(gamma-1)`` and ``v2``.  The plate inertia and bending terms enter
    with the sign that matches the fluid inertia term; ``as_printed`` flips it.
    """
    grid = s1.grid
    g = params.gamma
    geo1 = s1.geometry()
    J = geo1.jacobian.values
    r1, r2 = s1.fluid.r.values, s2.fluid.r.values
    U1, U2 = s1.fluid.U.values, s2.fluid.U.values
    G1 = transformed_gradient(s1.fluid.U, geo1).values
    G2 = transformed_gradient(s2.fluid.U, geo1).values
    S2 = stress_tensor(G2, params)
    dU = U2 - U1
    ale = geo1.ale_velocity.values
    conv = np.einsum("b...,ab...->a...", U1 - ale, G2)
    pi2 = ScalarField(r2 ** (g - 1.0), grid)
    gpi = transformed_gradient(pi2, geo1).values
    out = {}
    out["viscous"] = _fluid_int(J * np.einsum("ab...,ab...->...", S2, G2 - G1), grid)
    out["inertia"] = _fluid_int(J * r1 * np.sum((dU2 + conv) * dU, axis=0), grid)
    flux = r2 * U2 - r1 * U1
    out["pressure_transport"] = g / (g - 1.0) * _fluid_int(
        J * (np.sum(flux * gpi, axis=0) + (r1 - r2) * (dpi2 - np.sum(ale * gpi, axis=0))), grid)
    div2 = np.trace(G2, axis1=0, axis2=1)
    out["pressure_work"] = _fluid_int(J * (r2 ** g - r1 ** g) * div2, grid)
    v1, v2 = s1.plate.v.values, s2.plate.v.values
    out["plate_load"] = integrate((v2 - v1) * (r2[..., -1] ** g - params.p_ref), grid)
    sign = -1.0 if as_printed else 1.0
    out["plate_inertia"] = sign * integrate((v2 - v1) * dv2, grid)
    out["plate_bending"] = sign * integrate((v2 - v1) * bilaplacian(s2.plate.w).values, grid)
    out["plate_damping"] = model.alpha * integrate(laplacian(s2.plate.v).values * (v1 - v2), grid)
    if _has_potential(model):
        if model.kind == "thermo_quasilinear":
            l1 = laplacian(s1.plate.w).values
            l2 = laplacian(s2.plate.w).values
            out["plate_force"] = -integrate(l2 ** 3 * (l1 - l2), grid)
        else:
            out["plate_force"] = -integrate(plate_force(model, s1.plate.w) * (v1 - v2), grid)
    if dtheta2 is not None and s1.plate.theta is not None and s2.plate.theta is not None:
        th1, th2 = s1.plate.theta.values, s2.plate.theta.values
        out["thermal"] = -integrate((th2 - th1) * (dtheta2 + laplacian(s2.plate.theta).values), grid)
    return out


def relative_energy_residual(trajectory1, trajectory2, params: FluidParams, model: PlateModel,
                             tolerance: float | None = None, as_printed: bool = False,
                             time_tol: float = 1e-9) -> RelativeEnergyReport:
    """Signed residual of the relative energy inequality at every snapshot.

    ``trajectory2`` plays the smooth comparison solution: its time
    derivatives come from centred differences (one-sided at the ends).  Both
    trajectories must live on the same grid at the same times.  The
    default tolerance is ``10 (dt + hx) (1 + E(0))`` with ``dt`` the largest
    snapshot spacing and ``E(0)`` the energy of the first state.
    """
    st1, st2 = _states(trajectory1), _states(trajectory2)
    if len(st1) != len(st2):
        raise ValidationError("trajectories have different numbers of snapshots")
    t = np.array([s.time for s in st1])
    t2 = np.array([s.time for s in st2])
    if np.max(np.abs(t - t2)) > time_tol * max(1.0, float(np.max(np.abs(t)))):
        raise ValidationError("trajectories are not synchronized")
    grid = st1[0].grid
    for s1, s2 in zip(st1, st2):
        _same_grid(s1, s2)
    g = params.gamma
    dU2 = _time_derivative(np.stack([s.fluid.U.values for s in st2]), t)
    dpi2 = _time_derivative(np.stack([s.fluid.r.values ** (g - 1.0) for s in st2]), t)
    dv2 = _time_derivative(np.stack([s.plate.v.values for s in st2]), t)
    thermal = st1[0].plate.theta is not None and st2[0].plate.theta is not None
    dth2 = _time_derivative(np.stack([s.plate.theta.values for s in st2]), t) if thermal else None
    ent, diss, rem = [], [], []
    for k, (s1, s2) in enumerate(zip(st1, st2)):
        ent.append(relative_entropy(s1, s2, params, model).total)
        geo1 = s1.geometry()
        G = transformed_gradient(VectorField(s1.fluid.U.values - s2.fluid.U.values, grid), geo1).values
        S = stress_tensor(G, params)
        rate = _fluid_int(geo1.jacobian.values * np.einsum("ab...,ab...->...", S, G), grid)
        rate += model.alpha * gradient_sq_integral(PlateField(s1.plate.v.values - s2.plate.v.values, grid))
        if thermal:
            rate += gradient_sq_integral(PlateField(s1.plate.theta.values - s2.plate.theta.values, grid))
        diss.append(rate)
        terms = remainder_terms(s1, s2, dU2[k], dpi2[k], dv2[k], params, model,
                                dth2[k] if thermal else None, as_printed)
        rem.append(sum(terms.values()))
    ent = np.array(ent)
    diss_cum = cumulative_trapezoid(diss, t, initial=0.0) if len(t) > 1 else np.zeros(1)
    rem_cum = cumulative_trapezoid(rem, t, initial=0.0) if len(t) > 1 else np.zeros(1)
    residual = ent + diss_cum - ent[0] - rem_cum
    if tolerance is None:
        dt = float(np.max(np.diff(t))) if len(t) > 1 else 0.0
        e0 = energy(st1[0], params, model).stored
        tolerance = 10.0 * (dt + grid.hx) * (1.0 + e0)
    return RelativeEnergyReport(t, ent, diss_cum, rem_cum, residual, float(tolerance))


# --------------------------------------------------------------------------
# Gronwall

class GronwallReport(NamedTuple):
    times: np.ndarray
    values: np.ndarray
    bound: np.ndarray  # E(0) exp(C int_0^t h) + tolerance
    flagged: list

    @property
    def passed(self) -> bool:
        return not self.flagged


def gronwall_check(times, E_series, h_series, C: float, tolerance: float = 1e-9) -> GronwallReport:
    """Check ``E(t) <= E(0) exp(C int_0^t h) + tolerance`` pointwise."""
    t = np.asarray(times, dtype=float)
    E = np.asarray(E_series, dtype=float)
    h = np.asarray(h_series, dtype=float)
    if not (t.shape == E.shape == h.shape):
        raise ValidationError("time, E and h series must share one time grid")
    if np.any(h < 0):
        raise ValidationError("h must be nonnegative")
    H = cumulative_trapezoid(h, t, initial=0.0) if t.size > 1 else np.zeros_like(t)
    bound = E[0] * np.exp(C * H) + tolerance
    flagged = [int(k) for k in np.flatnonzero(E > bound)]
    return GronwallReport(t, E, bound, flagged)


# --------------------------------------------------------------------------
# transfer between grids

def _interp_periodic(a: np.ndarray, x_old: np.ndarray, x_new: np.ndarray, period: float, axis: int):
    a = np.moveaxis(a, axis, -1)
    flat = a.reshape(-1, a.shape[-1])
    out = np.stack([np.interp(x_new, x_old, row, period=period) for row in flat])
    return np.moveaxis(out.reshape(a.shape[:-1] + (x_new.size,)), -1, axis)


def _interp_plain(a: np.ndarray, x_old: np.ndarray, x_new: np.ndarray, axis: int):
    a = np.moveaxis(a, axis, -1)
    flat = a.reshape(-1, a.shape[-1])
    out = np.stack([np.interp(x_new, x_old, row) for row in flat])
    return np.moveaxis(out.reshape(a.shape[:-1] + (x_new.size,)), -1, axis)


def _interp_fourier(a: np.ndarray, n_new: int, axis: int) -> np.ndarray:
    """Trigonometric interpolation of periodic samples onto ``n_new`` equispaced nodes."""
    n = a.shape[axis]
    if n_new == n:
        return a.copy()
    c = np.fft.rfft(a, axis=axis)
    keep = min(n, n_new) // 2 + 1
    c = np.take(c, np.arange(keep), axis=axis)
    idx = [slice(None)] * c.ndim
    idx[axis] = keep - 1
    idx = tuple(idx)
    if n_new > n and n % 2 == 0:
        # the old Nyquist mode becomes a cosine split between +k and -k
        c[idx] *= 0.5
    elif n_new < n and n_new % 2 == 0:
        # the new Nyquist bin only sees the real part of +k and -k combined
        c[idx] = 2.0 * c[idx].real
    return np.fft.irfft(c, n=n_new, axis=axis) * (n_new / n)


def _regrid(a: np.ndarray, old: Grid, new: Grid, lead: int, fluid: bool) -> np.ndarray:
    out = a
    for k, (xo, xn, L) in enumerate(zip(old.plate_axes(), new.plate_axes(), old.plate_lengths)):
        ax = lead + k
        if old.periodic and not fluid:
            out = _interp_fourier(out, xn.size, ax)
        elif old.periodic:
            out = _interp_periodic(out, xo, xn, L, ax)
        else:
            out = _interp_plain(out, xo, xn, ax)
    if fluid:
        out = _interp_plain(out, old.z_nodes(), new.z_nodes(), out.ndim - 1)
    return out


def interpolate_state(state: CoupledState, grid: Grid) -> CoupledState:
    """Carry a state onto another grid of the same box.

    Fluid fields are interpolated multilinearly.  Periodic plate fields use
    trigonometric interpolation: a piecewise linear plate has kinks whose
    discrete Laplacian would swamp the bending gap.
    """
    old = state.grid
    if (old.plate_lengths != grid.plate_lengths or old.plate_topology != grid.plate_topology
            or old.d != grid.d):
        raise GridMismatchError("interpolation needs grids of the same box and topology")
    r = _regrid(state.fluid.r.values, old, grid, 0, True)
    U = _regrid(state.fluid.U.values, old, grid, 1, True)
    w = _regrid(state.plate.w.values, old, grid, 0, False)
    v = _regrid(state.plate.v.values, old, grid, 0, False)
    th = state.plate.theta
    th = PlateField(_regrid(th.values, old, grid, 0, False), grid) if th is not None else None
    fluid = FluidState(ScalarField(r, grid), VectorField(U, grid))
    return CoupledState(fluid, PlateState(PlateField(w, grid), PlateField(v, grid), th), state.time)
