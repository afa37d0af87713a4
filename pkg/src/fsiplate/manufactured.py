"""Manufactured solutions for the coupled stepper.

A smooth periodic (r, U, w) is chosen so that U vanishes on the bottom wall
and matches the plate velocity on the top; the sources that make it an exact
solution are computed from fourth-order central differences of the analytic
fields, so any field recipe can be plugged in without symbolic algebra.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coupling import CoupledState, Forcing, InitialData, run, SchemeConfig
from .errors import ValidationError
from .fluid import FluidParams, FluidState
from .geometry_ale import Grid, PlateField, ScalarField, VectorField
from .plate import PlateModel, PlateState

DELTA = 1e-3


def _d(f: Callable, k: int, delta: float = DELTA) -> Callable:
    """Fourth-order central difference of ``f(t, X, z)`` in argument ``k``."""

    def df(*args):
        def at(s):
            a = list(args)
            a[k] = a[k] + s
            return f(*a)
        return (-at(2 * delta) + 8 * at(delta) - 8 * at(-delta) + at(-2 * delta)) / (12 * delta)

    return df


@dataclass(frozen=True)
class ManufacturedSolution:
    """Travelling-wave density, plate ``a(t) sin(k X)`` and a matching velocity.

    * ``w = eps cos(t) sin(k X)``
    * ``U1 = eps cos(t) sin(k X) (z + 1) z``
    * ``U2 = (z + 1) w_t + eps sin(t) cos(k X) (z + 1) z``
    * ``r = rho_mean + amp cos(k X - t) (z + 1)^2``
    """

    eps: float = 0.05
    amp: float = 0.2
    rho_mean: float = 1.0
    k: int = 1

    def w(self, t, X):
        return self.eps * np.cos(t) * np.sin(self.k * X)

    def wt(self, t, X):
        return -self.eps * np.sin(t) * np.sin(self.k * X)

    def wtt(self, t, X):
        return -self.w(t, X)

    def wx(self, t, X):
        return self.eps * self.k * np.cos(t) * np.cos(self.k * X)

    def r(self, t, X, z):
        return self.rho_mean + self.amp * np.cos(self.k * X - t) * (z + 1) ** 2

    def U1(self, t, X, z):
        return self.eps * np.cos(t) * np.sin(self.k * X) * (z + 1) * z

    def U2(self, t, X, z):
        return (z + 1) * self.wt(t, X) + self.eps * np.sin(t) * np.cos(self.k * X) * (z + 1) * z

    # plate operators in closed form for the single Fourier mode
    def lap_w(self, t, X):
        return -self.k ** 2 * self.w(t, X)

    def bilap_w(self, t, X):
        return self.k ** 4 * self.w(t, X)

    def lap_wt(self, t, X):
        return -self.k ** 2 * self.wt(t, X)

    # ------------------------------------------------------------------
    def state(self, t: float, grid: Grid) -> CoupledState:
        if grid.d != 2 or not grid.periodic:
            raise ValidationError("manufactured solutions are set up for periodic 2D grids")
        X, Z = grid.fluid_mesh()
        x = grid.plate_axes()[0]
        fluid = FluidState(ScalarField(self.r(t, X, Z), grid),
                           VectorField(np.stack([self.U1(t, X, Z), self.U2(t, X, Z)]), grid))
        plate = PlateState(PlateField(self.w(t, x), grid), PlateField(self.wt(t, x), grid))
        return CoupledState(fluid, plate, t)

    def initial_data(self, grid: Grid) -> InitialData:
        s = self.state(0.0, grid)
        r = s.fluid.r
        return InitialData(r, VectorField(r.values * s.fluid.U.values, grid), s.plate.w, s.plate.v)

    # ------------------------------------------------------------------
    def _physical(self, f):
        """Physical x and y derivatives of a pulled-back field ``f(t, X, z)``."""
        fX, fz = _d(f, 1), _d(f, 2)

        def dx(t, X, z):
            J = 1.0 + self.w(t, X)
            return fX(t, X, z) - (z + 1) * self.wx(t, X) / J * fz(t, X, z)

        def dy(t, X, z):
            return fz(t, X, z) / (1.0 + self.w(t, X))

        return dx, dy

    def _stress(self, params: FluidParams):
        d1 = self._physical(self.U1)
        d2 = self._physical(self.U2)

        def S(a, b):
            def f(t, X, z):
                G = [[d1[0](t, X, z), d1[1](t, X, z)], [d2[0](t, X, z), d2[1](t, X, z)]]
                out = params.mu * G[a][b]
                if a == b:
                    out = out + (params.mu + params.lam) * (G[0][0] + G[1][1])
                return out
            return f

        return S

    def forcing(self, grid: Grid, params: FluidParams, model: PlateModel) -> Forcing:
        """Sources for the density, velocity and plate equations on ``grid``."""
        if model.kind != "linear":
            raise ValidationError("manufactured sources are available for the linear plate")
        g = params.gamma
        X, Z = grid.fluid_mesh()
        x = grid.plate_axes()[0]
        U = (self.U1, self.U2)
        S = self._stress(params)

        def J(t, X, z):
            return 1.0 + self.w(t, X)

        def mass(t, X, z):
            return J(t, X, z) * self.r(t, X, z)

        def flux_x(t, X, z):
            return self.r(t, X, z) * J(t, X, z) * self.U1(t, X, z)

        def flux_z(t, X, z):
            rel = self.U2(t, X, z) - (z + 1) * (self.wx(t, X) * self.U1(t, X, z) + self.wt(t, X))
            return self.r(t, X, z) * rel

        def p(t, X, z):
            return self.r(t, X, z) ** g

        def s_r(t):
            val = (_d(mass, 0)(t, X, Z) + _d(flux_x, 1)(t, X, Z) + _d(flux_z, 2)(t, X, Z))
            return val / J(t, X, Z)

        grads = [self._physical(u) for u in U]
        dp = self._physical(p)
        divS = []
        for a in range(2):
            dS0 = self._physical(S(a, 0))[0]
            dS1 = self._physical(S(a, 1))[1]
            divS.append((dS0, dS1))

        def s_U(t):
            r = self.r(t, X, Z)
            rel = (self.U1(t, X, Z), self.U2(t, X, Z) - (Z + 1) * self.wt(t, X))
            out = []
            for a in range(2):
                acc = _d(U[a], 0)(t, X, Z)
                acc = acc + rel[0] * grads[a][0](t, X, Z) + rel[1] * grads[a][1](t, X, Z)
                force = dp[a](t, X, Z) - divS[a][0](t, X, Z) - divS[a][1](t, X, Z)
                out.append(acc + force / r)
            return np.stack(out)

        def s_w(t):
            z0 = np.zeros_like(x)
            T21 = S(1, 0)(t, x, z0)
            T22 = S(1, 1)(t, x, z0) - (p(t, x, z0) - params.p_ref)
            load = self.wx(t, x) * T21 - T22
            return (self.wtt(t, x) + self.bilap_w(t, x) - model.alpha * self.lap_wt(t, x) - load)

        return Forcing(s_r, s_U, s_w)

    # ------------------------------------------------------------------
    def error(self, state: CoupledState) -> float:
        """Discrete L2 distance of a state from the exact solution at its time."""
        grid = state.grid
        ex = self.state(state.time, grid)
        fw = grid.fluid_weights()
        pw = grid.plate_weights()
        e = np.sum(fw * (state.fluid.r.values - ex.fluid.r.values) ** 2)
        e += np.sum(fw * np.sum((state.fluid.U.values - ex.fluid.U.values) ** 2, axis=0))
        e += np.sum(pw * (state.plate.w.values - ex.plate.w.values) ** 2)
        e += np.sum(pw * (state.plate.v.values - ex.plate.v.values) ** 2)
        return float(np.sqrt(e))


def convergence_study(solution: ManufacturedSolution, levels, params: FluidParams,
                      model: PlateModel, t_end: float = 0.5, dt0: float = 0.04,
                      base_grid: Grid | None = None) -> dict:
    """Run the forced problem on ``levels`` (cells per direction) with dt halving.

    Returns the resolution list, the space-time L2 error per level (maximum
    over snapshots of the discrete L2 distance) and the observed orders.
    """
    levels = list(levels)
    base = base_grid or Grid(levels[0], levels[0])
    errors = []
    for k, n in enumerate(levels):
        grid = base.with_resolution(n, n)
        dt = dt0 * levels[0] / n
        cfg = SchemeConfig(dt=dt, t_end=t_end)
        traj = run(solution.initial_data(grid), cfg, params, model,
                   forcing=solution.forcing(grid, params, model), fixed_dt=True)
        errors.append(max(solution.error(s) for s in traj.states))
    errors = np.array(errors)
    ratios = np.array(levels[1:], float) / np.array(levels[:-1], float)
    orders = np.log(errors[:-1] / errors[1:]) / np.log(ratios)
    return {"levels": levels, "errors": errors, "orders": orders}
