"""Coupled fluid-plate time stepping.

One step solves for the new fluid velocity and plate velocity together.  The
density follows an upwind flux-form mass update, the pressure enters through
the new density (Newton iteration), the viscous stress is a P1 finite-element
form and the plate bending and damping terms are implicit.  Fluid and plate
exchange momentum through the same discrete operators, so the kinematic
condition holds exactly and the discrete energy cannot grow: every step
satisfies

    E(n+1) + viscous + plate damping increments <= E(n)

once the nonlinear iteration has converged.  The increments are recorded so
the energy budget can be checked with the exact dissipated amounts.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid

from .errors import (ClampedDataError, CollisionError, DimensionError,
                     GridMismatchError, InfiniteKineticEnergyError,
                     InitialCollisionError, MissingTemperatureError,
                     NonPositiveDensityError, SolverDivergenceError,
                     TopologyError, ValidationError, VacuumError)
from .fluid import R_FLOOR, FluidParams, FluidState, stress_tensor
from .geometry_ale import (AleGeometry, Grid, PlateField, ScalarField,
                           VectorField, build_geometry, check_same_grid,
                           graph_normal, surface_jacobian,
                           transformed_gradient)
from .plate import (PlateModel, PlateState, integrate, laplacian,
                    plate_force, plate_operators)

COUPLING_MODES = ("monolithic",)


@dataclass(frozen=True, eq=False)
class CoupledState:
    fluid: FluidState
    plate: PlateState
    time: float = 0.0

    def __post_init__(self):
        if self.fluid.r.grid != self.plate.w.grid:
            raise GridMismatchError("fluid and plate live on different grids")
        if not self.time >= 0:
            raise ValidationError("time must be >= 0")

    @property
    def grid(self) -> Grid:
        return self.plate.w.grid

    def geometry(self) -> AleGeometry:
        return build_geometry(self.plate.w, self.plate.v)


@dataclass(frozen=True)
class SchemeConfig:
    dt: float = 0.01
    t_end: float = 1.0
    collision_eps: float = 0.05
    cfl_safety: float = 0.4
    coupling_mode: str = "monolithic"
    output_every: int = 1
    newton_tol: float = 1e-10
    max_newton: int = 40

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if not self.t_end >= 0:
            raise ValidationError(f"t_end must be >= 0, got {self.t_end}")
        if not 0 < self.collision_eps < 1:
            raise ValidationError("collision_eps must lie in (0, 1)")
        if not 0 < self.cfl_safety <= 1:
            raise ValidationError("cfl_safety must lie in (0, 1]")
        if self.coupling_mode not in COUPLING_MODES:
            raise ValidationError(f"unknown coupling mode {self.coupling_mode!r}; "
                                  f"available: {', '.join(COUPLING_MODES)}")
        if int(self.output_every) != self.output_every or self.output_every < 1:
            raise ValidationError("output_every must be a positive integer")


@dataclass(frozen=True, eq=False)
class InitialData:
    rho0: ScalarField
    momentum0: VectorField
    w0: PlateField
    v0: PlateField
    theta0: PlateField | None = None


@dataclass(frozen=True, eq=False)
class Forcing:
    """Body sources ``s_r`` (mass per volume and time), ``s_U`` (acceleration) and ``s_w``.

    Each is a callable of time returning nodal arrays on the fixed grid; they
    are used by manufactured-solution runs.
    """

    s_r: Callable | None = None
    s_U: Callable | None = None
    s_w: Callable | None = None


# --------------------------------------------------------------------------
# initial data

def _clamped_ok(w: np.ndarray, grid: Grid) -> bool:
    wmax = max(np.max(np.abs(w)), 1e-300)
    tol_w = 1e-12 * wmax + 1e-14
    for ax, h in enumerate(grid.plate_spacing):
        w0 = np.take(w, 0, axis=ax)
        wn = np.take(w, -1, axis=ax)
        if np.max(np.abs(w0)) > tol_w or np.max(np.abs(wn)) > tol_w:
            return False
        # second-order one-sided normal derivatives at both ends
        d0 = (-3 * w0 + 4 * np.take(w, 1, axis=ax) - np.take(w, 2, axis=ax)) / (2 * h)
        dn = (3 * wn - 4 * np.take(w, -2, axis=ax) + np.take(w, -3, axis=ax)) / (2 * h)
        curv = np.max(np.abs(np.diff(w, 2, axis=ax))) / h ** 2
        tol_d = 1e-8 + 2.0 * h * curv
        if max(np.max(np.abs(d0)), np.max(np.abs(dn))) > tol_d:
            return False
    return True


def validate_initial_data(data: InitialData) -> CoupledState:
    """Check the compatibility conditions and build the initial state."""
    grid = data.w0.grid
    check_same_grid(data.rho0, data.momentum0)
    if data.rho0.grid != grid or data.v0.grid != grid:
        raise GridMismatchError("initial data live on different grids")
    rho = data.rho0.values
    mom = data.momentum0.values
    moving = np.any(mom != 0, axis=0)
    if np.any(rho < 0):
        raise NonPositiveDensityError("initial density is negative somewhere")
    if np.any(moving & (rho <= 0)):
        raise NonPositiveDensityError("initial density vanishes where the momentum does not")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ke = np.where(moving, np.sum(mom ** 2, axis=0) / np.where(moving, rho, 1.0), 0.0)
    if not np.all(np.isfinite(ke)):
        raise InfiniteKineticEnergyError("initial kinetic energy density is not finite")
    if not grid.periodic and not _clamped_ok(data.w0.values, grid):
        raise ClampedDataError("clamped plate data must vanish with their normal derivative")
    if not np.all(1.0 + data.w0.values > 0):
        raise InitialCollisionError("initial displacement must satisfy w0 > -1")
    with np.errstate(divide="ignore", invalid="ignore"):
        U = np.where(moving, mom / np.where(moving, rho, 1.0), 0.0)
    fluid = FluidState(ScalarField(rho, grid), VectorField(U, grid))
    plate = PlateState(data.w0, data.v0, data.theta0)
    return CoupledState(fluid, plate, 0.0)


# --------------------------------------------------------------------------
# discrete operators of the monolithic step (two-dimensional fluid)

@dataclass
class _Layout:
    grid: Grid
    nx: int
    nz: int
    N: int  # fluid nodes
    nint: int  # interior nodes per component
    nunk: int
    E: sp.csr_matrix  # unknowns -> nodal velocity (2N)
    D: sp.csr_matrix  # faces -> net outflow per node
    faceL: np.ndarray
    faceR: np.ndarray
    vol: np.ndarray  # dual-cell volumes per node
    Sv: sp.csr_matrix  # plate values -> nodes (column broadcast)
    Pv: sp.csr_matrix  # nodes -> plate, weighted column sums
    lap: sp.csr_matrix
    bilap: sp.csr_matrix
    grad_plate: sp.csr_matrix
    plate_edge_w: np.ndarray


_layouts: dict = {}


def _layout(grid: Grid) -> _Layout:
    lay = _layouts.get(grid)
    if lay is not None:
        return lay
    nx, nz = grid.nx, grid.nz
    nzp = nz + 1
    N = nx * nzp
    node = np.arange(N).reshape(nx, nzp)
    inner = node[:, 1:-1].ravel()
    nint = inner.size
    nunk = 2 * nint + nx
    rows, cols = [], []
    rows += list(inner)
    cols += list(range(nint))
    rows += list(N + inner)
    cols += list(range(nint, 2 * nint))
    rows += list(N + node[:, -1])
    cols += list(range(2 * nint, 2 * nint + nx))
    E = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(2 * N, nunk))
    ip = np.roll(np.arange(nx), -1)
    xL = node.ravel()
    xR = node[ip, :].ravel()
    zL = node[:, :-1].ravel()
    zR = node[:, 1:].ravel()
    faceL = np.concatenate([xL, zL])
    faceR = np.concatenate([xR, zR])
    nf = faceL.size
    D = sp.csr_matrix((np.concatenate([np.ones(nf), -np.ones(nf)]),
                       (np.concatenate([faceL, faceR]), np.concatenate([np.arange(nf)] * 2))),
                      shape=(N, nf))
    vol = grid.fluid_weights().ravel()
    Sv = sp.csr_matrix((np.ones(N), (np.arange(N), np.repeat(np.arange(nx), nzp))), shape=(N, nx))
    Pv = sp.csr_matrix((vol, (np.repeat(np.arange(nx), nzp), np.arange(N))), shape=(nx, N))
    ops = plate_operators(grid)
    lay = _Layout(grid, nx, nz, N, nint, nunk, E, D, faceL, faceR, vol, Sv, Pv,
                  ops.lap, ops.lap @ ops.lap, ops.edge_diffs[0], ops.edge_weights[0])
    _layouts.clear()
    _layouts[grid] = lay
    return lay


def _face_matrix(lay: _Layout, w: np.ndarray):
    """Face volume fluxes as a linear map of the unknowns, geometry frozen at ``w``."""
    grid = lay.grid
    nx, nz = lay.nx, lay.nz
    nzp = nz + 1
    hx, hz = grid.hx, grid.hz
    N = lay.N
    node = np.arange(N).reshape(nx, nzp)
    ip = np.roll(np.arange(nx), -1)
    J = 1.0 + w
    Jf = 0.5 * (J + J[ip])
    wx = (np.roll(w, -1) - np.roll(w, 1)) / (2 * hx)
    theta = grid.z_weights() / hz
    # x faces
    cx = (hz * theta[None, :] * Jf[:, None]).ravel() * 0.5
    nfx = N
    rows = [np.arange(nfx), np.arange(nfx)]
    cols = [node.ravel(), node[ip, :].ravel()]
    vals = [cx, cx]
    # z faces: U2 average minus the grid motion
    zf = 0.5 * (grid.z_nodes()[:-1] + grid.z_nodes()[1:]) + 1.0
    fz = nfx + np.arange(nx * nz)
    lo = node[:, :-1].ravel()
    hi = node[:, 1:].ravel()
    half = np.full(nx * nz, 0.5 * hx)
    tang = (-0.5 * hx * zf[None, :] * wx[:, None]).ravel()
    rows += [fz, fz, fz, fz]
    cols += [N + lo, N + hi, lo, hi]
    vals += [half, half, tang, tang]
    An = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(nfx + nx * nz, 2 * N))
    Av = sp.csr_matrix(((-hx * np.broadcast_to(zf, (nx, nz))).ravel(),
                        (fz, np.repeat(np.arange(nx), nz))), shape=(nfx + nx * nz, nx))
    A = An @ lay.E
    A = sp.csr_matrix(A + sp.hstack([sp.csr_matrix((A.shape[0], 2 * lay.nint)), Av]))
    return A


def _viscous_matrix(lay: _Layout, w: np.ndarray, params: FluidParams) -> sp.csr_matrix:
    """P1 form ``sum_T |T| J_T S(grad^w U) : grad^w U`` on the split cells."""
    grid = lay.grid
    nx, nz = lay.nx, lay.nz
    nzp = nz + 1
    hx, hz = grid.hx, grid.hz
    node = np.arange(lay.N).reshape(nx, nzp)
    ip = np.roll(np.arange(nx), -1)
    I, Jz = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
    a = node[I, Jz].ravel()
    b = node[ip[I], Jz].ravel()
    c = node[I, Jz + 1].ravel()
    d = node[ip[I], Jz + 1].ravel()
    zj = grid.z_nodes()[Jz].ravel()
    wi = w[I].ravel()
    wip = w[ip[I]].ravel()
    wx = (wip - wi) / hx
    nt = a.size
    blocks = []
    # T1 = (a, b, d), T2 = (a, d, c)
    for (pX, mX, pZ, mZ, fx, fz) in ((b, a, d, b, 2 / 3, 1 / 3), (d, c, c, a, 1 / 3, 2 / 3)):
        wc = wi + fx * (wip - wi)
        Jt = 1.0 + wc
        zc = zj + fz * hz
        rr = np.arange(nt)
        DX = sp.csr_matrix((np.concatenate([np.ones(nt), -np.ones(nt)]) / hx,
                            (np.concatenate([rr, rr]), np.concatenate([pX, mX]))), shape=(nt, lay.N))
        DZ = sp.csr_matrix((np.concatenate([np.ones(nt), -np.ones(nt)]) / hz,
                            (np.concatenate([rr, rr]), np.concatenate([pZ, mZ]))), shape=(nt, lay.N))
        B1 = DX + sp.diags(-(zc + 1.0) * wx / Jt) @ DZ
        B2 = sp.diags(1.0 / Jt) @ DZ
        blocks.append((B1, B2, 0.5 * hx * hz * Jt))
    B1 = sp.vstack([blk[0] for blk in blocks])
    B2 = sp.vstack([blk[1] for blk in blocks])
    W = sp.diags(np.concatenate([blk[2] for blk in blocks]))
    scal = B1.T @ W @ B1 + B2.T @ W @ B2
    Z = sp.csr_matrix((lay.N, lay.N))
    K = params.mu * sp.bmat([[scal, Z], [Z, scal]])
    Tr = sp.hstack([B1, B2])
    K = K + (params.mu + params.lam) * (Tr.T @ W @ Tr)
    return sp.csr_matrix(K)


def _convection_matrix(lay: _Layout, F: np.ndarray) -> sp.csr_matrix:
    L, R = lay.faceL, lay.faceR
    h = 0.5 * F
    C = sp.csr_matrix((np.concatenate([h, -h, -h, h]),
                       (np.concatenate([L, L, R, R]), np.concatenate([R, L, L, R]))),
                      shape=(lay.N, lay.N))
    return sp.block_diag([C, C], format="csr")


# --------------------------------------------------------------------------
# the step

@dataclass(frozen=True)
class StepInfo:
    dt: float
    viscous_dissipation: float
    plate_dissipation: float
    thermal_dissipation: float
    newton_iterations: int


def cfl_dt(state: CoupledState, config: SchemeConfig) -> float:
    """Step size honouring the advective limit ``cfl_safety * h / max|U - ale velocity|``."""
    grid = state.grid
    geo = state.geometry()
    rel = state.fluid.U.values - geo.ale_velocity.values
    # speed in reference units: horizontal as is, vertical scaled by 1 / J
    c = np.einsum("...cb,b...->c...", geo.inv_grad, rel)
    rate = max(np.max(np.abs(c[0])) / grid.hx, np.max(np.abs(c[-1])) / grid.hz)
    if rate == 0:
        return config.dt
    return min(config.dt, config.cfl_safety / rate)


def _enthalpy(r, params):
    g = params.gamma
    return g / (g - 1.0) * (r ** (g - 1.0) - params.rho_ref ** (g - 1.0))


class StepWorkspace:
    """Incomplete-LU preconditioner shared by consecutive Newton solves.

    The Jacobian changes slowly from step to step, so the factorization is
    rebuilt only when GMRES needs many iterations, the step size changes or
    it has aged; a failed iterative solve falls back to a direct one.
    """

    max_age = 200
    max_iterations = 25

    def __init__(self):
        self.ilu = None
        self.dt = None
        self.size = None
        self.age = 0
        self.last_iterations = 0
        self.previous = None

    def predict(self, x, t, dt):
        """Linear extrapolation of the unknowns from the previous step."""
        p = self.previous
        if p is None or p[0].shape != x.shape or p[2] != t or not np.array_equal(p[1], x):
            return x
        x_old, _, _, dt_old = p
        return x + (x - x_old) * (dt / dt_old)

    def remember(self, x_old, x_new, t_old, t_new):
        self.previous = (x_old, x_new, t_new, t_new - t_old)

    def _refresh(self, assemble, dt):
        Jac = assemble()
        try:
            self.ilu = spla.spilu(Jac, drop_tol=1e-5, fill_factor=15, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError:
            self.ilu = None
        self.dt = dt
        self.size = Jac.shape[0]
        self.age = 0
        return Jac

    def _gmres(self, op, M, b):
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(op, b, M=M, rtol=1e-11, atol=0.0, restart=60, maxiter=4,
                             callback=cb, callback_type="pr_norm")
        self.last_iterations = count[0]
        return x, info == 0 and count[0] <= self.max_iterations

    def solve(self, jac_vec, assemble, b, n, dt):
        stale = (self.ilu is None or self.size != n or self.age > self.max_age
                 or abs(dt - self.dt) > 0.2 * self.dt or self.last_iterations > self.max_iterations)
        Jac = self._refresh(assemble, dt) if stale else None
        op = spla.LinearOperator((n, n), matvec=jac_vec)
        if self.ilu is not None:
            M = spla.LinearOperator((n, n), matvec=self.ilu.solve)
            x, ok = self._gmres(op, M, b)
            if ok:
                return x
            if Jac is None:
                Jac = self._refresh(assemble, dt)
                if self.ilu is not None:
                    M = spla.LinearOperator((n, n), matvec=self.ilu.solve)
                    x, ok = self._gmres(op, M, b)
                    if ok:
                        return x
        try:
            return spla.splu(Jac if Jac is not None else assemble(),
                             permc_spec="MMD_AT_PLUS_A").solve(b)
        except RuntimeError as exc:
            raise SolverDivergenceError(f"linear solve failed: {exc}") from exc


def step(state: CoupledState, config: SchemeConfig, params: FluidParams, model: PlateModel,
         forcing: Forcing | None = None, dt: float | None = None,
         workspace: "StepWorkspace | None" = None):
    """Advance one step; returns ``(new_state, StepInfo)``.

    Passing the same ``workspace`` to consecutive steps reuses the linear
    preconditioner, which ``run`` does automatically.
    """
    grid = state.grid
    if grid.d != 2:
        raise DimensionError("the coupled stepper is implemented for two-dimensional fluids")
    if not grid.periodic:
        raise TopologyError("the coupled stepper needs a periodic plate")
    if model.thermal and state.plate.theta is None:
        raise MissingTemperatureError("thermoelastic models need a temperature field")
    if dt is None:
        dt = cfl_dt(state, config)
    lay = _layout(grid)
    nx, N, nint = lay.nx, lay.N, lay.nint
    hx = grid.hx
    t1 = state.time + dt

    w0 = state.plate.w.values
    v0 = state.plate.v.values
    r0 = state.fluid.r.values.ravel()
    U0 = state.fluid.U.values.reshape(2, -1).ravel()
    J0 = np.repeat(1.0 + w0, grid.nz + 1)
    m0 = J0 * r0
    vol = lay.vol
    Wm = np.concatenate([vol * m0, vol * m0])

    A = _face_matrix(lay, w0)
    K = _viscous_matrix(lay, w0, params)
    E = lay.E

    src_r = np.zeros(N)
    src_U = np.zeros(2 * N)
    src_w = np.zeros(nx)
    if forcing is not None:
        if forcing.s_r is not None:
            src_r = J0 * np.asarray(forcing.s_r(t1)).ravel()
        if forcing.s_U is not None:
            src_U = Wm * np.asarray(forcing.s_U(t1)).reshape(2, -1).ravel()
        if forcing.s_w is not None:
            src_w = np.asarray(forcing.s_w(t1)).ravel()

    force_w = plate_force(model, state.plate.w).ravel()
    plate_rhs = hx * (v0 - dt * (lay.bilap @ w0) - dt * force_w + dt * src_w)
    plate_mat = hx * (sp.identity(nx) + dt * dt * lay.bilap - dt * model.alpha * lay.lap)

    idx = _interior_index(lay)
    U0c = U0.reshape(2, -1)
    x = np.concatenate([U0c[0][idx], U0c[1][idx], v0])
    x_now = x.copy()
    ws = workspace if workspace is not None else StepWorkspace()
    x = ws.predict(x, state.time, dt)
    g = params.gamma
    pref = params.p_ref
    nzp = grid.nz + 1
    scale = 1.0 + np.max(np.abs(x))
    info_iters = 0
    for it in range(config.max_newton):
        info_iters = it + 1
        a = A @ x
        rup = np.where(a >= 0, r0[lay.faceL], r0[lay.faceR])
        F = rup * a
        m1 = m0 - dt / vol * (lay.D @ F) + dt * src_r
        v = x[2 * nint:]
        J1 = np.repeat(1.0 + w0 + dt * v, nzp)
        if np.any(m1 <= 0) or np.any(J1 <= 0):
            raise VacuumError("density lost positivity during the step; reduce dt")
        r1 = m1 / J1
        pi1 = _enthalpy(r1, params)
        p1 = r1 ** g
        Ux = E @ x
        C = _convection_matrix(lay, F)
        res = E.T @ (Wm * (Ux - U0) + dt * (C @ Ux) + dt * (K @ Ux) - dt * src_U)
        res = res + dt * (A.T @ (rup * -(lay.D.T @ pi1)))
        res[2 * nint:] += plate_mat @ v - plate_rhs - dt * (lay.Pv @ (p1 - pref))
        # Newton with the upwind direction and convective flux lagged
        dpi = g * r1 ** (g - 2.0)
        dp = g * r1 ** (g - 1.0)
        Mfl = sp.diags(Wm) + dt * C + dt * K

        def jac_vec(y, rup=rup, Mfl=Mfl, m1=m1, J1=J1, dpi=dpi, dp=dp):
            yv = y[2 * nint:]
            dr = (-dt / vol * (lay.D @ (rup * (A @ y))) - dt * m1 / J1 * np.repeat(yv, nzp)) / J1
            out = E.T @ (Mfl @ (E @ y))
            out = out + dt * (A.T @ (rup * -(lay.D.T @ (dpi * dr))))
            out[2 * nint:] += plate_mat @ yv - dt * (lay.Pv @ (dp * dr))
            return out

        def assemble(rup=rup, Mfl=Mfl, m1=m1, J1=J1, dpi=dpi, dp=dp):
            Rd = sp.diags(rup)
            dr_dx = (sp.diags(-dt / (vol * J1)) @ lay.D @ Rd @ A
                     - sp.diags(dt * m1 / J1 ** 2) @ lay.Sv @ _v_selector(lay))
            Jac = E.T @ Mfl @ E
            Jac = Jac + dt * (A.T @ Rd @ (-(lay.D.T)) @ sp.diags(dpi) @ dr_dx)
            Jac = Jac + _v_rows(lay) @ (sp.csr_matrix(plate_mat) @ _v_selector(lay)
                                        - dt * lay.Pv @ sp.diags(dp) @ dr_dx)
            return sp.csc_matrix(Jac)

        dx = ws.solve(jac_vec, assemble, -res, lay.nunk, dt)
        if not np.all(np.isfinite(dx)):
            raise SolverDivergenceError("Newton update is not finite")
        x = x + dx
        if np.max(np.abs(dx)) <= config.newton_tol * scale:
            break
    else:
        raise SolverDivergenceError(f"Newton iteration did not converge in {config.max_newton} steps")
    ws.age += 1
    ws.remember(x_now, x, state.time, t1)

    # final consistent update with the converged velocities
    a = A @ x
    rup = np.where(a >= 0, r0[lay.faceL], r0[lay.faceR])
    F = rup * a
    m1 = m0 - dt / vol * (lay.D @ F) + dt * src_r
    v1 = x[2 * nint:]
    w1 = w0 + dt * v1
    if np.min(1.0 + w1) <= config.collision_eps:
        raise CollisionError(f"min(1 + w) = {np.min(1.0 + w1):.4g} <= {config.collision_eps:g} "
                             f"at t = {t1:.6g}")
    J1 = np.repeat(1.0 + w1, grid.nz + 1)
    r1 = m1 / J1
    if np.min(r1) < R_FLOOR:
        raise VacuumError(f"density fell below {R_FLOOR:g}")
    Ux = E @ x
    if not (np.all(np.isfinite(Ux)) and np.all(np.isfinite(r1))):
        raise SolverDivergenceError("non-finite values after the step")
    visc = dt * float(Ux @ (K @ Ux))
    plate_diss = dt * model.alpha * float(lay.plate_edge_w @ (lay.grad_plate @ v1) ** 2)
    theta1 = None
    thermal = 0.0
    if state.plate.theta is not None:
        th0 = state.plate.theta.values
        M = sp.csc_matrix(sp.identity(nx) - dt * lay.lap)
        theta1 = spla.spsolve(M, th0 + dt * (lay.lap @ v1))
        thermal = dt * float(lay.plate_edge_w @ (lay.grad_plate @ theta1) ** 2)
        theta1 = PlateField(theta1, grid)
    fluid = FluidState(ScalarField(r1.reshape(grid.fluid_shape), grid),
                       VectorField(Ux.reshape((2,) + grid.fluid_shape), grid))
    plate = PlateState(PlateField(w1, grid), PlateField(v1, grid), theta1)
    return CoupledState(fluid, plate, t1), StepInfo(dt, visc, plate_diss, thermal, info_iters)


def _interior_index(lay: _Layout) -> np.ndarray:
    node = np.arange(lay.N).reshape(lay.nx, lay.nz + 1)
    return node[:, 1:-1].ravel()


def _v_selector(lay: _Layout) -> sp.csr_matrix:
    """Unknowns -> plate velocity."""
    return sp.csr_matrix((np.ones(lay.nx), (np.arange(lay.nx), 2 * lay.nint + np.arange(lay.nx))),
                         shape=(lay.nx, lay.nunk))


def _v_rows(lay: _Layout) -> sp.csr_matrix:
    return _v_selector(lay).T.tocsr()


# --------------------------------------------------------------------------
# trajectories

@dataclass
class Trajectory:
    """Snapshots at the output cadence plus exact cumulative dissipation."""

    states: list = field(default_factory=list)
    viscous_cum: list = field(default_factory=list)
    plate_cum: list = field(default_factory=list)
    thermal_cum: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    terminated: str | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    def __len__(self):
        return len(self.states)

    def __getitem__(self, k):
        return self.states[k]


def run(data: InitialData | CoupledState, config: SchemeConfig, params: FluidParams,
        model: PlateModel, forcing: Forcing | None = None, fixed_dt: bool = False,
        on_step: Callable | None = None, raise_on_collision: bool = True) -> Trajectory:
    """Repeat ``step`` until ``t_end``; the first snapshot is the initial state.

    With ``fixed_dt`` the configured step is used unchanged (the advective
    limit is still checked and a violation raises).  The final step is
    shortened to land on ``t_end``.
    """
    state = data if isinstance(data, CoupledState) else validate_initial_data(data)
    traj = Trajectory([state], [0.0], [0.0], [0.0], [])
    visc = plate = thermal = 0.0
    n = 0
    ws = StepWorkspace()
    t_end = config.t_end
    while state.time < t_end - 1e-12 * max(1.0, t_end):
        dt = cfl_dt(state, config)
        if fixed_dt and dt < config.dt * (1 - 1e-12):
            raise ValidationError(f"configured dt={config.dt:g} violates the advective limit {dt:.3g}")
        dt = min(dt, t_end - state.time)
        try:
            state, info = step(state, config, params, model, forcing, dt=dt, workspace=ws)
        except CollisionError as exc:
            traj.terminated = str(exc)
            if raise_on_collision:
                raise
            break
        n += 1
        visc += info.viscous_dissipation
        plate += info.plate_dissipation
        thermal += info.thermal_dissipation
        traj.steps.append(info)
        if on_step is not None:
            on_step(state, info)
        if n % config.output_every == 0 or state.time >= t_end - 1e-12 * max(1.0, t_end):
            traj.states.append(state)
            traj.viscous_cum.append(visc)
            traj.plate_cum.append(plate)
            traj.thermal_cum.append(thermal)
    return traj


# --------------------------------------------------------------------------
# traction and weak-form residual

def fluid_load(state: CoupledState, geo: AleGeometry | None, params: FluidParams) -> PlateField:
    """Vertical traction the fluid exerts on the plate, per unit reference area.

    ``-S^w [(S(grad^w U) - (p - p_ref) I) nu^w] . e_d`` at the top nodes, with
    one-sided transformed gradients.  A fluid at rest with pressure p pushes
    the plate up with load ``p - p_ref``.
    """
    if geo is None:
        geo = state.geometry()
    grid = state.grid
    G = transformed_gradient(state.fluid.U, geo).values[..., -1]
    S = stress_tensor(G, params)
    p = state.fluid.r.values[..., -1] ** params.gamma - params.p_ref
    d = grid.d
    T = S - np.einsum("ab,...->ab...", np.eye(d), p)
    sn = surface_jacobian(geo.w).values * graph_normal(geo.w)  # (-grad w, 1)
    return PlateField(-np.einsum("b...,b...->...", T[d - 1], sn), grid)


def weak_momentum_residual(trajectory, test_pair, params: FluidParams,
                           model: PlateModel | None = None) -> float:
    """Absolute residual of the coupled momentum weak form over a trajectory.

    ``test_pair = (q_series, psi_series)`` gives the pulled-back fluid test
    field and the plate test function at every snapshot.  Physical time
    derivatives of ``q`` are recovered with the material derivative identity;
    all integrals are trapezoid sums on the fixed domain weighted by J, and in
    time.
    """
    states = list(trajectory.states if isinstance(trajectory, Trajectory) else trajectory)
    q_series, psi_series = test_pair
    if len(q_series) != len(states) or len(psi_series) != len(states):
        raise ValidationError("test pair and trajectory have different lengths")
    grid = states[0].grid
    d = grid.d
    for q, psi in zip(q_series, psi_series):
        qv = q.values
        top = np.zeros((d,) + grid.plate_shape)
        top[-1] = psi.values
        scale = 1.0 + np.max(np.abs(qv))
        if np.max(np.abs(qv[..., -1] - top)) > 1e-12 * scale or np.max(np.abs(qv[..., 0])) > 1e-12 * scale:
            raise ValidationError("inadmissible test pair: q must vanish at the bottom and equal psi e_d on the plate")
    times = np.array([s.time for s in states])
    if len(states) < 2:
        return 0.0
    Qt = np.gradient(np.stack([q.values for q in q_series]), times, axis=0, edge_order=1)
    Pt = np.gradient(np.stack([p.values for p in psi_series]), times, axis=0, edge_order=1)
    fw = grid.fluid_weights()
    pw = grid.plate_weights()
    integrand = []
    for k, s in enumerate(states):
        geo = s.geometry()
        J = geo.jacobian.values
        r = s.fluid.r.values
        U = s.fluid.U.values
        q = q_series[k]
        gq = transformed_gradient(q, geo).values
        phys_qt = Qt[k] - np.einsum("b...,ab...->a...", geo.ale_velocity.values, gq)
        gU = transformed_gradient(s.fluid.U, geo).values
        S = stress_tensor(gU, params)
        divq = np.trace(gq, axis1=0, axis2=1)
        lhs = np.sum(fw * J * (r * np.sum(U * phys_qt, axis=0)
                               + r * np.einsum("a...,b...,ab...->...", U, U, gq)
                               + (r ** params.gamma - params.p_ref) * divq
                               - np.einsum("ab...,ab...->...", S, gq)))
        psi = psi_series[k].values
        v = s.plate.v.values
        lap_w = laplacian(s.plate.w).values
        lap_psi = laplacian(psi_series[k]).values
        ops = plate_operators(grid)
        damp = sum(we @ ((Dk @ v.ravel()) * (Dk @ psi.ravel()))
                   for Dk, we in zip(ops.edge_diffs, ops.edge_weights))
        lhs += np.sum(pw * (v * Pt[k] - lap_w * lap_psi)) - (model.alpha if model else 0.0) * damp
        if model is not None and model.kind != "linear":
            lhs -= np.sum(pw * plate_force(model, s.plate.w) * psi)
        integrand.append(lhs)
    space_time = trapezoid(integrand, times)

    def boundary(k):
        s = states[k]
        J = 1.0 + s.plate.w.values[..., None]
        fluid = np.sum(fw * J * s.fluid.r.values * np.sum(s.fluid.U.values * q_series[k].values, axis=0))
        return fluid + np.sum(pw * s.plate.v.values * psi_series[k].values)

    return float(abs(space_time - (boundary(-1) - boundary(0))))
