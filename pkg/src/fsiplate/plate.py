"""Plate operators: bending, structural damping, nonlinear elastic forces, heat.

All discrete operators are built from one forward-difference matrix per plate
direction.  The Laplacian is ``-W^-1 D^T W_e D`` with trapezoid node weights
``W`` and edge weights ``W_e``; on clamped plates this coincides with the
ghost-value stencil ``w[-1] = w[1]`` and makes the bending energy
``1/2 sum W (Lap w)^2`` have the composed stencil ``Lap(Lap w)`` as its exact
gradient.  The same construction makes every nonlinear force below the exact
gradient of its discrete potential.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (DimensionError, MissingTemperatureError,
                     SolverDivergenceError, TopologyError, ValidationError)
from .geometry_ale import Grid, PlateField, check_collision

PLATE_KINDS = ("linear", "kirchhoff", "von_karman", "berger",
               "thermo_semilinear", "thermo_quasilinear")


def _cube(s):
    return s ** 3


def _quartic_quarter(s):
    return 0.25 * s ** 4


@dataclass(frozen=True, eq=False)
class KirchhoffCoeffs:
    """F(w) = -nu_k div[|grad w|^q_exp grad w - mu_k |grad w|^r_exp grad w] + f(w) - h."""

    nu_k: float = 0.0
    q_exp: float = 2.0
    r_exp: float = 0.0
    mu_k: float = 0.0
    f: Callable = _cube
    # antiderivative of f vanishing at 0; computed by quadrature when omitted
    Phi: Callable | None = _quartic_quarter
    h: PlateField | None = None

    def __post_init__(self):
        if self.nu_k < 0:
            raise ValidationError(f"kirchhoff nu_k must be >= 0, got {self.nu_k}")
        if not (self.q_exp > self.r_exp >= 0):
            raise ValidationError(
                f"kirchhoff exponents need q_exp > r_exp >= 0, got {self.q_exp}, {self.r_exp}")
        if self.f is not _cube and self.Phi is _quartic_quarter:
            object.__setattr__(self, "Phi", None)


@dataclass(frozen=True, eq=False)
class VonKarmanCoeffs:
    """F(w) = -[w, v(w) + F0] - h with the Airy function v(w)."""

    F0: PlateField | None = None
    h: PlateField | None = None


@dataclass(frozen=True, eq=False)
class BergerCoeffs:
    """F(w) = -[nu_b int |grad w|^2 - G] Lap w - h."""

    nu_b: float = 1.0
    G: float = 0.0
    h: PlateField | None = None

    def __post_init__(self):
        if not self.nu_b > 0:
            raise ValidationError(f"berger nu_b must be > 0, got {self.nu_b}")


@dataclass(frozen=True, eq=False)
class PlateModel:
    """Plate model selector.

    ``coefficients`` holds the record of the chosen nonlinear force.  The
    semilinear thermoelastic model takes any of the three records (or none for
    a linear force); the quasilinear one needs none.
    """

    kind: str = "linear"
    alpha: float = 0.0
    coefficients: object = None

    def __post_init__(self):
        if self.kind not in PLATE_KINDS:
            raise ValidationError(f"unknown plate model {self.kind!r}")
        if not self.alpha >= 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        expected = {"kirchhoff": KirchhoffCoeffs, "von_karman": VonKarmanCoeffs,
                    "berger": BergerCoeffs}
        c = self.coefficients
        if self.kind in expected:
            if c is None:
                object.__setattr__(self, "coefficients", expected[self.kind]())
            elif not isinstance(c, expected[self.kind]):
                raise ValidationError(f"{self.kind} model needs {expected[self.kind].__name__}")
        elif self.kind == "thermo_semilinear":
            if c is not None and not isinstance(c, tuple(expected.values())):
                raise ValidationError("thermo_semilinear coefficients must be a force record")
        elif c is not None:
            raise ValidationError(f"{self.kind} model takes no coefficients")

    @property
    def thermal(self) -> bool:
        return self.kind.startswith("thermo")

    @property
    def force_record(self):
        """The nonlinear force record, or None when F vanishes."""
        if self.kind in ("linear", "thermo_quasilinear"):
            return None
        return self.coefficients


@dataclass(frozen=True, eq=False)
class PlateState:
    w: PlateField
    v: PlateField
    theta: PlateField | None = None

    def __post_init__(self):
        if self.v.grid != self.w.grid or (self.theta is not None and self.theta.grid != self.w.grid):
            from .errors import GridMismatchError
            raise GridMismatchError("plate state fields live on different grids")
        check_collision(self.w.values)


# --------------------------------------------------------------------------
# sparse building blocks, cached per grid

def _diff_1d(n_cells: int, h: float, periodic: bool) -> sp.csr_matrix:
    if periodic:
        D = sp.diags([-np.ones(n_cells), np.ones(n_cells - 1)], [0, 1], shape=(n_cells, n_cells),
                     format="lil")
        D[n_cells - 1, 0] = 1.0
        return sp.csr_matrix(D) / h
    return sp.diags([-np.ones(n_cells), np.ones(n_cells)], [0, 1],
                    shape=(n_cells, n_cells + 1), format="csr") / h


def _trap_1d(n_nodes: int, h: float, periodic: bool) -> np.ndarray:
    wts = np.full(n_nodes, h)
    if not periodic:
        wts[[0, -1]] *= 0.5
    return wts


@dataclass(frozen=True, eq=False)
class PlateOperators:
    """Difference matrices and weights of one plate grid (flattened C order)."""

    grid: Grid
    node_weights: np.ndarray
    edge_diffs: tuple  # one forward-difference matrix per direction
    edge_weights: tuple
    cell_grads: tuple  # node -> cell-centre gradient components
    cell_area: float
    lap: sp.csr_matrix
    bilap: sp.csr_matrix
    interior: np.ndarray = field(repr=False)  # boolean mask of free nodes


@lru_cache(maxsize=32)
def plate_operators(grid: Grid) -> PlateOperators:
    per = grid.periodic
    cells = grid.plate_cells
    hs = grid.plate_spacing
    shape = grid.plate_shape
    D1 = [_diff_1d(n, h, per) for n, h in zip(cells, hs)]
    T1 = [_trap_1d(m, h, per) for m, h in zip(shape, hs)]
    I1 = [sp.identity(m, format="csr") for m in shape]
    if len(shape) == 1:
        diffs = (D1[0],)
        eweights = (np.full(D1[0].shape[0], hs[0]),)
        grads = (D1[0],)
        area = hs[0]
    else:
        diffs = (sp.kron(D1[0], I1[1], format="csr"), sp.kron(I1[0], D1[1], format="csr"))
        eweights = (np.kron(np.full(cells[0], hs[0]), T1[1]),
                    np.kron(T1[0], np.full(cells[1], hs[1])))
        # averaging matrices from nodes to the cell midpoints along each direction
        A1 = []
        for n, per_ in zip(cells, (per, per)):
            if per_:
                A = sp.diags([0.5 * np.ones(n), 0.5 * np.ones(n - 1)], [0, 1], shape=(n, n),
                             format="lil")
                A[n - 1, 0] = 0.5
                A1.append(sp.csr_matrix(A))
            else:
                A1.append(sp.diags([0.5 * np.ones(n), 0.5 * np.ones(n)], [0, 1],
                                   shape=(n, n + 1), format="csr"))
        grads = (sp.kron(D1[0], A1[1], format="csr"), sp.kron(A1[0], D1[1], format="csr"))
        area = hs[0] * hs[1]
    wn = grid.plate_weights().ravel()
    lap = sum(sp.diags(1.0 / wn) @ (D.T @ sp.diags(we) @ D) for D, we in zip(diffs, eweights))
    lap = sp.csr_matrix(-lap)
    interior = np.ones(shape, dtype=bool)
    if not per:
        for ax in range(len(shape)):
            idx = [slice(None)] * len(shape)
            idx[ax] = [0, -1]
            interior[tuple(idx)] = False
    interior = interior.ravel()
    bilap = sp.csr_matrix(sp.diags(interior.astype(float)) @ lap @ lap)
    return PlateOperators(grid, wn, diffs, eweights, grads, area, lap, bilap, interior)


def _vals(f: PlateField | None, grid: Grid) -> np.ndarray:
    if f is None:
        return np.zeros(grid.plate_shape)
    if f.grid != grid:
        from .errors import GridMismatchError
        raise GridMismatchError("coefficient field lives on a different grid")
    return f.values


def _clamped_values(w: PlateField) -> np.ndarray:
    """Flattened samples with the clamped boundary value w = 0 imposed."""
    ops = plate_operators(w.grid)
    x = w.values.ravel().copy()
    x[~ops.interior] = 0.0
    return x


def _pf(x, grid) -> PlateField:
    return PlateField(np.asarray(x).reshape(grid.plate_shape), grid)


# --------------------------------------------------------------------------
# linear operators

def laplacian(w: PlateField) -> PlateField:
    """Three-point Laplacian per direction (ghost reflection at clamped ends)."""
    return _pf(plate_operators(w.grid).lap @ _clamped_values(w), w.grid)


def bilaplacian(w: PlateField) -> PlateField:
    """Composed Laplacian; zero at clamped boundary nodes, where w is prescribed."""
    return _pf(plate_operators(w.grid).bilap @ _clamped_values(w), w.grid)


def gradient_sq_integral(w: PlateField) -> float:
    """Discrete ``int |grad w|^2`` from forward differences."""
    ops = plate_operators(w.grid)
    x = _clamped_values(w) if not w.grid.periodic else w.values.ravel()
    return float(sum(we @ (D @ x) ** 2 for D, we in zip(ops.edge_diffs, ops.edge_weights)))


def integrate(f: np.ndarray, grid: Grid) -> float:
    return float(np.sum(grid.plate_weights() * f))


def bending_energy(w: PlateField) -> float:
    return 0.5 * integrate(laplacian(w).values ** 2, w.grid)


def second_derivatives(w: PlateField):
    """Centred (w_11, w_22, w_12); periodic wraparound or clamped reflection."""
    grid = w.grid
    if grid.d != 3:
        raise DimensionError("second mixed derivatives need a two-dimensional plate")
    hx, hy = grid.plate_spacing
    mode = "wrap" if grid.periodic else "reflect"
    p = np.pad(w.values, 1, mode=mode)
    c = p[1:-1, 1:-1]
    w11 = (p[2:, 1:-1] - 2 * c + p[:-2, 1:-1]) / hx ** 2
    w22 = (p[1:-1, 2:] - 2 * c + p[1:-1, :-2]) / hy ** 2
    w12 = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4 * hx * hy)
    return w11, w22, w12


def vk_bracket(w: PlateField, u: PlateField) -> PlateField:
    """Von Karman bracket ``w11 u22 + w22 u11 - 2 w12 u12``."""
    if w.grid != u.grid:
        from .errors import GridMismatchError
        raise GridMismatchError("bracket arguments live on different grids")
    a11, a22, a12 = second_derivatives(w)
    b11, b22, b12 = second_derivatives(u)
    return PlateField(a11 * b22 + a22 * b11 - 2 * a12 * b12, w.grid)


_airy_lock = threading.Lock()
_airy_cache: dict = {}


def _airy_solver(grid: Grid):
    with _airy_lock:
        solver = _airy_cache.get(grid)
        if solver is None:
            ops = plate_operators(grid)
            idx = np.flatnonzero(ops.interior)
            K = sp.csc_matrix(ops.bilap[idx][:, idx])
            try:
                solver = (idx, spla.splu(K))
            except RuntimeError as exc:
                raise SolverDivergenceError(f"biharmonic factorization failed: {exc}") from exc
            _airy_cache.clear()
            _airy_cache[grid] = solver
        return solver


def airy_stress(w: PlateField) -> PlateField:
    """Solve ``Lap^2 v = -[w, w]`` with v = dv/dn = 0 on the clamped boundary."""
    grid = w.grid
    if grid.d != 3:
        raise DimensionError("the Airy problem needs a two-dimensional plate")
    if grid.periodic:
        raise TopologyError("the Airy problem is posed with clamped boundary data")
    idx, lu = _airy_solver(grid)
    rhs = -vk_bracket(w, w).values.ravel()
    v = np.zeros(rhs.size)
    v[idx] = lu.solve(rhs[idx])
    if not np.all(np.isfinite(v)):
        raise SolverDivergenceError("Airy solve produced non-finite values")
    return _pf(v, grid)


def airy_residual(w: PlateField, v: PlateField) -> float:
    """Relative residual ``|Lap^2 v + [w, w]| / |[w, w]|`` on free nodes."""
    ops = plate_operators(w.grid)
    src = vk_bracket(w, w).values.ravel()[ops.interior]
    res = bilaplacian(v).values.ravel()[ops.interior] + src
    scale = np.linalg.norm(src)
    return float(np.linalg.norm(res) / scale) if scale > 0 else float(np.linalg.norm(res))


# --------------------------------------------------------------------------
# nonlinear forces and potentials

def _antiderivative(f: Callable, s: np.ndarray) -> np.ndarray:
    x, wq = np.polynomial.legendre.leggauss(16)
    s = np.asarray(s, dtype=float)
    pts = 0.5 * s[..., None] * (x + 1.0)
    return 0.5 * s * np.sum(wq * f(pts), axis=-1)


def _kirchhoff_cells(c: KirchhoffCoeffs, x: np.ndarray, ops: PlateOperators):
    g = [G @ x for G in ops.cell_grads]
    mag = np.sqrt(sum(gk ** 2 for gk in g))
    return g, mag


def _kirchhoff_force(c: KirchhoffCoeffs, w: PlateField) -> np.ndarray:
    ops = plate_operators(w.grid)
    x = w.values.ravel()
    g, mag = _kirchhoff_cells(c, x, ops)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = c.nu_k * mag ** c.q_exp - c.nu_k * c.mu_k * mag ** c.r_exp
    flux = sum(G.T @ (ops.cell_area * coef * gk) for G, gk in zip(ops.cell_grads, g))
    return (flux / ops.node_weights).reshape(w.grid.plate_shape) + c.f(w.values) - _vals(c.h, w.grid)


def _berger_force(c: BergerCoeffs, w: PlateField) -> np.ndarray:
    a = gradient_sq_integral(w)
    return -(c.nu_b * a - c.G) * laplacian(w).values - _vals(c.h, w.grid)


def nonlinear_force(model: PlateModel, w: PlateField) -> PlateField:
    """Nodal values of F(w) for the selected model."""
    grid = w.grid
    if model.kind == "thermo_quasilinear":
        return quasilinear_force(w)
    rec = model.force_record
    if rec is None:
        if model.kind == "linear":
            raise ValidationError("the linear plate model has no nonlinear force")
        return PlateField(np.zeros(grid.plate_shape), grid)
    if isinstance(rec, KirchhoffCoeffs):
        out = _kirchhoff_force(rec, w)
    elif isinstance(rec, BergerCoeffs):
        out = _berger_force(rec, w)
    else:
        v = airy_stress(w)
        out = -vk_bracket(w, PlateField(v.values + _vals(rec.F0, grid), grid)).values \
            - _vals(rec.h, grid)
    if not grid.periodic:
        out = np.where(plate_operators(grid).interior.reshape(grid.plate_shape), out, 0.0)
    return PlateField(out, grid)


def plate_force(model: PlateModel, w: PlateField) -> np.ndarray:
    """F(w) as a plain array, zero for the linear model."""
    if model.kind == "linear" or (model.kind == "thermo_semilinear" and model.coefficients is None):
        return np.zeros(w.grid.plate_shape)
    return nonlinear_force(model, w).values


def potential(model: PlateModel, w: PlateField) -> float:
    """Discrete potential whose gradient is ``nonlinear_force``."""
    grid = w.grid
    if model.kind == "linear" or (model.kind == "thermo_semilinear" and model.coefficients is None):
        return 0.0
    if model.kind == "thermo_quasilinear":
        return 0.25 * integrate(laplacian(w).values ** 4, grid)
    rec = model.force_record
    if isinstance(rec, BergerCoeffs):
        a = gradient_sq_integral(w)
        return 0.25 * rec.nu_b * a ** 2 - 0.5 * rec.G * a - integrate(w.values * _vals(rec.h, grid), grid)
    if isinstance(rec, KirchhoffCoeffs):
        ops = plate_operators(grid)
        _, mag = _kirchhoff_cells(rec, w.values.ravel(), ops)
        grad_part = ops.cell_area * np.sum(
            rec.nu_k * mag ** (rec.q_exp + 2) / (rec.q_exp + 2)
            - rec.nu_k * rec.mu_k * mag ** (rec.r_exp + 2) / (rec.r_exp + 2))
        Phi = rec.Phi(w.values) if rec.Phi is not None else _antiderivative(rec.f, w.values)
        return float(grad_part + integrate(Phi - w.values * _vals(rec.h, grid), grid))
    raise ValidationError(f"no potential is available for the {model.kind} model")


class A3Report(dict):
    """Per-sample values of ``kappa |Lap w|^2 + Pi(w) + C*`` and the violations."""

    @property
    def passed(self) -> bool:
        return not self["violations"]


def check_A3(model: PlateModel, kappa: float, c_star: float, samples) -> A3Report:
    """Evaluate the coercivity inequality ``kappa |Lap w|^2 + Pi(w) + C* >= 0``."""
    if not 0 < kappa < 0.5:
        raise ValidationError("kappa must lie in (0, 1/2)")
    if c_star < 0:
        raise ValidationError("C* must be >= 0")
    vals = []
    for w in samples:
        vals.append(kappa * integrate(laplacian(w).values ** 2, w.grid) + potential(model, w) + c_star)
    vals = np.array(vals)
    viol = [int(i) for i in np.flatnonzero(vals < 0)]
    return A3Report(values=vals, violations=viol, min_value=float(vals.min()) if vals.size else np.inf)


def berger_c_star(model: PlateModel) -> float:
    """Smallest C* making A3 hold for Berger with h = 0, any kappa: max(G, 0)^2 / (4 nu_b)."""
    rec = model.force_record
    if not isinstance(rec, BergerCoeffs) or rec.h is not None:
        raise ValidationError("closed-form C* is available for Berger with h = 0 only")
    return max(rec.G, 0.0) ** 2 / (4.0 * rec.nu_b)


def quasilinear_force(w: PlateField) -> PlateField:
    """``Lap((Lap w)^3)``, the gradient of ``1/4 int (Lap w)^4``."""
    ops = plate_operators(w.grid)
    lw = ops.lap @ _clamped_values(w)
    out = ops.lap @ lw ** 3
    out[~ops.interior] = 0.0
    return _pf(out, w.grid)


def heat_rhs(state: PlateState, wt: PlateField) -> PlateField:
    """Explicit right side ``Lap theta + Lap wt`` of the plate heat equation."""
    if state.theta is None:
        raise MissingTemperatureError("heat_rhs needs a temperature field")
    return PlateField(laplacian(state.theta).values + laplacian(wt).values, state.w.grid)


# --------------------------------------------------------------------------
# spectral norms on periodic plates

def _wavenumber_sq(grid: Grid) -> np.ndarray:
    ks = [2 * np.pi * np.fft.fftfreq(n, d=L / n) for n, L in zip(grid.plate_cells, grid.plate_lengths)]
    mesh = np.meshgrid(*ks, indexing="ij")
    return sum(k ** 2 for k in mesh)


def sobolev_norm(f: np.ndarray, grid: Grid, s: float) -> float:
    """Spectral ``H^s`` norm on a periodic plate (``s`` may be negative)."""
    if not grid.periodic:
        raise TopologyError("spectral norms need a periodic plate")
    fh = np.fft.fftn(f) / f.size
    area = float(np.prod(grid.plate_lengths))
    return float(np.sqrt(area * np.sum(np.abs(fh) ** 2 * (1.0 + _wavenumber_sq(grid)) ** s)))


def lipschitz_probe_A1_A2(model: PlateModel, R: float, pairs, a: float = 0.25) -> dict:
    """Empirical local Lipschitz constant of F from H^2 into H^-a.

    Pairs with identical members are skipped; fields outside the H^2 ball of
    radius ``R`` are rejected.
    """
    ratios = []
    skipped = 0
    for w1, w2 in pairs:
        grid = w1.grid
        for w in (w1, w2):
            if sobolev_norm(w.values, grid, 2.0) > R:
                raise ValidationError(f"sample outside the H^2 ball of radius {R}")
        den = sobolev_norm(w1.values - w2.values, grid, 2.0)
        if den == 0.0:
            skipped += 1
            continue
        num = sobolev_norm(plate_force(model, w1) - plate_force(model, w2), grid, -a)
        ratios.append(num / den)
    ratios = np.array(ratios)
    return {"max_ratio": float(ratios.max()) if ratios.size else 0.0,
            "ratios": ratios, "skipped": skipped, "a": a}
