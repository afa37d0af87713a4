"""Quick property checks across all modules, used by the invariant_suite scenario."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .coupling import (CoupledState, InitialData, SchemeConfig, step,
                       validate_initial_data)
from .diagnostics import relative_entropy
from .fluid import (FluidParams, FluidState, continuity_rhs, pressure_potential,
                    total_mass)
from .geometry_ale import (Grid, PlateField, ScalarField, VectorField,
                           build_geometry, extension_operator,
                           fluid_gradient_values, graph_normal,
                           surface_jacobian, transformed_divergence,
                           transformed_gradient)
from .plate import (BergerCoeffs, PlateModel, PlateState, airy_residual,
                    airy_stress, bilaplacian, integrate, nonlinear_force,
                    potential)
from .regularity import summation_by_parts_residual, threshold_s


class InvariantResult(NamedTuple):
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def random_plate(grid: Grid, rng, amp: float = 0.2, modes: int = 3) -> PlateField:
    """Random smooth periodic displacement with a few Fourier modes."""
    x = grid.plate_axes()[0]
    k = 2 * np.pi / grid.lx
    w = np.zeros(grid.plate_shape)
    for m in range(1, modes + 1):
        a, b = rng.normal(size=2) * amp / m ** 2
        w = w + a * np.sin(m * k * x) + b * np.cos(m * k * x)
    return PlateField(w, grid)


def random_state(grid: Grid, rng, amp: float = 0.2) -> CoupledState:
    """Random admissible state: U vanishes at the bottom and equals (0, v) on top."""
    w = random_plate(grid, rng, amp)
    v = random_plate(grid, rng, amp)
    X, Z = grid.fluid_mesh()
    k = 2 * np.pi / grid.lx
    c = rng.normal(size=4)
    r = 1.0 + 0.3 * np.tanh(c[0] * np.sin(k * X + c[1]) * (Z + 1))
    bump = (Z + 1) * Z
    U1 = c[2] * np.cos(k * X) * bump
    U2 = (Z + 1) * v.values[:, None] + c[3] * np.sin(k * X) * bump
    fluid = FluidState(ScalarField(r, grid), VectorField(np.stack([U1, U2]), grid))
    return CoupledState(fluid, PlateState(w, v), 0.0)


def run_invariant_suite(seed: int = 0, samples: int = 20) -> list[InvariantResult]:
    rng = np.random.default_rng(seed)
    out = []
    grid = Grid(32, 16)

    # flat plate: transformed operators are the plain ones
    geo0 = build_geometry(PlateField(np.zeros(grid.plate_shape), grid))
    f = ScalarField(rng.normal(size=grid.fluid_shape), grid)
    out.append(InvariantResult(
        "flat_plate_gradient", float(np.max(np.abs(
            transformed_gradient(f, geo0).values - fluid_gradient_values(f.values, grid)))), 0.0))

    # extension operator divergence and normal identity
    err_ext = err_norm = 0.0
    for _ in range(samples):
        w = random_plate(grid, rng)
        geo = build_geometry(w)
        g = random_plate(grid, rng)
        div = transformed_divergence(extension_operator(g, geo), geo).values
        err_ext = max(err_ext, float(np.max(np.abs(div - (g.values / (1 + w.values))[:, None]))))
        err_norm = max(err_norm, float(np.max(np.abs(surface_jacobian(w).values * graph_normal(w)[-1] - 1))))
    out.append(InvariantResult("extension_divergence", err_ext, 1e-12))
    out.append(InvariantResult("surface_normal_identity", err_norm, 1e-14))

    # plate: symmetric bilaplacian, Berger force is the potential gradient
    a, b = random_plate(grid, rng), random_plate(grid, rng)
    sym = abs(integrate(bilaplacian(a).values * b.values, grid)
              - integrate(a.values * bilaplacian(b).values, grid))
    out.append(InvariantResult("bilaplacian_symmetry", sym, 1e-10))
    model = PlateModel("berger", coefficients=BergerCoeffs(nu_b=1.0, G=0.5))
    eps = 1e-6
    d = random_plate(grid, rng)
    fd = (potential(model, PlateField(a.values + eps * d.values, grid))
          - potential(model, PlateField(a.values - eps * d.values, grid))) / (2 * eps)
    ex = integrate(nonlinear_force(model, a).values * d.values, grid)
    out.append(InvariantResult("berger_force_gradient", abs(fd - ex) / (1 + abs(ex)), 1e-6))
    g2 = Grid(12, 4, lx=1.0, plate_topology="clamped", ny=12, ly=1.0)
    X, Y = g2.plate_mesh()
    wv = PlateField((X * (1 - X) * Y * (1 - Y)) ** 2 * 16.0, g2)
    out.append(InvariantResult("airy_plug_back", airy_residual(wv, airy_stress(wv)), 1e-10))

    # fluid: mass conservation of the transport and convexity of the potential
    s = random_state(grid, rng)
    geo = s.geometry()
    rate = continuity_rhs(s.fluid, geo).values
    dm = float(np.sum(grid.fluid_weights() * (geo.jacobian.values * rate + s.fluid.r.values * geo.wt.values[:, None])))
    out.append(InvariantResult("mass_rate_zero", abs(dm) / total_mass(s.fluid.r, geo), 1e-13))
    x = rng.uniform(0, 5, 10_000)
    y = rng.uniform(0.1, 5, 10_000)
    out.append(InvariantResult("pressure_potential_nonnegative",
                               float(max(0.0, -np.min(pressure_potential(x, y, 1.7)))), 0.0))

    # relative entropy
    params = FluidParams(rho_ref=1.0)
    worst_self = worst_neg = 0.0
    for _ in range(samples):
        s1, s2 = random_state(grid, rng), random_state(grid, rng)
        worst_self = max(worst_self, abs(relative_entropy(s1, s1, params).total))
        worst_neg = max(worst_neg, -relative_entropy(s1, s2, params).total)
    out.append(InvariantResult("relative_entropy_self", worst_self, 1e-12))
    out.append(InvariantResult("relative_entropy_negative_part", max(worst_neg, 0.0), 0.0))

    # regularity
    worst = 0.0
    for _ in range(samples):
        fa, fb = PlateField(rng.normal(size=32), grid), PlateField(rng.normal(size=32), grid)
        sc = float(np.sqrt(integrate(fa.values ** 2, grid) * integrate(fb.values ** 2, grid)))
        h = grid.hx * int(rng.integers(1, 16))
        worst = max(worst, summation_by_parts_residual(fa, fb, float(rng.uniform(0.05, 0.95)), h) / sc)
    out.append(InvariantResult("summation_by_parts", worst, 1e-12))
    gs = np.linspace(1.8, 6.0, 20)
    mono = 0.0
    for d_, al in ((2, False), (2, True), (3, False), (3, True)):
        vals = [threshold_s(float(g_), d_, al) for g_ in gs]
        mono = max(mono, float(max(0.0, -np.min(np.diff(vals)))))
    out.append(InvariantResult("threshold_monotone", mono, 0.0))

    # coupling: equilibrium fixed point and one-step mass conservation
    g3 = Grid(16, 8)
    rest = validate_initial_data(InitialData(
        ScalarField(np.ones(g3.fluid_shape), g3), VectorField(np.zeros((2,) + g3.fluid_shape), g3),
        PlateField(np.zeros(g3.plate_shape), g3), PlateField(np.zeros(g3.plate_shape), g3)))
    cfg = SchemeConfig(dt=0.01, t_end=0.01)
    nxt, _ = step(rest, cfg, params, PlateModel())
    drift = max(float(np.max(np.abs(nxt.fluid.r.values - 1))), float(np.max(np.abs(nxt.fluid.U.values))),
                float(np.max(np.abs(nxt.plate.w.values))))
    out.append(InvariantResult("equilibrium_fixed_point", drift, 1e-13))
    s0 = random_state(g3, rng, amp=0.05)
    s1, _ = step(s0, cfg, params, PlateModel(alpha=0.5))
    m0 = total_mass(s0.fluid.r, s0.geometry())
    m1 = total_mass(s1.fluid.r, s1.geometry())
    out.append(InvariantResult("one_step_mass", abs(m1 - m0) / m0, 1e-12))
    top = s1.fluid.U.values[..., -1]
    kin = max(float(np.max(np.abs(top[0]))), float(np.max(np.abs(top[1] - s1.plate.v.values))))
    out.append(InvariantResult("kinematic_coupling", kin, 0.0))
    return out
