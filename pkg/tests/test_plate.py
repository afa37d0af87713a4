import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsiplate.errors import DimensionError, MissingTemperatureError, ValidationError
from fsiplate.geometry_ale import Grid, PlateField, plate_field
from fsiplate.plate import (BergerCoeffs, KirchhoffCoeffs, PlateModel,
                            PlateState, VonKarmanCoeffs, airy_residual,
                            airy_stress, berger_c_star, bilaplacian,
                            check_A3, heat_rhs, integrate, laplacian,
                            lipschitz_probe_A1_A2, nonlinear_force, potential,
                            quasilinear_force, vk_bracket)

P = Grid(64, 4)
C2 = Grid(16, 4, lx=1.0, plate_topology="clamped", ny=16, ly=1.0)


def sinx(grid=P):
    return plate_field(lambda x: np.sin(x), grid)


def test_bilaplacian_zero_and_eigenfunction():
    assert np.all(bilaplacian(PlateField(np.zeros(64), P)).values == 0)
    errs = []
    for n in (32, 64, 128):
        g = Grid(n, 4)
        errs.append(np.max(np.abs(bilaplacian(sinx(g)).values - np.sin(g.plate_axes()[0]))))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_clamped_polynomial_exactness():
    g = Grid(16, 4, lx=1.0, plate_topology="clamped")
    x = g.plate_axes()[0]
    w = PlateField(x ** 2 * (1 - x) ** 2, g)
    lap = laplacian(w).values
    # exact Laplacian of x^2 (1 - x)^2 is 2 - 12 x + 12 x^2; second differences are exact up to
    # quartic error h^2/12 * w'''' = h^2 * 2 on interior nodes
    h = g.hx
    assert np.allclose(lap[1:-1], (2 - 12 * x + 12 * x ** 2)[1:-1] + 2 * h ** 2, atol=1e-10)


@pytest.mark.parametrize("grid", [P, C2])
def test_bilaplacian_symmetric(grid):
    rng = np.random.default_rng(0)
    a = PlateField(rng.normal(size=grid.plate_shape), grid)
    b = PlateField(rng.normal(size=grid.plate_shape), grid)
    if not grid.periodic:
        a = PlateField(_clamp(a.values), grid)
        b = PlateField(_clamp(b.values), grid)
    lhs = integrate(bilaplacian(a).values * b.values, grid)
    rhs = integrate(a.values * bilaplacian(b).values, grid)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def _clamp(v):
    v = v.copy()
    v[:2, :] = v[-2:, :] = v[:, :2] = v[:, -2:] = 0
    return v


def test_berger_examples():
    model = PlateModel("berger", coefficients=BergerCoeffs(nu_b=1.0, G=0.0))
    assert np.all(nonlinear_force(model, PlateField(np.zeros(64), P)).values == 0)
    h = plate_field(lambda x: np.cos(x), P)
    withh = PlateModel("berger", coefficients=BergerCoeffs(h=h))
    assert np.allclose(nonlinear_force(withh, PlateField(np.zeros(64), P)).values, -h.values)
    f = nonlinear_force(model, sinx()).values
    errs = []
    for n in (64, 128):
        g = Grid(n, 4)
        errs.append(np.max(np.abs(nonlinear_force(model, sinx(g)).values - np.pi * np.sin(g.plate_axes()[0]))))
    assert errs[0] < 1e-2 and errs[1] < errs[0] / 3.5
    assert potential(model, sinx()) == pytest.approx(np.pi ** 2 / 4, rel=2e-3)


def test_kirchhoff_examples():
    cube = PlateModel("kirchhoff", coefficients=KirchhoffCoeffs(nu_k=0.0))
    assert np.allclose(nonlinear_force(cube, PlateField(np.full(64, 2.0), P)).values, 8.0)
    lin = PlateModel("kirchhoff", coefficients=KirchhoffCoeffs(nu_k=0.0, f=lambda s: s))
    assert potential(lin, PlateField(np.ones(64), P)) == pytest.approx(np.pi)


def test_kirchhoff_rejects_bad_exponents():
    with pytest.raises(ValidationError):
        KirchhoffCoeffs(q_exp=1.0, r_exp=2.0)


@pytest.mark.parametrize("model", [
    PlateModel("berger", coefficients=BergerCoeffs(nu_b=2.0, G=0.3)),
    PlateModel("kirchhoff", coefficients=KirchhoffCoeffs(nu_k=1.0, mu_k=0.4)),
    PlateModel("kirchhoff", coefficients=KirchhoffCoeffs(nu_k=0.5, f=np.sinh)),
    PlateModel("thermo_quasilinear"),
])
def test_force_is_potential_gradient(model):
    rng = np.random.default_rng(3)
    x = P.plate_axes()[0]
    w = PlateField(0.3 * np.sin(x) + 0.1 * np.cos(3 * x), P)
    c = rng.normal(size=3) * 0.1
    d = PlateField(c[0] * np.cos(x) + c[1] * np.sin(2 * x) + c[2], P)
    e = 1e-5
    fd = (potential(model, PlateField(w.values + e * d.values, P))
          - potential(model, PlateField(w.values - e * d.values, P))) / (2 * e)
    assert fd == pytest.approx(integrate(nonlinear_force(model, w).values * d.values, P), rel=1e-6)


def test_vk_bracket_examples():
    X, Y = C2.plate_mesh()
    inner = (slice(2, -2), slice(2, -2))
    xy = PlateField(X * Y, C2)
    assert np.allclose(vk_bracket(xy, xy).values[inner], -2.0)
    assert np.allclose(vk_bracket(PlateField(X ** 2, C2), PlateField(Y ** 2, C2)).values[inner], 4.0)
    rng = np.random.default_rng(0)
    a, b = PlateField(rng.normal(size=X.shape), C2), PlateField(rng.normal(size=X.shape), C2)
    assert np.allclose(vk_bracket(a, b).values, vk_bracket(b, a).values)
    with pytest.raises(DimensionError):
        vk_bracket(sinx(), sinx())


def test_airy_examples():
    X, Y = C2.plate_mesh()
    assert np.all(airy_stress(PlateField(np.zeros(X.shape), C2)).values == 0)
    lin = PlateField(0 * X, C2)
    assert np.allclose(airy_stress(lin).values, 0.0)
    w = PlateField(16 * (X * (1 - X) * Y * (1 - Y)) ** 2, C2)
    assert airy_residual(w, airy_stress(w)) <= 1e-10
    vk = PlateModel("von_karman", coefficients=VonKarmanCoeffs())
    assert np.isfinite(nonlinear_force(vk, w).values).all()


def test_quasilinear_force_examples():
    assert np.all(quasilinear_force(PlateField(np.zeros(64), P)).values == 0)
    # constant Laplacian away from the clamped edges gives no force there
    para = Grid(32, 4, lx=1.0, plate_topology="clamped")
    xc = para.plate_axes()[0]
    q = quasilinear_force(PlateField((xc - 0.5) ** 2, para)).values
    assert np.allclose(q[4:-4], 0.0, atol=1e-9)
    errs = []
    for n in (64, 128):
        g = Grid(n, 4)
        xx = g.plate_axes()[0]
        exact = 0.75 * np.sin(xx) - 2.25 * np.sin(3 * xx)
        errs.append(np.max(np.abs(quasilinear_force(sinx(g)).values - exact)))
    assert errs[1] < errs[0] / 3.5 and errs[1] < 1e-2


def test_heat_rhs():
    theta = sinx()
    zero = PlateField(np.zeros(64), P)
    assert np.allclose(heat_rhs(PlateState(zero, zero, PlateField(np.ones(64), P)), zero).values, 0)
    x = P.plate_axes()[0]
    assert np.allclose(heat_rhs(PlateState(zero, zero, theta), zero).values, -np.sin(x), atol=1e-2)
    assert np.allclose(heat_rhs(PlateState(zero, zero, zero), theta).values, -np.sin(x), atol=1e-2)
    with pytest.raises(MissingTemperatureError):
        heat_rhs(PlateState(zero, zero), zero)


def test_check_A3():
    rng = np.random.default_rng(1)
    samples = [PlateField(rng.normal(size=64), P) for _ in range(20)]
    berger = PlateModel("berger", coefficients=BergerCoeffs(G=0.0))
    assert check_A3(berger, 0.25, 0.0, samples).passed
    assert check_A3(PlateModel(), 0.25, 0.0, samples).passed
    pre = PlateModel("berger", coefficients=BergerCoeffs(nu_b=1.0, G=2.0))
    cs = berger_c_star(pre)
    assert cs == pytest.approx(1.0)
    scaled = [PlateField(a * np.sin(P.plate_axes()[0]), P) for a in np.linspace(0, 2, 41)]
    assert check_A3(pre, 0.01, cs, scaled).passed
    assert not check_A3(pre, 0.01, 0.0, scaled).passed


def test_lipschitz_probe():
    rng = np.random.default_rng(2)
    pairs = [(PlateField(0.05 * rng.normal(size=64), P), PlateField(0.05 * rng.normal(size=64), P))
             for _ in range(10)]
    lin = lipschitz_probe_A1_A2(PlateModel(), 1e3, pairs)
    assert lin["max_ratio"] == 0.0
    same = lipschitz_probe_A1_A2(PlateModel("berger", coefficients=BergerCoeffs()), 1e3,
                                 [(pairs[0][0], pairs[0][0])] + pairs)
    assert same["skipped"] == 1 and np.isfinite(same["max_ratio"])


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_quasilinear_gap_monotone(a, b):
    x = P.plate_axes()[0]
    w1 = PlateField(a * np.sin(x), P)
    w2 = PlateField(b * np.sin(2 * x), P)
    l1, l2 = laplacian(w1).values, laplacian(w2).values
    assert integrate((l1 ** 3 - l2 ** 3) * (l1 - l2), P) >= 0


def test_model_validation():
    with pytest.raises(ValidationError):
        PlateModel("membrane")
    with pytest.raises(ValidationError):
        PlateModel("linear", alpha=-1.0)
