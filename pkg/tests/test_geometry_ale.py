import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsiplate.errors import CollisionError, GridMismatchError, ValidationError
from fsiplate.geometry_ale import (Grid, PlateField, ScalarField, VectorField,
                                   ale_map, build_geometry, extension_operator,
                                   fluid_gradient_values, graph_normal,
                                   material_derivative_identity_residual,
                                   plate_field, scalar_field, surface_jacobian,
                                   transformed_divergence, transformed_gradient)

G = Grid(16, 8)


def const_plate(c, grid=G):
    return PlateField(np.full(grid.plate_shape, float(c)), grid)


def test_grid_shapes():
    assert G.plate_shape == (16,)
    assert G.fluid_shape == (16, 9)
    clamped = Grid(8, 4, lx=1.0, plate_topology="clamped", ny=8, ly=1.0)
    assert clamped.plate_shape == (9, 9)
    assert clamped.fluid_shape == (9, 9, 5)
    assert clamped.d == 3
    assert G.z_nodes()[0] == -1.0 and G.z_nodes()[-1] == 0.0


def test_weights_integrate_constants():
    assert np.sum(G.fluid_weights()) == pytest.approx(2 * np.pi)
    assert np.sum(G.plate_weights()) == pytest.approx(2 * np.pi)


@pytest.mark.parametrize("w, point, expected", [
    (0.0, (0.3, -0.5), (0.3, -0.5)),
    (0.5, (0.3, 0.0), (0.3, 0.5)),
    (0.5, (0.3, -1.0), (0.3, -1.0)),
])
def test_ale_map_examples(w, point, expected):
    x, y = ale_map(const_plate(w), point[0], point[1])
    assert (float(x), float(y)) == pytest.approx(expected)


def test_ale_map_collision():
    with pytest.raises(CollisionError):
        ale_map(const_plate(-1.0), 0.3, -0.5)


def test_flat_geometry_is_identity():
    geo = build_geometry(const_plate(0.0))
    assert np.all(geo.jacobian.values == 1.0)
    assert np.all(geo.inv_grad == np.eye(2))
    assert np.all(geo.ale_velocity.values == 0.0)


def test_constant_lift_geometry():
    geo = build_geometry(const_plate(0.5))
    assert np.allclose(geo.jacobian.values, 1.5)
    assert np.allclose(geo.inv_grad, np.diag([1.0, 1 / 1.5]))


def test_ale_velocity_top():
    w = plate_field(lambda x: 0.1 * np.sin(x), G)
    geo = build_geometry(w, const_plate(1.0))
    assert np.allclose(geo.ale_velocity.values[1][:, -1], 1.0)
    assert np.allclose(geo.ale_velocity.values[1][:, 0], 0.0)


def test_transformed_gradient_examples():
    f = scalar_field(lambda X, Z: Z, G)
    g = transformed_gradient(f, build_geometry(const_plate(0.25))).values
    assert np.allclose(g[0], 0.0) and np.allclose(g[1], 1 / 1.25)
    w = plate_field(lambda x: 0.2 * np.sin(x), G)
    g = transformed_gradient(scalar_field(lambda X, Z: X + 0 * Z, G), build_geometry(w)).values
    interior = slice(1, -1)
    assert np.allclose(g[0][interior], 1.0) and np.allclose(g[1], 0.0)


def test_transformed_divergence_examples():
    geo0 = build_geometry(const_plate(0.0))
    F = VectorField(np.stack([np.full(G.fluid_shape, 2.0), np.full(G.fluid_shape, -1.0)]), G)
    assert np.allclose(transformed_divergence(F, geo0).values, 0.0)
    gx = Grid(16, 8, plate_topology="clamped", lx=1.0)
    X, Z = gx.fluid_mesh()
    geo = build_geometry(PlateField(np.zeros(gx.plate_shape), gx))
    assert np.allclose(transformed_divergence(VectorField(np.stack([X, Z]), gx), geo).values, 2.0)


def test_extension_operator_examples():
    geo0 = build_geometry(const_plate(0.0))
    E = extension_operator(const_plate(1.0), geo0).values
    k = list(G.z_nodes()).index(-0.5)
    assert np.allclose(E[:, :, k], [[0.0], [0.5]])
    geo1 = build_geometry(const_plate(1.0))
    E = extension_operator(const_plate(1.0), geo1).values
    assert np.allclose(E[:, :, -1], [[0.0], [1.0]])
    div = transformed_divergence(extension_operator(const_plate(2.0), geo1), geo1).values
    assert np.allclose(div, 1.0)


def test_surface_jacobian_and_normal():
    assert np.all(surface_jacobian(const_plate(0.0)).values == 1.0)
    g = Grid(16, 4, lx=1.0, plate_topology="clamped")
    slope = PlateField(g.plate_axes()[0].copy(), g)
    assert np.allclose(surface_jacobian(slope).values[1:-1], np.sqrt(2))
    assert np.allclose(graph_normal(slope)[:, 1:-1].T, [-1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert np.allclose(graph_normal(const_plate(0.0)).T, [0.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=3, max_size=3))
def test_normal_identity_property(coeffs):
    a, b, c = coeffs
    w = plate_field(lambda x: a * np.sin(x) + b * np.cos(2 * x) + c * np.sin(3 * x), G)
    assert np.max(np.abs(surface_jacobian(w).values * graph_normal(w)[-1] - 1)) <= 4e-16


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_extension_divergence_property(a, b):
    w = plate_field(lambda x: a * np.sin(x) + b * np.cos(x), G)
    f = plate_field(lambda x: 1 + np.sin(2 * x), G)
    geo = build_geometry(w)
    div = transformed_divergence(extension_operator(f, geo), geo).values
    assert np.allclose(div, (f.values / (1 + w.values))[:, None], rtol=0, atol=1e-12)


def test_flat_operators_match_plain_ones():
    rng = np.random.default_rng(0)
    f = ScalarField(rng.normal(size=G.fluid_shape), G)
    geo = build_geometry(const_plate(0.0))
    assert np.array_equal(transformed_gradient(f, geo).values, fluid_gradient_values(f.values, G))


def test_grid_mismatch():
    other = Grid(32, 8)
    with pytest.raises(GridMismatchError):
        transformed_gradient(ScalarField(np.zeros(other.fluid_shape), other), build_geometry(const_plate(0.0)))


def test_collision_in_geometry():
    with pytest.raises(CollisionError):
        build_geometry(const_plate(-1.2))


def test_material_derivative_static():
    geo = build_geometry(const_plate(0.0))
    X, Z = G.fluid_mesh()
    qs = [ScalarField(t + 0 * X, G) for t in (0.0, 0.1, 0.2)]
    res = material_derivative_identity_residual(qs, [geo] * 3, 0.1, [ScalarField(np.ones_like(X), G)] * 3)
    assert np.max(np.abs(res[0].values)) < 1e-12
    with pytest.raises(ValidationError):
        material_derivative_identity_residual(qs[:2], [geo] * 2, 0.1, qs[:2])


def test_material_derivative_moving_plate():
    # q(t, x, y) = t y on the physical domain, plate w(t) = 0.1 t
    dt = 1e-3
    X, Z = G.fluid_mesh()
    ts = [0.5 - dt, 0.5, 0.5 + dt]
    geos = [build_geometry(const_plate(0.1 * t), const_plate(0.1)) for t in ts]
    qs = [ScalarField(t * ((Z + 1) * 0.1 * t + Z), G) for t in ts]
    eul = [ScalarField((Z + 1) * 0.1 * t + Z, G) for t in ts]
    res = material_derivative_identity_residual(qs, geos, dt, eul)
    assert np.max(np.abs(res[0].values)) < 1e-8
