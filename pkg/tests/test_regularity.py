from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsiplate.errors import TopologyError, ValidationError
from fsiplate.geometry_ale import Grid, PlateField, plate_field
from fsiplate.regularity import (FractionalParams, backward_quotient,
                                 diff_quotient, gagliardo_norm, lq_norm,
                                 lq_norm_below, nikolskii_norm,
                                 quartic_quotient_integral, regularity_scan,
                                 summation_by_parts_residual, threshold_s)

P = Grid(64, 4)
LINE = Grid(4, 4, lx=2.0, plate_topology="clamped")  # nodes 0, 0.5, ..., 2


def test_quotient_examples():
    assert np.all(diff_quotient(PlateField(np.full(64, 3.0), P), FractionalParams(0.4, h=P.hx)).values == 0)
    y = LINE.plate_axes()[0]
    lin = diff_quotient(PlateField(y.copy(), LINE), FractionalParams(1.0, h=0.5)).values
    # only y = 1 lies farther than h from both ends
    assert lin[2] == pytest.approx(1.0) and lin[1] == 0 and lin[3] == 0
    sq = diff_quotient(PlateField(y ** 2, LINE), FractionalParams(0.5, h=0.5)).values
    assert sq[2] == pytest.approx((2.25 - 1) / 0.5 ** 0.5)
    assert sq[2] == pytest.approx(1.76777, abs=1e-5)


def test_quotient_validation():
    with pytest.raises(ValidationError):
        diff_quotient(PlateField(np.zeros(64), P), FractionalParams(0.5, h=1.5 * P.hx))
    for kw in (dict(s=0.0, h=1.0), dict(s=1.2, h=1.0), dict(s=0.5, h=0.0), dict(s=0.5, q_int=1.0, h=1.0)):
        with pytest.raises(ValidationError):
            FractionalParams(**kw)
    with pytest.raises(TopologyError):
        backward_quotient(PlateField(np.zeros(5), LINE), FractionalParams(0.5, h=0.5))


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(0.05, 0.95), st.integers(1, 20))
def test_quotient_linear_in_field(lam, s, m):
    rng = np.random.default_rng(m)
    g = PlateField(rng.normal(size=64), P)
    p = FractionalParams(s, h=m * P.hx)
    assert np.allclose(diff_quotient(PlateField(lam * g.values, P), p).values, lam * diff_quotient(g, p).values)


def test_nikolskii_examples():
    assert nikolskii_norm(PlateField(np.zeros(64), P), 0.5, 2, [P.hx]) == 0
    c = 1.7
    assert nikolskii_norm(PlateField(np.full(64, c), P), 0.5, 2, [P.hx, 2 * P.hx]) == pytest.approx(
        c * (2 * np.pi) ** 0.5)
    with pytest.raises(ValidationError):
        nikolskii_norm(PlateField(np.zeros(64), P), 0.5, 2, [])


def test_nikolskii_sin_stable_under_refinement():
    # the sup over h of ||D_h^s sin|| is attained at the largest shift, so it is resolution independent
    vals = []
    for n in (64, 640):
        g = Grid(n, 4)
        sn = plate_field(np.sin, g)
        vals.append(nikolskii_norm(sn, 0.5, 2, [k * 2 * np.pi / 64 for k in (1, 2, 4, 8)]))
    assert vals[0] == pytest.approx(vals[1], rel=0.05)


def test_gagliardo_examples():
    assert gagliardo_norm(PlateField(np.zeros(64), P), 0.5, 2) == 0
    assert gagliardo_norm(PlateField(np.full(64, 2.0), P), 0.5, 2) == pytest.approx(2 * (2 * np.pi) ** 0.5)
    sn = plate_field(np.sin, P)
    assert np.isfinite(gagliardo_norm(sn, 0.6, 2))
    with pytest.raises(ValidationError):
        gagliardo_norm(sn, 1.0, 2)


def test_gagliardo_bounded_by_nikolskii():
    rng = np.random.default_rng(4)
    hs = [m * P.hx for m in (1, 2, 4, 8, 16)]
    ratios = []
    for _ in range(100):
        c = rng.normal(size=6) / np.arange(1, 7) ** 2
        x = P.plate_axes()[0]
        f = PlateField(sum(ck * np.sin((k + 1) * x + k) for k, ck in enumerate(c)), P)
        ratios.append(gagliardo_norm(f, 0.3, 2) / nikolskii_norm(f, 0.6, 2, hs))
    calibrate, verify = np.array(ratios[:50]), np.array(ratios[50:])
    assert np.max(verify) <= 2 * np.max(calibrate)


def test_lq_below():
    f = np.full(64, 2.0)
    assert lq_norm_below(f, P, 4.0, eps=0.5) == pytest.approx(lq_norm(f, P, 2.0))
    assert lq_norm_below(f, P, np.inf, eps=0.05) == pytest.approx(lq_norm(f, P, 20.0))
    with pytest.raises(ValidationError):
        lq_norm_below(f, P, 1.0, eps=0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.99), st.integers(1, 31))
def test_summation_by_parts_property(seed, s, m):
    rng = np.random.default_rng(seed)
    f, g = PlateField(rng.normal(size=64), P), PlateField(rng.normal(size=64), P)
    scale = np.sqrt(np.sum(f.values ** 2) * np.sum(g.values ** 2)) * P.hx * (m * P.hx) ** (-2 * s)
    assert summation_by_parts_residual(f, g, s, m * P.hx) <= 1e-13 * scale
    assert summation_by_parts_residual(PlateField(np.zeros(64), P), g, s, m * P.hx) == 0


def test_summation_by_parts_periodic_only():
    with pytest.raises(TopologyError):
        summation_by_parts_residual(PlateField(np.zeros(5), LINE), PlateField(np.zeros(5), LINE), 0.5, 0.5)


@pytest.mark.parametrize("gamma, d, alpha, expected", [
    (2, 2, False, Fraction(1, 4)), (2, 2, True, Fraction(1, 2)), (2, 3, True, Fraction(1, 6)),
    (Fraction(3, 2), 2, False, Fraction(1, 6)), (3, 3, False, Fraction(1, 4)),
])
def test_threshold_examples(gamma, d, alpha, expected):
    got = threshold_s(gamma, d, alpha)
    assert isinstance(got, Fraction) and got == expected


def test_threshold_rejects_inadmissible():
    with pytest.raises(ValidationError):
        threshold_s(Fraction(3, 2), 3, False)
    with pytest.raises(ValidationError):
        threshold_s(2, 4, False)
    assert isinstance(threshold_s(2.5, 2, True), float)


@pytest.mark.parametrize("d, alpha", [(2, False), (2, True), (3, False), (3, True)])
def test_threshold_monotone(d, alpha):
    gs = [Fraction(2) + Fraction(k, 7) for k in range(40)]
    vals = [threshold_s(g, d, alpha) for g in gs]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_scan_zero_and_smooth():
    zero = [PlateField(np.zeros(64), P)] * 3
    rep = regularity_scan(zero, [0, 0.5, 1], [0.25, 0.75])
    assert np.all(rep.norms == 0) and rep.passed(0.75)
    t = np.linspace(0, 1, 11)
    smooth = [plate_field(lambda x, a=np.cos(tk): a * np.sin(x), P) for tk in t]
    rep = regularity_scan(smooth, t, [0.2, 0.5, 0.9])
    assert all(rep.passed(s) for s in (0.2, 0.5, 0.9))
    with pytest.raises(ValidationError):
        regularity_scan(smooth, t[:-1], [0.5])


def test_scan_flags_rough_field():
    # a jump in Lap w makes ||D_h^s Lap w||^2 grow like h^(1 - 2s)
    g = Grid(512, 4)
    x = g.plate_axes()[0]
    w = PlateField(np.where(x < np.pi, x ** 2 * (np.pi - x) ** 2, 0.0), g)
    rep = regularity_scan([w, w], [0, 1], [0.1, 0.5, 0.9, 0.99], ratio_bound=4)
    # four octaves of shift give growth 16^(2s - 1) once asymptotic; pre-asymptotic values are smaller
    assert rep.passed(0.1) and rep.passed(0.5) and not rep.passed(0.99)
    assert rep.ratios[2] < rep.ratios[3]


def test_quartic_integral():
    t = np.linspace(0, 1, 5)
    zero = [PlateField(np.zeros(64), P)] * 5
    assert quartic_quotient_integral(zero, t, 0.5, P.hx) == 0
    sn = [plate_field(np.sin, P)] * 5
    assert quartic_quotient_integral(sn, t, 0.5, P.hx) > 0
