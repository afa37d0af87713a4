"""Fractional difference quotients and the norms built from them.

``D_h^s q(y) = (q(y + h e) - q(y)) / h^s`` along a lattice direction ``e``.
Shifts must be whole multiples of the grid spacing.  Periodic plates shift
with wraparound; clamped plates restrict to the nodes at distance more than
``h`` from the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import TopologyError, ValidationError
from .geometry_ale import Grid, PlateField
from .plate import laplacian


@dataclass(frozen=True)
class FractionalParams:
    """Order ``s`` in (0, 1], exponent ``q_int`` in (1, inf), shift ``h`` and direction axis.

    ``s = 1`` gives the plain difference quotient.
    """

    s: float
    q_int: float = 2.0
    h: float = 0.0
    direction: int = 0

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ValidationError(f"s must lie in (0, 1], got {self.s}")
        if not 1 < self.q_int < np.inf:
            raise ValidationError(f"q_int must lie in (1, inf), got {self.q_int}")
        if not self.h > 0:
            raise ValidationError(f"h must be > 0, got {self.h}")


def _steps(grid: Grid, h: float, axis: int) -> int:
    if not 0 <= axis < len(grid.plate_shape):
        raise ValidationError(f"direction {axis} does not exist on this plate")
    hx = grid.plate_spacing[axis]
    m = int(round(h / hx))
    if m < 1 or abs(m * hx - h) > 1e-9 * hx:
        raise ValidationError(f"shift h={h} is not a positive multiple of the spacing {hx}")
    if not grid.periodic and m >= grid.plate_shape[axis] - 1:
        raise ValidationError(f"shift h={h} leaves no interior nodes")
    return m


def interior_mask(grid: Grid, h: float, axis: int) -> np.ndarray:
    """Nodes of ``{dist(x, boundary) > h}``; everything on a periodic plate."""
    mask = np.ones(grid.plate_shape, dtype=bool)
    if grid.periodic:
        return mask
    for ax, (x, L) in enumerate(zip(grid.plate_axes(), grid.plate_lengths)):
        inside = (x > h * (1 + 1e-12)) & (x < L - h * (1 + 1e-12))
        shape = [1] * len(grid.plate_shape)
        shape[ax] = -1
        mask &= inside.reshape(shape)
    return mask


def _shift(a: np.ndarray, m: int, axis: int, periodic: bool) -> np.ndarray:
    """``a`` at ``y + m`` nodes along ``axis``; wraps when periodic, zero-padded otherwise."""
    if periodic:
        return np.roll(a, -m, axis=axis)
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if m >= 0:
        src[axis] = slice(m, None)
        dst[axis] = slice(0, a.shape[axis] - m)
    else:
        src[axis] = slice(0, a.shape[axis] + m)
        dst[axis] = slice(-m, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _quotient(a: np.ndarray, grid: Grid, s: float, h: float, axis: int, backward: bool = False):
    m = _steps(grid, h, axis)
    if backward:
        return (a - _shift(a, -m, axis, grid.periodic)) / h ** s
    return (_shift(a, m, axis, grid.periodic) - a) / h ** s


def diff_quotient(g: PlateField, p: FractionalParams) -> PlateField:
    """Forward quotient ``D_h^s g``; zero outside the interior set on clamped plates."""
    grid = g.grid
    out = _quotient(g.values, grid, p.s, p.h, p.direction)
    if not grid.periodic:
        out = np.where(interior_mask(grid, p.h, p.direction), out, 0.0)
    return PlateField(out, grid)


def backward_quotient(g: PlateField, p: FractionalParams) -> PlateField:
    """``D_{-h}^s g = (g(y) - g(y - h e)) / h^s``, the adjoint partner of ``D_h^s``."""
    grid = g.grid
    if not grid.periodic:
        raise TopologyError("the backward quotient is provided on periodic plates")
    return PlateField(_quotient(g.values, grid, p.s, p.h, p.direction, backward=True), grid)


def lq_norm(f: np.ndarray, grid: Grid, q: float, mask: np.ndarray | None = None) -> float:
    wts = grid.plate_weights()
    if mask is not None:
        wts = np.where(mask, wts, 0.0)
    return float(np.sum(wts * np.abs(f) ** q)) ** (1.0 / q)


def lq_norm_below(f: np.ndarray, grid: Grid, b: float, eps: float = 0.05) -> float:
    """Norm in ``L^{b-}``, evaluated at ``p = b (1 - eps)`` (``p = 1/eps`` for infinite b)."""
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    p = 1.0 / eps if np.isinf(b) else b * (1.0 - eps)
    if p < 1:
        raise ValidationError(f"b(1 - eps) = {p} is below 1")
    return lq_norm(f, grid, p)


def nikolskii_norm(g: PlateField, s: float, q_int: float, h_set: Sequence[float]) -> float:
    """``sup_{direction, h} ||D_h^s g||_{L^q(Gamma_h)} + ||g||_{L^q}`` over the given shifts."""
    h_set = list(h_set)
    if not h_set:
        raise ValidationError("h_set must not be empty")
    grid = g.grid
    best = 0.0
    for axis in range(len(grid.plate_shape)):
        for h in h_set:
            p = FractionalParams(s, q_int, h, axis)
            dq = diff_quotient(g, p).values
            best = max(best, lq_norm(dq, grid, q_int, interior_mask(grid, h, axis)))
    return best + lq_norm(g.values, grid, q_int)


def gagliardo_norm(g: PlateField, s: float, q_int: float, chunk: int = 2048) -> float:
    """Double-sum ``(sum |g_i - g_j|^q / |x_i - x_j|^(n + s q) w_i w_j)^(1/q) + ||g||_q``.

    The diagonal is left out; periodic plates use the distance on the torus.
    """
    grid = g.grid
    if not 0 < s < 1 or not q_int > 1:
        raise ValidationError("need 0 < s < 1 and q_int > 1")
    n = len(grid.plate_shape)
    pts = np.stack([m.ravel() for m in grid.plate_mesh()], axis=1)
    vals = g.values.ravel()
    wts = grid.plate_weights().ravel()
    L = np.array(grid.plate_lengths)
    total = 0.0
    for start in range(0, vals.size, chunk):
        sl = slice(start, start + chunk)
        diff = pts[sl, None, :] - pts[None, :, :]
        if grid.periodic:
            diff = diff - L * np.round(diff / L)
        dist = np.sqrt(np.sum(diff ** 2, axis=-1))
        num = np.abs(vals[sl, None] - vals[None, :]) ** q_int
        with np.errstate(divide="ignore", invalid="ignore"):
            ker = np.where(dist > 0, num / dist ** (n + s * q_int), 0.0)
        total += float(np.sum(wts[sl, None] * wts[None, :] * ker))
    return total ** (1.0 / q_int) + lq_norm(vals.reshape(grid.plate_shape), grid, q_int)


def summation_by_parts_residual(f: PlateField, g: PlateField, s: float, h: float,
                                direction: int = 0) -> float:
    """``| -int f D_{-h}^s D_h^s g - int D_h^s f D_h^s g |`` on a periodic plate."""
    grid = f.grid
    if not grid.periodic or not g.grid.periodic:
        raise TopologyError("summation by parts is an identity on periodic plates only")
    if g.grid != grid:
        raise ValidationError("f and g live on different grids")
    p = FractionalParams(s, 2.0, h, direction)
    wts = grid.plate_weights()
    Dg = diff_quotient(g, p)
    lhs = -np.sum(wts * f.values * backward_quotient(Dg, p).values)
    rhs = np.sum(wts * diff_quotient(f, p).values * Dg.values)
    return float(abs(lhs - rhs))


# --------------------------------------------------------------------------
# regularity thresholds

_GAMMA_FLOOR = {(2, False): Fraction(1), (2, True): Fraction(1),
                (3, False): Fraction(12, 7), (3, True): Fraction(3, 2)}


def threshold_s(gamma, d: int, alpha_positive: bool):
    """Supremum of the fractional orders for which ``Lap w`` is in ``L^2(H^s)``.

    Integer or Fraction ``gamma`` gives an exact Fraction; floats give a float.
    """
    key = (int(d), bool(alpha_positive))
    if key not in _GAMMA_FLOOR:
        raise ValidationError(f"fluid dimension must be 2 or 3, got {d}")
    exact = isinstance(gamma, Rational)
    g = Fraction(gamma) if exact else float(gamma)
    floor = _GAMMA_FLOOR[key]
    if not g > (floor if exact else float(floor)):
        raise ValidationError(f"gamma={gamma} is not admissible for d={d}, "
                              f"alpha{'>' if alpha_positive else '='}0: need gamma > {floor}")
    one = Fraction(1) if exact else 1.0
    if d == 2 and not alpha_positive:
        a, cap = one / 2 - one / (2 * g), one / 4
    elif d == 2:
        a, cap = 3 * one / 4 - one / (2 * g), one / 2
    elif not alpha_positive:
        a, cap = 7 * one / 12 - one / g, one / 4
    else:
        a, cap = 2 * one / 3 - one / g, one / 2
    return min(a, cap)


# --------------------------------------------------------------------------
# empirical scan

class RegularityReport(NamedTuple):
    s_grid: list
    h_values: list
    norms: np.ndarray  # (len(s_grid), len(h_values)) of int_0^T ||D_h^s Lap w||^2
    ratios: np.ndarray  # per s: max over h of norm(h) / norm(largest h)
    ratio_bound: float
    threshold: float | None  # largest s whose ratio stays below the bound

    def passed(self, s: float) -> bool:
        k = list(self.s_grid).index(s)
        return bool(self.ratios[k] <= self.ratio_bound)


def _plates(w_trajectory) -> list:
    out = []
    for item in w_trajectory:
        out.append(item.plate.w if hasattr(item, "plate") else item)
    return out


def regularity_scan(w_trajectory, times, s_grid: Sequence[float],
                    h_decades: Sequence[int] | None = None, ratio_bound: float = 10.0,
                    direction: int = 0) -> RegularityReport:
    """Growth of ``int_0^T ||D_h^s Lap w||^2_{L^2}`` as ``h`` shrinks.

    ``h_decades`` are shift multiples of the spacing (default 1, 2, 4, 8, 16).
    The growth ratio compares every shift with the largest one; a bounded
    ratio is the finite-resolution sign of an h-uniform bound.
    """
    plates = _plates(w_trajectory)
    if not plates:
        raise ValidationError("empty trajectory")
    grid = plates[0].grid
    if not grid.periodic:
        raise TopologyError("the regularity scan runs on periodic plates")
    t = np.asarray(times, dtype=float)
    if t.size != len(plates):
        raise ValidationError("times and trajectory have different lengths")
    mult = list(h_decades) if h_decades is not None else [1, 2, 4, 8, 16]
    hx = grid.plate_spacing[direction]
    hs = [m * hx for m in mult]
    laps = [laplacian(w).values for w in plates]
    wts = grid.plate_weights()
    norms = np.zeros((len(s_grid), len(hs)))
    for i, s in enumerate(s_grid):
        for j, h in enumerate(hs):
            series = [float(np.sum(wts * _quotient(L, grid, s, h, direction) ** 2)) for L in laps]
            norms[i, j] = trapezoid(series, t) if t.size > 1 else series[0]
    jref = int(np.argmax(hs))
    ratios = np.zeros(len(s_grid))
    for i in range(len(s_grid)):
        ref = norms[i, jref]
        top = np.max(norms[i])
        ratios[i] = 0.0 if top == 0 else (np.inf if ref == 0 else top / ref)
    ok = [s for s, r in zip(s_grid, ratios) if r <= ratio_bound]
    return RegularityReport(list(s_grid), hs, norms, ratios, float(ratio_bound),
                            max(ok) if ok else None)


def quartic_quotient_integral(w_trajectory, times, s: float, h: float, direction: int = 0) -> float:
    """``int_0^T int |D_h^(s/2) Lap w|^4`` for the quasilinear plate."""
    plates = _plates(w_trajectory)
    grid = plates[0].grid
    if not grid.periodic:
        raise TopologyError("the quartic quantity is evaluated on periodic plates")
    t = np.asarray(times, dtype=float)
    wts = grid.plate_weights()
    series = [float(np.sum(wts * _quotient(laplacian(w).values, grid, s / 2, h, direction) ** 4))
              for w in plates]
    return float(trapezoid(series, t)) if t.size > 1 else series[0]
