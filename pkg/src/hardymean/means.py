"""Mean functions g, their inverses, shape classification and Levinson classes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import funcdsl
from .errors import DomainError, RangeError, ValidationError
from .funcdsl import FunctionExpr

__all__ = [
    "MeanFunction",
    "Classification",
    "PhiMembership",
    "make_mean_function",
    "invert_numeric",
    "classify",
    "phi_class_member",
]

PROBE_POINTS = 64
INVERSE_CHECK = 1e-6
BISECTION_RTOL = 1e-12
BISECTION_MAX_ITER = 200
SHAPE_DEADBAND = 1e-10
LOG_SPAN = 1e300


@dataclass(frozen=True)
class MeanFunction:
    """A strictly monotone continuous ``g`` on an open interval.

    ``g_inverse`` is ``None`` when inversion is numeric.
    """

    g: FunctionExpr
    g_inverse: FunctionExpr | None
    domain: tuple
    monotone_direction: str

    @property
    def increasing(self) -> bool:
        return self.monotone_direction == "increasing"

    @property
    def numeric_inverse(self) -> bool:
        return self.g_inverse is None

    def __call__(self, x):
        return self.g(x)

    @cached_property
    def image(self) -> tuple:
        """Closure of ``g(domain)`` as (min, max), with infinities where g is unbounded."""
        lo, hi = self._bracket()
        with np.errstate(all="ignore"):
            ends = np.asarray(self.g(np.array([lo, hi])), dtype=float)
        if np.isnan(ends).any():
            raise ValidationError(f"cannot evaluate g near the ends of {self.domain}")
        return (float(ends.min()), float(ends.max()))

    def _bracket(self):
        lo, hi = self.domain
        if lo >= 0:
            return max(lo, 0.0), min(hi, math.inf)
        return lo, hi

    def inverse(self, y):
        """g^{-1}(y); closed form when available, otherwise bisection."""
        if self.g_inverse is not None:
            return self.g_inverse(y)
        return invert_numeric(self, y)

    def limit_inverse(self, sign: float) -> float:
        """g^{-1} at the +inf (sign > 0) or -inf end of the image."""
        lo, hi = self.domain
        if self.increasing:
            return hi if sign > 0 else lo
        return lo if sign > 0 else hi

    @cached_property
    def classification(self) -> "Classification":
        return classify(self)

    def __str__(self):
        return str(self.g)


@dataclass(frozen=True)
class Classification:
    shape: str
    direction: str
    jensen_case: str
    affine: bool = False

    @staticmethod
    def jensen_for(shape: str, direction: str) -> str:
        if (shape, direction) in {("convex", "increasing"), ("concave", "decreasing")}:
            return "H_below_Mg"
        if (shape, direction) in {("convex", "decreasing"), ("concave", "increasing")}:
            return "Mg_below_H"
        return "none"


def _as_expr(obj, domain) -> FunctionExpr:
    if isinstance(obj, FunctionExpr):
        return FunctionExpr(obj.root, tuple(domain), obj.source)
    return funcdsl.parse(obj, domain)


def make_mean_function(g_source, inverse_source=None, domain: Sequence[float] = funcdsl.POSITIVE_AXIS) -> MeanFunction:
    """Build a validated :class:`MeanFunction`.

    Rejects ``g`` that is not strictly monotone on a 64-point probe grid, and
    a supplied inverse that misses ``g^{-1}(g(x)) = x`` by more than 1e-6 relative.
    """
    domain = tuple(float(d) for d in domain)
    if not domain[0] < domain[1]:
        raise ValidationError(f"empty domain {domain}")
    g = _as_expr(g_source, domain)
    grid = funcdsl.sample_grid(domain, PROBE_POINTS)
    with np.errstate(all="ignore"):
        vals = np.asarray(g(grid), dtype=float)
    ok = np.isfinite(vals)
    if ok.sum() < 2:
        raise ValidationError(f"g = {g} is not finite on the probe grid")
    diffs = np.diff(vals[ok])
    if np.all(diffs > 0):
        direction = "increasing"
    elif np.all(diffs < 0):
        direction = "decreasing"
    else:
        k = int(np.flatnonzero(~((diffs > 0) if diffs[0] > 0 else (diffs < 0)))[0])
        raise ValidationError(f"g = {g} is not strictly monotone near x={grid[ok][k + 1]:.6g}")

    inverse = None
    m = MeanFunction(g, None, domain, direction)
    if inverse_source is not None:
        lo, hi = m.image
        inverse = _as_expr(inverse_source, (lo, hi))
        with np.errstate(all="ignore"):
            back = np.asarray(inverse(vals[ok]), dtype=float)
        rel = np.abs(back - grid[ok]) / np.maximum(np.abs(grid[ok]), 1e-300)
        if not np.all(rel <= INVERSE_CHECK):
            k = int(np.argmax(np.where(np.isfinite(rel), rel, np.inf)))
            raise ValidationError(
                f"inverse {inverse} does not invert g = {g}: mismatch {rel[k]:.3g} at x={grid[ok][k]:.6g}"
            )
        m = MeanFunction(g, inverse, domain, direction)
    return m


def _search_space(domain):
    lo, hi = domain
    if lo >= 0:
        a = math.log(max(lo, 1.0 / LOG_SPAN)) if lo > 0 else math.log(1.0 / LOG_SPAN)
        b = math.log(min(hi, LOG_SPAN))
        return a, b, np.exp
    a = math.asinh(max(lo, -LOG_SPAN))
    b = math.asinh(min(hi, LOG_SPAN))
    return a, b, np.sinh


def invert_numeric(m: MeanFunction, y):
    """Solve ``g(x) = y`` by monotone bisection (log space on positive domains).

    Accepts scalars or arrays.  Raises ``RangeError`` when ``y`` is outside
    the image of ``g``.
    """
    arr = np.asarray(y, dtype=float)
    ys = np.atleast_1d(arr).astype(float)
    if np.isnan(ys).any():
        raise RangeError("cannot invert NaN")
    lo_img, hi_img = m.image
    outside = (ys < lo_img) | (ys > hi_img)
    if outside.any():
        bad = ys[outside][0]
        raise RangeError(f"y={bad!r} outside the image [{lo_img!r}, {hi_img!r}] of g = {m.g}")
    a, b, back = _search_space(m.domain)
    z_lo = np.full(ys.shape, a)
    z_hi = np.full(ys.shape, b)
    sign = 1.0 if m.increasing else -1.0
    with np.errstate(all="ignore"):
        for _ in range(BISECTION_MAX_ITER):
            mid = 0.5 * (z_lo + z_hi)
            gm = np.asarray(m.g(back(mid)), dtype=float)
            above = sign * (gm - ys) >= 0
            z_hi = np.where(above, mid, z_hi)
            z_lo = np.where(above, z_lo, mid)
            x_lo, x_hi = back(z_lo), back(z_hi)
            if np.all(np.abs(x_hi - x_lo) <= BISECTION_RTOL * np.maximum(np.abs(x_hi), 1e-300)):
                break
    out = back(0.5 * (z_lo + z_hi))
    # exact hits at the ends of the image map to the domain limits
    out = np.where(ys == lo_img, m.limit_inverse(-1.0), out)
    out = np.where(ys == hi_img, m.limit_inverse(1.0), out)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def classify(m: MeanFunction, grid_size: int = PROBE_POINTS) -> Classification:
    """Direction and convexity of ``g`` from sampled first and second differences.

    Second divided differences smaller than ``1e-10`` times the local slope
    scale count as zero.  If nothing is strictly curved, ``g`` is affine and
    reported as convex with ``affine=True`` (it is also concave).
    """
    if grid_size < 8:
        raise ValidationError("grid_size must be at least 8")
    grid = funcdsl.sample_grid(m.domain, grid_size)
    with np.errstate(all="ignore"):
        vals = np.asarray(m.g(grid), dtype=float)
    ok = np.isfinite(vals)
    x, y = grid[ok], vals[ok]
    if len(x) < 3:
        raise ValidationError(f"g = {m.g} has fewer than 3 finite probe values")
    slopes = np.diff(y) / np.diff(x)
    direction = "increasing" if np.all(slopes > 0) else "decreasing" if np.all(slopes < 0) else "neither"
    d2 = 2.0 * np.diff(slopes) / (x[2:] - x[:-2])
    scale = (np.abs(slopes[1:]) + np.abs(slopes[:-1])) / (x[2:] - x[:-2]) + np.abs(y[1:-1]) * 1e-6
    band = SHAPE_DEADBAND * scale
    pos = bool(np.any(d2 > band))
    neg = bool(np.any(d2 < -band))
    affine = not pos and not neg
    if pos and neg:
        shape = "neither"
    elif neg:
        shape = "concave"
    else:
        shape = "convex"
    return Classification(shape, direction, Classification.jensen_for(shape, direction), affine)


@dataclass(frozen=True)
class PhiMembership:
    """Outcome of a Levinson-class test on the probed window."""

    member: bool
    r: float
    witness: float | None
    window: tuple
    checked: int
    skipped: int
    residuals: tuple = field(default=(), repr=False)

    def __bool__(self):
        return self.member


# second differences of ln(phi) lose too many digits at the default step
CURVATURE_STEP = 1e-3
EPS = float(np.finfo(float).eps)


def phi_class_member(
    phi,
    r: float,
    domain: Sequence[float] = funcdsl.POSITIVE_AXIS,
    grid_size: int = PROBE_POINTS,
    tol: float = 1e-6,
    step: float = funcdsl.DEFAULT_STEP,
) -> PhiMembership:
    """Test ``phi phi'' >= (1 - 1/r) phi'^2`` on a log grid over the domain window.

    Dividing by ``phi^2`` gives the equivalent ``psi'' + psi'^2 / r >= 0`` for
    ``psi = ln phi``, which is what is differentiated: it cannot overflow
    where ``phi`` is merely large, and the boundary case ``phi = exp`` is
    exact instead of carrying stencil bias.  The dead-band is ``tol`` times
    ``|psi''| + psi'^2``.  ``r = inf`` tests log-convexity.  Points where
    ``phi`` itself overflows are skipped and the probed window is reported.
    """
    if not (r > 1):
        raise ValidationError(f"r must exceed 1, got {r!r}")
    domain = tuple(float(d) for d in domain)
    phi = _as_expr(phi, domain) if not isinstance(phi, FunctionExpr) else phi
    inv_r = 0.0 if math.isinf(r) else 1.0 / r
    psi = funcdsl.ln_of(phi)
    grid = funcdsl.sample_grid(domain, grid_size)
    used, skipped, residuals = [], 0, []
    witness = None
    for x in grid:
        try:
            f0 = funcdsl.eval(phi, x)
        except RangeError:
            skipped += 1
            continue
        if not f0 > 0:
            raise DomainError(f"phi must be positive, got phi({x:.6g}) = {f0!r}")
        try:
            d1 = funcdsl.derivative(psi, x, 1, step, domain)
            d2 = funcdsl.derivative(psi, x, 2, CURVATURE_STEP * min(x, 1.0), domain)
        except RangeError:
            skipped += 1
            continue
        res = d2 + inv_r * d1 * d1
        h = CURVATURE_STEP * x
        # ln loses absolute, not relative, digits when phi is near 1
        roundoff = 8.0 * EPS * (abs(math.log(f0)) + 1.0) / (h * h)
        slack = tol * (abs(d2) + d1 * d1) + roundoff
        used.append(x)
        residuals.append(res)
        if res < -slack and witness is None:
            witness = float(x)
    if not used:
        raise RangeError(f"phi = {phi} overflowed at every probe point")
    window = (float(min(used)), float(max(used)))
    return PhiMembership(witness is None, float(r), witness, window, len(used), skipped, tuple(residuals))
