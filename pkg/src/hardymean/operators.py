"""Pointwise evaluation of weighted Hardy, geometric and quasi-arithmetic mean operators.

All three share one shape::

    M f(x) = g^{-1}( (1/W(x)) int_0^x w(t) g(f(t)) dt ),   W(x) = int_0^x w

with ``g`` the identity (Hardy average), ``ln`` (geometric mean) or a
user-supplied :class:`~hardymean.means.MeanFunction`.  The lower limit is
exactly zero; endpoint singularities are left to the quadrature engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import funcdsl
from .errors import DivergenceError, NonFiniteIntegrandError, RangeError, ValidationError
from .funcdsl import Evaluable
from .means import MeanFunction, make_mean_function
from .quadrature import QuadConfig, QuadResult, Status, integrate_finite

__all__ = [
    "OperatorInstance",
    "OperatorValue",
    "JensenPoint",
    "JensenReport",
    "make_operator",
    "hardy_avg",
    "geometric_mean_op",
    "quasi_mean",
    "evaluate",
    "jensen_order_check",
]

KINDS = ("hardy", "geometric", "quasi_arithmetic")
ONE = funcdsl.parse("1")
JENSEN_RTOL = 1e-10


@dataclass(frozen=True)
class OperatorInstance:
    kind: str = "hardy"
    g: MeanFunction | None = None
    w: Evaluable = ONE
    cfg: QuadConfig = field(default_factory=QuadConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"operator kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "quasi_arithmetic" and self.g is None:
            raise ValidationError("a quasi_arithmetic operator needs a mean function g")
        grid = funcdsl.sample_grid(funcdsl.POSITIVE_AXIS, 32, window=(1e-3, 1e2))
        with np.errstate(all="ignore"):
            wv = np.asarray(self.w(grid), dtype=float)
        if not np.all(wv > 0):
            k = int(np.flatnonzero(~(wv > 0))[0])
            raise ValidationError(f"weight w = {self.w} must be positive; w({grid[k]:.4g}) = {wv[k]!r}")

    @property
    def weight_constant(self) -> float | None:
        return funcdsl.constant_value(self.w)

    def with_cfg(self, cfg: QuadConfig) -> "OperatorInstance":
        return OperatorInstance(self.kind, self.g, self.w, cfg)


def make_operator(kind: str = "hardy", g=None, ginv=None, w="1", cfg: QuadConfig | None = None) -> OperatorInstance:
    """Convenience constructor accepting DSL source strings."""
    if isinstance(g, str):
        g = make_mean_function(g, ginv)
    return OperatorInstance(kind, g, funcdsl.as_function(w), cfg or QuadConfig())


@dataclass(frozen=True)
class OperatorValue:
    """Operator value with its propagated error.

    ``flag`` is ``None`` normally; ``"log_minus_infinity"`` when the geometric
    mean collapsed to zero; ``"degenerate"`` when ``g(f)`` was infinite on a
    set of positive measure and the value is a limit of ``g^{-1}``.
    """

    value: float
    err: float
    average: float
    flag: str | None = None


def _points(*fns, x=None):
    pts = funcdsl.merge_breakpoints(*fns)
    return [p for p in pts if x is None or 0 < p < x]


def _scaled_weight(op: OperatorInstance, x: float):
    """``w / w(x)``: the ratio is unchanged and small-x integrals stay representable."""
    with np.errstate(all="ignore"):
        scale = float(np.asarray(op.w(np.array([x])), dtype=float)[0])
    if not (scale > 0 and math.isfinite(scale)):
        return op.w
    w = op.w
    return funcdsl.Function(lambda t: np.asarray(w(t), dtype=float) / scale, funcdsl.merge_breakpoints(w), str(w))


def _big_w(op: OperatorInstance, w, x: float) -> QuadResult:
    c = op.weight_constant
    if c is not None:
        return QuadResult(c * x, 0.0, Status.CONVERGED)
    # W may legitimately be huge; non-integrability shows up in the endpoint model
    cfg = replace(op.cfg, divergence_threshold=max(op.cfg.divergence_threshold, 1e300))
    res = integrate_finite(w, 0.0, x, cfg, _points(w, x=x))
    if res.diverged:
        raise DivergenceError(f"W({x:g}) = int_0^x w diverges; w is not locally integrable", res, "W")
    return res


def _weighted_integral(op, w, gf, x, points, scale):
    c = op.weight_constant
    cfg = op.cfg
    if scale > 1.0:
        cfg = replace(cfg, divergence_threshold=min(cfg.divergence_threshold * scale, 1e300))
    if c is not None:
        fn = gf if c == 1.0 else (lambda t: c * gf(t))
    else:
        def fn(t):
            with np.errstate(all="ignore"):
                return w(t) * gf(t)
    return integrate_finite(fn, 0.0, x, cfg, points)


def _check_x(x):
    x = float(x)
    if not (x > 0 and math.isfinite(x)):
        raise ValidationError(f"operator argument must be positive and finite, got {x!r}")
    return x


def _compose(g, f):
    def gf(t):
        with np.errstate(all="ignore"):
            return np.asarray(g(f(t)), dtype=float)
    return gf


def _propagate(ginv, avg, err, image):
    """Error of ``g^{-1}(avg)`` from the error of ``avg`` by a symmetric difference."""
    if err == 0:
        return 0.0
    if not math.isfinite(err):
        return math.inf
    lo, hi = max(avg - err, image[0]), min(avg + err, image[1])
    try:
        a, b = float(ginv(lo)), float(ginv(hi))
    except (RangeError, ValueError):
        return math.inf
    return abs(b - a) * err / (hi - lo) if hi > lo else 0.0


def _mean(op, gfun, ginv, image, f, x, log_mode):
    x = _check_x(x)
    f = funcdsl.as_function(f)
    w = op.w if op.weight_constant is not None else _scaled_weight(op, x)
    big_w = _big_w(op, w, x)
    points = _points(f, op.w, x=x)
    gf = _compose(gfun, f)
    flag = None
    try:
        res = _weighted_integral(op, w, gf, x, points, big_w.value)
    except NonFiniteIntegrandError as exc:
        if log_mode and exc.sign < 0:
            return OperatorValue(0.0, 0.0, -math.inf, "log_minus_infinity")
        if log_mode:
            raise DivergenceError(f"int ln f diverges to +inf on (0, {x:g})", None, "inner") from exc
        # g(f) infinite on a set of positive measure: the average sits at the end of the image
        limit = op.g.limit_inverse(exc.sign)
        if not math.isfinite(limit):
            raise DivergenceError(f"quasi-arithmetic mean is infinite at x={x:g}", None, "inner") from exc
        return OperatorValue(float(limit), 0.0, math.copysign(math.inf, exc.sign), "degenerate")
    if res.diverged:
        if log_mode and res.value < 0:
            return OperatorValue(0.0, 0.0, -math.inf, "log_minus_infinity")
        raise DivergenceError(f"int_0^{x:g} w g(f) diverges ({res.value:+g})", res, "inner")
    if not big_w.value > 0:
        raise RangeError(f"W({x:g}) underflows to zero; the weight is not representable this close to 0")
    avg = res.value / big_w.value
    avg_err = (res.err_estimate + abs(avg) * big_w.err_estimate) / big_w.value
    if not (image[0] <= avg <= image[1]):
        raise RangeError(f"weighted average {avg!r} outside the image {image} of g")
    value = float(ginv(avg))
    if not math.isfinite(value):
        raise RangeError(f"g^-1({avg!r}) is not finite")
    return OperatorValue(value, _propagate(ginv, avg, avg_err, image), avg, flag)


def _identity(y):
    return y


def hardy_avg(op: OperatorInstance, f, x: float, full_output: bool = False):
    """Weighted Hardy average ``(1/W(x)) int_0^x w f``."""
    out = _mean(op, _identity, _identity, (-math.inf, math.inf), f, x, log_mode=False)
    return out if full_output else out.value


def geometric_mean_op(op: OperatorInstance, f, x: float, full_output: bool = False):
    """Weighted geometric mean ``exp((1/W(x)) int_0^x w ln f)``.

    Returns 0 (flag ``log_minus_infinity``) when the log-integral diverges
    to minus infinity, e.g. when ``f`` vanishes on part of ``(0, x)``.
    """
    out = _mean(op, np.log, np.exp, (-math.inf, math.inf), f, x, log_mode=True)
    return out if full_output else out.value


def quasi_mean(op: OperatorInstance, f, x: float, full_output: bool = False):
    """Quasi-arithmetic mean ``g^{-1}`` of the ``w``-average of ``g(f)`` on ``(0, x)``."""
    if op.g is None:
        if op.kind == "geometric":
            return geometric_mean_op(op, f, x, full_output)
        return hardy_avg(op, f, x, full_output)
    m = op.g
    out = _mean(op, m.g, m.inverse, m.image, f, x, log_mode=False)
    return out if full_output else out.value


def evaluate(op: OperatorInstance, f, x: float, full_output: bool = False):
    """Dispatch on ``op.kind``."""
    if op.kind == "hardy":
        return hardy_avg(op, f, x, full_output)
    if op.kind == "geometric":
        return geometric_mean_op(op, f, x, full_output)
    return quasi_mean(op, f, x, full_output)


@dataclass(frozen=True)
class JensenPoint:
    x: float
    hardy: float
    mean: float
    slack: float
    ok: bool


@dataclass(frozen=True)
class JensenReport:
    case: str
    points: tuple

    @property
    def violations(self) -> list:
        return [pt for pt in self.points if not pt.ok]

    @property
    def holds(self) -> bool:
        return not self.violations


def jensen_order_check(op: OperatorInstance, f, grid: Iterable[float]) -> JensenReport:
    """Verify the ordering between ``H_w f`` and ``M^g_w f`` predicted by the shape of ``g``.

    Convex increasing or concave decreasing ``g`` predicts ``H_w f <= M^g_w f``;
    convex decreasing or concave increasing predicts the reverse.  Each
    comparison allows the sum of both error estimates.
    """
    if op.g is None:
        raise ValidationError("jensen_order_check needs an operator with a mean function g")
    case = op.g.classification.jensen_case
    if case == "none":
        raise ValidationError(f"g = {op.g} is neither convex nor concave on the probe grid; no ordering is predicted")
    hardy_op = OperatorInstance("hardy", None, op.w, op.cfg)
    pts = []
    for x in grid:
        h = hardy_avg(hardy_op, f, x, full_output=True)
        m = quasi_mean(op, f, x, full_output=True)
        slack = h.err + m.err + JENSEN_RTOL * max(abs(h.value), abs(m.value), 1e-300)
        gap = m.value - h.value if case == "H_below_Mg" else h.value - m.value
        pts.append(JensenPoint(float(x), h.value, m.value, slack, gap >= -slack))
    return JensenReport(case, tuple(pts))
