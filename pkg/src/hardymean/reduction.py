"""Change of variables y = W(x) turning weighted mean inequalities into non-weighted ones.

The work-horse is :class:`Cumulative`, a lazily built table of
``x -> int_0^x fn`` that serves ``W``, its inverse, ``int_0^x V^{1-p'}`` and
similar running integrals at thousands of points without re-integrating
from zero each time.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import funcdsl
from .errors import DivergenceError, HardyMeanError, NonFiniteIntegrandError, RangeError, ValidationError
from .funcdsl import Evaluable, Function
from .quadrature import QuadConfig, gauss_legendre, integrate_finite

__all__ = [
    "Cumulative",
    "ReductionContext",
    "ReductionReport",
    "make_context",
    "big_w",
    "invert_w",
    "transform_weights",
    "pullback",
    "verify_reduction",
]

MIN_DECADE, MAX_DECADE = -280, 299
CELLS_PER_DECADE = 64
GL_ORDER = 15
INVERT_TOL = 1e-10
NEWTON_MAX_ITER = 60
GROWTH_PROBE_DECADES = tuple(range(0, 9))
GROWTH_RATIO = 0.5


class Cumulative:
    """``C(x) = int_0^x fn`` with per-decade tables.

    Each decade ``[10^d, 10^{d+1}]`` gets an independent anchor
    ``C(10^d)`` from adaptive quadrature and 64 geometric cells (plus any
    breakpoints) integrated by Gauss-Legendre.  Cell sums are rescaled to
    meet the next anchor exactly, so the table is continuous and, for a
    positive integrand, strictly increasing.  Thread-safe.
    """

    def __init__(self, fn: Evaluable, breakpoints: Sequence[float] = (), cfg: QuadConfig | None = None, label: str = ""):
        self.fn = fn
        self.points = tuple(sorted({float(p) for p in breakpoints if p > 0 and math.isfinite(p)}))
        # finite-limit integrals may legitimately be huge; only the endpoint
        # model decides divergence here
        self.cfg = replace((cfg or QuadConfig()).tightened(100.0), divergence_threshold=1e300)
        self.label = label or str(fn)
        self.constant = funcdsl.constant_value(fn)
        self._anchors: dict[int, float] = {}
        self._tables: dict[int, tuple] = {}
        self._lock = threading.RLock()

    def __repr__(self):
        return f"Cumulative({self.label})"

    # -- tables ------------------------------------------------------------

    def anchor(self, d: int) -> float:
        with self._lock:
            if d not in self._anchors:
                self._anchors[d] = self._integrate(0.0, 10.0**d)
            return self._anchors[d]

    def _integrate(self, a, b):
        pts = [p for p in self.points if a < p < b]
        try:
            res = integrate_finite(self.fn, a, b, self.cfg, pts)
        except NonFiniteIntegrandError as exc:
            return math.copysign(math.inf, exc.sign)
        return float(res.value)

    def table(self, d: int):
        with self._lock:
            if d not in self._tables:
                self._tables[d] = self._build(d)
            return self._tables[d]

    def _build(self, d):
        lo, hi = 10.0**d, 10.0 ** (d + 1)
        edges = np.geomspace(lo, hi, CELLS_PER_DECADE + 1)
        inner = [p for p in self.points if lo < p < hi]
        if inner:
            edges = np.unique(np.concatenate([edges, inner]))
        edges[0], edges[-1] = lo, hi
        with np.errstate(all="ignore"):
            inc = gauss_legendre(self.fn, edges[:-1], edges[1:], GL_ORDER)
        a0, a1 = self.anchor(d), self.anchor(d + 1)
        cum = np.concatenate([[0.0], np.cumsum(inc)])
        with np.errstate(all="ignore"):
            if math.isfinite(a0) and math.isfinite(a1) and np.all(np.isfinite(cum)) and cum[-1] != 0:
                scale = (a1 - a0) / cum[-1]
                if abs(scale - 1.0) < 1e-6:
                    cum = cum * scale
            values = a0 + cum
        return edges, values

    # -- evaluation ----------------------------------------------------------

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        xs = np.atleast_1d(arr).astype(float)
        if self.constant is not None:
            out = self.constant * np.maximum(xs, 0.0)
        else:
            out = self._values(xs)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def _decade(self, xs):
        d = np.floor(np.log10(xs)).astype(int)
        d = np.where(10.0**d > xs, d - 1, d)
        d = np.where(10.0 ** (d + 1) <= xs, d + 1, d)
        return d

    def _values(self, xs):
        out = np.zeros(xs.shape)
        pos = xs > 0
        if not pos.any():
            return out
        small = pos & (xs < 10.0**MIN_DECADE)
        big = xs >= 10.0 ** (MAX_DECADE + 1)
        mid = pos & ~small & ~big
        if mid.any():
            idx = np.flatnonzero(mid)
            ds = self._decade(xs[idx])
            for d in np.unique(ds):
                sel = idx[ds == d]
                edges, values = self.table(int(d))
                k = np.clip(np.searchsorted(edges, xs[sel], side="right") - 1, 0, len(edges) - 2)
                with np.errstate(all="ignore"):
                    part = gauss_legendre(self.fn, edges[k], xs[sel], GL_ORDER)
                out[sel] = values[k] + part
        if small.any():
            c0, c1 = self.anchor(MIN_DECADE), self.anchor(MIN_DECADE + 1)
            if c0 != 0 and c1 / c0 > 0 and math.isfinite(c0) and math.isfinite(c1):
                beta = math.log10(c1 / c0)
                out[small] = c0 * (xs[small] / 10.0**MIN_DECADE) ** beta
            else:
                out[small] = [self._integrate(0.0, v) for v in xs[small]]
        if big.any():
            out[big] = [self._integrate(0.0, v) for v in xs[big]]
        return out

    # -- inversion -------------------------------------------------------------

    def _find_decades(self, ys):
        """Decade ``d`` with ``C(10^d) <= y < C(10^(d+1))`` per element; ``MIN_DECADE - 1`` below the tables."""
        lo = np.full(ys.shape, MIN_DECADE)
        hi = np.full(ys.shape, MAX_DECADE + 1)
        top = self.anchor(MAX_DECADE + 1)
        if not np.all(ys < top):
            bad = ys[~(ys < top)][0]
            raise RangeError(f"{self.label}: value {bad!r} not reached below 1e{MAX_DECADE + 1}")
        below = ys < self.anchor(MIN_DECADE)
        while np.any(hi - lo > 1):
            mid = (lo + hi) // 2
            anchors = {int(m): self.anchor(int(m)) for m in np.unique(mid)}
            at = np.array([anchors[int(m)] for m in mid])
            lo = np.where(at <= ys, mid, lo)
            hi = np.where(at <= ys, hi, mid)
        return np.where(below, MIN_DECADE - 1, lo)

    def invert(self, y):
        """Solve ``C(x) = y`` for increasing ``C``; ``|C(x) - y| <= 1e-10 y``."""
        arr = np.asarray(y, dtype=float)
        ys = np.atleast_1d(arr).astype(float)
        if np.any(ys < 0) or np.isnan(ys).any():
            raise RangeError(f"{self.label}: cannot invert negative or NaN values")
        if self.constant is not None:
            out = ys / self.constant
            return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)
        out = np.zeros(ys.shape)
        lo = np.zeros(ys.shape)
        hi = np.zeros(ys.shape)
        base = np.zeros(ys.shape)
        pending = ys > 0
        tiny = []
        idx = np.flatnonzero(pending)
        decades = self._find_decades(ys[idx]) if idx.size else np.array([], dtype=int)
        for d in np.unique(decades):
            sel = idx[decades == d]
            if d < MIN_DECADE:
                tiny.extend(sel.tolist())
                continue
            edges, values = self.table(int(d))
            k = np.clip(np.searchsorted(values, ys[sel], side="right") - 1, 0, len(edges) - 2)
            lo[sel], hi[sel], base[sel] = edges[k], edges[k + 1], values[k]
        for i in tiny:
            c0, c1 = self.anchor(MIN_DECADE), self.anchor(MIN_DECADE + 1)
            beta = math.log10(c1 / c0)
            out[i] = 10.0**MIN_DECADE * (ys[i] / c0) ** (1.0 / beta)
            pending[i] = False
        idx = np.flatnonzero(pending)
        if idx.size:
            out[idx] = self._newton(ys[idx], lo[idx], hi[idx], base[idx])
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def _newton(self, y, lo, hi, base):
        """Safeguarded Newton inside one cell each, bisecting when a step escapes."""
        tol = INVERT_TOL * 1e-2 * y
        x = 0.5 * (lo + hi)
        a = lo.copy()
        done = np.zeros(y.shape, dtype=bool)
        with np.errstate(all="ignore"):
            for _ in range(NEWTON_MAX_ITER):
                F = base + gauss_legendre(self.fn, a, x, GL_ORDER) - y
                done = np.abs(F) <= tol
                if done.all():
                    break
                lo = np.where(F < 0, x, lo)
                hi = np.where(F > 0, x, hi)
                slope = np.asarray(self.fn(x), dtype=float)
                step = x - F / slope
                ok = np.isfinite(step) & (step > lo) & (step < hi) & (slope > 0)
                new = np.where(ok, step, 0.5 * (lo + hi))
                x = np.where(done, x, new)
                if np.all(hi - lo <= 4 * np.finfo(float).eps * hi):
                    break
        return x


@dataclass(frozen=True)
class ReductionContext:
    """Weight ``w`` with its cumulative ``W``, exponents and weights ``u, v``.

    Construction checks that ``W`` is strictly increasing on the probe grid
    and that it keeps growing out to 1e8 (the numerical stand-in for
    ``W(+inf) = +inf``); ``assume_unbounded`` skips the growth test.
    """

    w: Evaluable
    p: float = 2.0
    q: float = 2.0
    u: Evaluable = field(default_factory=lambda: funcdsl.parse("1"))
    v: Evaluable = field(default_factory=lambda: funcdsl.parse("1"))
    cfg: QuadConfig = field(default_factory=QuadConfig)
    assume_unbounded: bool = False
    W: Cumulative = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise ValidationError(f"need p > 0 and q > 0, got p={self.p!r}, q={self.q!r}")
        grid = funcdsl.sample_grid(funcdsl.POSITIVE_AXIS, 32, window=(1e-3, 1e2))
        with np.errstate(all="ignore"):
            wv = np.asarray(self.w(grid), dtype=float)
        if not np.all(wv > 0):
            raise ValidationError(f"weight w = {self.w} must be strictly positive")
        W = Cumulative(self.w, getattr(self.w, "breakpoints", ()), self.cfg, label=f"W[{self.w}]")
        object.__setattr__(self, "W", W)
        vals = W(grid)
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"W = int_0^x {self.w} is not finite; w is not locally integrable at 0")
        if not self.assume_unbounded:
            probes = np.array([W.anchor(k) for k in GROWTH_PROBE_DECADES])
            with np.errstate(invalid="ignore"):
                inc = np.diff(probes)
            # overflow past the double range counts as growth
            overflowed = probes[-1] == math.inf
            ratio = inc[-1] / inc[-2] if inc[-2] > 0 else 0.0
            if not (overflowed or (np.isfinite(probes[-1]) and ratio >= GROWTH_RATIO)):
                raise ValidationError(
                    f"W(+inf) = +inf not confirmed for w = {self.w}: W(1e8) = {probes[-1]:.6g}, "
                    f"last decade growth ratio {ratio:.3g} (pass assume_unbounded=True to override)"
                )
        if not np.all(np.diff(vals) > 0):
            raise ValidationError(f"W = int_0^x {self.w} is not strictly increasing on the probe grid")

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1.0) if self.p > 1 else math.inf


def make_context(w="1", p=2.0, q=2.0, u="1", v="1", cfg=None, assume_unbounded=False) -> ReductionContext:
    return ReductionContext(
        funcdsl.as_function(w), float(p), float(q), funcdsl.as_function(u), funcdsl.as_function(v),
        cfg or QuadConfig(), assume_unbounded,
    )


def big_w(ctx: ReductionContext, x):
    """``W(x) = int_0^x w`` from the cached tables."""
    out = ctx.W(x)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"W({x}) diverges", None, "W")
    return out


def invert_w(ctx: ReductionContext, y):
    """``W^{-1}(y)``."""
    return ctx.W.invert(y)


def _mapped_points(ctx, *fns):
    pts = funcdsl.merge_breakpoints(*fns)
    return tuple(float(big_w(ctx, p)) for p in pts if p > 0 and math.isfinite(p))


def transform_weights(ctx: ReductionContext):
    """``U = u(W^{-1}) / w(W^{-1})`` and ``V = v(W^{-1}) / w(W^{-1})``."""
    def make(weight, name):
        def fn(y):
            x = ctx.W.invert(y)
            with np.errstate(all="ignore"):
                return np.asarray(weight(x), dtype=float) / np.asarray(ctx.w(x), dtype=float)
        return Function(fn, _mapped_points(ctx, weight, ctx.w), f"{name}[{weight} | w={ctx.w}]")

    return make(ctx.u, "U"), make(ctx.v, "V")


def pullback(ctx: ReductionContext, f) -> Function:
    """``h(y) = f(W^{-1}(y))``."""
    f = funcdsl.as_function(f)

    def fn(y):
        return f(ctx.W.invert(y))

    return Function(fn, _mapped_points(ctx, f), f"({f}) o W^-1")


@dataclass(frozen=True)
class ReductionReport:
    identity_points: tuple  # (x, weighted value, reduced value)
    max_identity_error: float
    ratio_weighted: object
    ratio_reduced: object
    ratio_difference: float
    ratio_tolerance: float

    @property
    def ratios_agree(self) -> bool:
        return self.ratio_difference <= self.ratio_tolerance


def _truncate(f, cutoff):
    def fn(x):
        with np.errstate(all="ignore"):
            return np.where(x < cutoff, np.asarray(f(x), dtype=float), 0.0)
    return Function(fn, tuple(sorted(set(funcdsl.merge_breakpoints(f)) | {float(cutoff)})), f"({f})[x<{cutoff:g}]")


def verify_reduction(ctx: ReductionContext, g, f, cutoff: float, grid: Sequence[float] | None = None) -> ReductionReport:
    """Check ``M^g_w f(x) = M^g h(W(x))`` pointwise and compare the two inequality ratios.

    ``f`` is cut off at ``cutoff`` (and ``h`` at ``W(cutoff)``) for the ratios.
    """
    from .estimator import inequality_ratio, make_operator_for
    from .conditions import ExponentPair

    f = funcdsl.as_function(f)
    if not cutoff > 0:
        raise ValidationError("cutoff must be positive")
    grid = np.geomspace(0.1, cutoff, 10) if grid is None else np.asarray(grid, dtype=float)
    h = pullback(ctx, f)
    op_w = make_operator_for(g, ctx.w, ctx.cfg)
    op_1 = make_operator_for(g, "1", ctx.cfg)
    from .operators import evaluate

    points, worst = [], 0.0
    for x in grid:
        try:
            lhs = evaluate(op_w, f, float(x))
            rhs = evaluate(op_1, h, float(big_w(ctx, x)))
        except HardyMeanError as exc:
            exc.args = (f"{exc} (reduction identity at x={x:g})",)
            raise
        points.append((float(x), lhs, rhs))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))

    e = ExponentPair(ctx.p, ctx.q)
    U, V = transform_weights(ctx)
    r1 = inequality_ratio(_truncate(f, cutoff), g, ctx.u, ctx.v, ctx.w, e, ctx.cfg)
    r2 = inequality_ratio(_truncate(h, float(big_w(ctx, cutoff))), g, U, V, "1", e, ctx.cfg)
    diff = abs(r1.ratio - r2.ratio)
    tol = 2.0 * (r1.ratio_err + r2.ratio_err)
    return ReductionReport(tuple(points), worst, r1, r2, diff, tol)
