"""Weight-condition functionals and constant bounds.

Every supremum over an unbounded parameter is estimated the same way: a
200-point log scan over ``[1e-6, 1e6]``, then golden-section refinement
around the best scan point.  A best point sitting on the scan boundary that
keeps growing over two further decades is reported as diverged.  Running
integrals come from :class:`~hardymean.reduction.Cumulative`; tail integrals
``int_t^inf k`` are running integrals of ``k(1/s)/s^2`` evaluated at ``1/t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import funcdsl
from .errors import NonFiniteIntegrandError, ValidationError
from .funcdsl import Function
from .quadrature import QuadConfig, integrate_upper_infinite
from .reduction import Cumulative

__all__ = [
    "ExponentPair",
    "ConditionReport",
    "TailIntegral",
    "dual_weight_thm1",
    "dual_weight_thm1b",
    "dual_weight_function",
    "dual_weight_function_b",
    "muckenhoupt_constant",
    "geometric_condition",
    "wedestig_as",
    "constant_bound_wedestig",
    "classical_constants",
    "golden_section",
    "sup_scan",
]

SCAN_RANGE = (1e-6, 1e6)
SCAN_POINTS = 200
EXTENSION_DECADES = 2
EXTENSION_STEPS = 4
GROWTH_RTOL = 1e-6
CONVERGENT_RATIO = 0.9
S_POINTS = 64
S_MARGIN = 1e-3
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TILDE_V_INFINITE = "tilde-V infinite"


@dataclass(frozen=True)
class ExponentPair:
    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {val!r}")

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1.0) if self.p > 1 else math.inf

    def require(self, regime: str) -> "ExponentPair":
        """Enforce ``1 < p <= q`` ("strict") or ``0 < p <= q`` ("positive")."""
        if regime == "strict" and not (1 < self.p <= self.q):
            raise ValidationError(f"this condition needs 1 < p <= q < inf, got p={self.p}, q={self.q}")
        if regime == "positive" and not (0 < self.p <= self.q):
            raise ValidationError(f"this condition needs 0 < p <= q < inf, got p={self.p}, q={self.q}")
        return self


@dataclass(frozen=True)
class ConditionReport:
    value: float
    extremizer: float | None
    scan_trace: tuple = field(default=(), repr=False)
    refined: bool = False
    cause: str | None = None
    name: str = ""
    note: str | None = None

    @property
    def diverged(self) -> bool:
        return not math.isfinite(self.value)

    @property
    def status(self) -> str:
        return "diverged" if self.diverged else "finite"

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "value": None if self.diverged else self.value,
            "extremizer": self.extremizer,
            "refined": self.refined,
            "cause": self.cause,
            "note": self.note,
        }


def _diverged(name, cause, at=None, trace=()):
    return ConditionReport(math.inf, at, tuple(trace), False, cause, name)


# --------------------------------------------------------------------------
# optimisation helpers
# --------------------------------------------------------------------------


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10, maximize: bool = True, max_iter: int = 200):
    """Golden-section search for an extremum of a unimodal ``f`` on ``[a, b]``.

    Returns ``(x_best, f_best)``.
    """
    sign = -1.0 if maximize else 1.0
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = sign * f(c), sign * f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = sign * f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = sign * f(d)
    x, fx = (c, fc) if fc < fd else (d, fd)
    return x, sign * fx


def sup_scan(fn: Callable[[np.ndarray], np.ndarray], name: str, lo: float = SCAN_RANGE[0], hi: float = SCAN_RANGE[1], n: int = SCAN_POINTS) -> ConditionReport:
    """Supremum of a positive functional of one parameter on ``(0, inf)``."""
    ts = np.geomspace(lo, hi, n)
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(ts), dtype=float)
    trace = list(zip(ts.tolist(), vals.tolist()))
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        return _diverged(name, "functional infinite at a scanned parameter", float(ts[k]), trace)
    k = int(np.argmax(vals))
    if k in (0, n - 1):
        direction = -1.0 if k == 0 else 1.0
        steps = np.arange(1, EXTENSION_STEPS + 1) * EXTENSION_DECADES / EXTENSION_STEPS
        ext = ts[k] * 10.0 ** (direction * steps)
        with np.errstate(all="ignore"):
            ext_vals = np.asarray(fn(ext), dtype=float)
        trace += list(zip(ext.tolist(), ext_vals.tolist()))
        chain = np.concatenate([[vals[k]], ext_vals])
        if not np.all(np.isfinite(ext_vals)):
            return _diverged(name, f"functional infinite toward parameter {'0' if k == 0 else 'inf'}", float(ext[-1]), trace)
        inc = np.diff(chain)
        side = "0" if k == 0 else "inf"
        if np.all(inc / np.abs(chain[:-1]) > GROWTH_RTOL):
            shrink = inc[1:] / inc[:-1]
            if not np.all(shrink < CONVERGENT_RATIO):
                return _diverged(name, f"unbounded as parameter -> {side}", float(ext[-1]), trace)
            # increments shrink geometrically: the supremum is the limit at the boundary
            r = float(shrink.max())
            limit = float(chain[-1] + inc[-1] * r / (1.0 - r))
            note = f"supremum approached as parameter -> {side}; geometric extrapolation ratio {r:.3g}"
            return ConditionReport(limit, float(ext[-1]), tuple(trace), False, None, name, note)
    best_t, best_v = float(ts[k]), float(vals[k])
    a = math.log(ts[max(k - 1, 0)])
    b = math.log(ts[min(k + 1, n - 1)])

    def scalar(z):
        with np.errstate(all="ignore"):
            v = float(np.asarray(fn(np.array([math.exp(z)])), dtype=float)[0])
        return v if math.isfinite(v) else -math.inf

    z, v = golden_section(scalar, a, b, tol=1e-10)
    refined = v > best_v
    if refined:
        best_t, best_v = math.exp(z), v
    # a boundary extension point may beat the refined interior value
    t_max, v_max = max(((t, val) for t, val in trace if math.isfinite(val)), key=lambda tv: tv[1])
    if v_max > best_v:
        best_t, best_v = float(t_max), float(v_max)
    return ConditionReport(best_v, best_t, tuple(trace), True, None, name)


# --------------------------------------------------------------------------
# running and tail integrals
# --------------------------------------------------------------------------


class TailIntegral:
    """``t -> int_t^inf fn``, vectorised, via a running integral in ``s = 1/x``."""

    def __init__(self, fn, breakpoints=(), cfg: QuadConfig | None = None, label: str = ""):
        def reflected(s):
            x = 1.0 / s
            with np.errstate(all="ignore"):
                fx = np.asarray(fn(x), dtype=float)
                return np.where(fx == 0, 0.0, fx * x * x)

        pts = tuple(1.0 / b for b in breakpoints if b > 0 and math.isfinite(b))
        self.cum = Cumulative(Function(reflected, pts, label), pts, cfg, label=label)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.cum(1.0 / t)


def _expr(obj):
    return funcdsl.as_function(obj)


def _power(fn, exponent):
    def out(x):
        with np.errstate(all="ignore"):
            return np.asarray(fn(x), dtype=float) ** exponent
    return Function(out, funcdsl.merge_breakpoints(fn), f"({fn})^{exponent:g}")


def tilde_v(V, e: ExponentPair, cfg: QuadConfig | None = None) -> Cumulative:
    """``t -> int_0^t V^{1-p'}``."""
    V = _expr(V)
    return Cumulative(_power(V, 1.0 - e.p_prime), funcdsl.merge_breakpoints(V), cfg, label=f"int V^(1-p') [V={V}]")


# --------------------------------------------------------------------------
# dual weights
# --------------------------------------------------------------------------


def _tail_point(fn, t, cfg, points):
    try:
        res = integrate_upper_infinite(fn, t, cfg, points)
    except NonFiniteIntegrandError:
        return math.inf
    return res.value if res.finite else math.inf


def dual_weight_thm1(u, w, t: float, cfg: QuadConfig | None = None) -> float:
    """``v(t) = w(t) int_t^inf u / W``; ``inf`` when the tail diverges."""
    cfg = cfg or QuadConfig()
    u, w = _expr(u), _expr(w)
    W = Cumulative(w, funcdsl.merge_breakpoints(w), cfg)

    def integrand(x):
        with np.errstate(all="ignore"):
            return np.asarray(u(x), dtype=float) / W(x)

    tail = _tail_point(integrand, float(t), cfg, funcdsl.merge_breakpoints(u, w))
    return float(w(float(t))) * tail


def dual_weight_thm1b(U, lam: float, x: float, cfg: QuadConfig | None = None) -> float:
    """``V(x) = x^lam int_x^inf U(t) t^{-lam-1} dt``, paired with the constant ``e^lam``."""
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam!r}")
    cfg = cfg or QuadConfig()
    U = _expr(U)

    def integrand(t):
        with np.errstate(all="ignore"):
            return np.asarray(U(t), dtype=float) * t ** (-lam - 1.0)

    tail = _tail_point(integrand, float(x), cfg, funcdsl.merge_breakpoints(U))
    return float(x) ** lam * tail


def dual_weight_function(u, w, cfg: QuadConfig | None = None) -> Function:
    """Vectorised ``v`` from :func:`dual_weight_thm1`."""
    u, w = _expr(u), _expr(w)
    W = Cumulative(w, funcdsl.merge_breakpoints(w), cfg)

    def integrand(x):
        with np.errstate(all="ignore"):
            return np.asarray(u(x), dtype=float) / W(x)

    tail = TailIntegral(integrand, funcdsl.merge_breakpoints(u, w), cfg, label=f"int_t^inf {u}/W")

    def v(t):
        with np.errstate(all="ignore"):
            return np.asarray(w(t), dtype=float) * tail(t)

    return Function(v, funcdsl.merge_breakpoints(u, w), f"dual[u={u}, w={w}]")


def dual_weight_function_b(U, lam: float, cfg: QuadConfig | None = None) -> Function:
    """Vectorised ``V`` from :func:`dual_weight_thm1b`."""
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam!r}")
    U = _expr(U)

    def integrand(t):
        with np.errstate(all="ignore"):
            return np.asarray(U(t), dtype=float) * t ** (-lam - 1.0)

    tail = TailIntegral(integrand, funcdsl.merge_breakpoints(U), cfg, label=f"int_x^inf {U} t^-{lam + 1:g}")

    def V(x):
        with np.errstate(all="ignore"):
            return x**lam * tail(x)

    return Function(V, funcdsl.merge_breakpoints(U), f"dual_b[U={U}, lambda={lam:g}]")


# --------------------------------------------------------------------------
# conditions
# --------------------------------------------------------------------------


def muckenhoupt_constant(U, V, e: ExponentPair, cfg: QuadConfig | None = None) -> ConditionReport:
    """``sup_tau (int_tau^inf U x^{-q})^{1/q} (int_0^tau V^{1-p'})^{1/p'}``."""
    e.require("strict")
    U = _expr(U)
    tail = TailIntegral(lambda x: np.asarray(U(x), dtype=float) * x ** (-e.q), funcdsl.merge_breakpoints(U), cfg, "U x^-q")
    head = tilde_v(V, e, cfg)
    name = "muckenhoupt"

    def functional(ts):
        a, b = tail(ts), head(ts)
        return a ** (1.0 / e.q) * b ** (1.0 / e.p_prime)

    ts = np.geomspace(*SCAN_RANGE, SCAN_POINTS)
    heads = head(ts)
    if not np.all(np.isfinite(heads)):
        k = int(np.flatnonzero(~np.isfinite(heads))[0])
        return _diverged(name, "int_0^tau V^(1-p') infinite", float(ts[k]))
    tails = tail(ts)
    if not np.all(np.isfinite(tails)):
        k = int(np.flatnonzero(~np.isfinite(tails))[0])
        return _diverged(name, "int_tau^inf U/x^q infinite", float(ts[k]))
    return sup_scan(functional, name)


def geometric_condition(U, V, e: ExponentPair, cfg: QuadConfig | None = None) -> ConditionReport:
    """``sup_x x^{-1/p} (int_0^x U(t) [G(1/V)](t)^{q/p} dt)^{1/q}``."""
    e.require("positive")
    U, V = _expr(U), _expr(V)
    logv = Cumulative(
        Function(lambda t: np.log(np.asarray(V(t), dtype=float)), funcdsl.merge_breakpoints(V), f"ln {V}"),
        funcdsl.merge_breakpoints(V), cfg, label=f"int ln {V}",
    )

    def g_inv_v(t):
        with np.errstate(all="ignore"):
            return np.exp(-np.asarray(logv(t), dtype=float) / t)

    def inner(t):
        with np.errstate(all="ignore"):
            return np.asarray(U(t), dtype=float) * g_inv_v(t) ** (e.q / e.p)

    outer = Cumulative(Function(inner, funcdsl.merge_breakpoints(U, V), "U G(1/V)^(q/p)"), funcdsl.merge_breakpoints(U, V), cfg)

    def functional(xs):
        return xs ** (-1.0 / e.p) * outer(xs) ** (1.0 / e.q)

    return sup_scan(functional, "geometric")


class _Wedestig:
    """Shared state for evaluating ``A(s)`` at many ``s``."""

    def __init__(self, U, V, e: ExponentPair, variant: str, cfg):
        if variant not in ("paper", "alternate"):
            raise ValidationError(f"variant must be 'paper' or 'alternate', got {variant!r}")
        self.U, self.e, self.variant, self.cfg = _expr(U), e, variant, cfg
        self.tv = tilde_v(V, e, cfg)
        ts = np.geomspace(*SCAN_RANGE, SCAN_POINTS)
        vals = self.tv(ts)
        self.tv_infinite = not np.all(np.isfinite(vals))
        self.tv_witness = float(ts[np.flatnonzero(~np.isfinite(vals))[0]]) if self.tv_infinite else None

    def report(self, s: float) -> ConditionReport:
        e = self.e
        name = f"wedestig_A(s={s:g},{self.variant})"
        if not 1 < s < e.p:
            raise ValidationError(f"s must lie in (1, p) = (1, {e.p:g}), got {s!r}")
        if self.tv_infinite:
            return _diverged(name, TILDE_V_INFINITE, self.tv_witness)
        inner_exp = e.q * (e.p - s) / e.p
        outer_exp = e.q * (s - 1) / e.p if self.variant == "paper" else (s - 1) / e.p
        U, tv = self.U, self.tv

        def integrand(x):
            with np.errstate(all="ignore"):
                return np.asarray(U(x), dtype=float) * np.asarray(tv(x), dtype=float) ** inner_exp * x ** (-e.q)

        tail = TailIntegral(integrand, funcdsl.merge_breakpoints(U), self.cfg, "U tildeV^a x^-q")

        def functional(ts):
            return np.asarray(tv(ts), dtype=float) ** outer_exp * np.asarray(tail(ts), dtype=float) ** (1.0 / e.q)

        return sup_scan(functional, name)


def wedestig_as(U, V, e: ExponentPair, s: float, variant: str = "paper", cfg: QuadConfig | None = None) -> ConditionReport:
    """``A(s) = sup_t tildeV(t)^a (int_t^inf U tildeV^{q(p-s)/p} x^{-q} dx)^{1/q}``.

    ``a = q(s-1)/p`` for ``variant="paper"`` and ``(s-1)/p`` for
    ``variant="alternate"``.  Diverged with cause ``"tilde-V infinite"`` as
    soon as ``int_0^t V^{1-p'}`` is infinite at a scanned ``t``.
    """
    e.require("strict")
    return _Wedestig(U, V, e, variant, cfg).report(float(s))


def constant_bound_wedestig(U, V, e: ExponentPair, variant: str = "paper", cfg: QuadConfig | None = None,
                            n_s: int = S_POINTS, margin: float = S_MARGIN) -> ConditionReport:
    """``inf_{1<s<p} ((p-1)/(p-s))^{1/p'} A(s)``; the extremizer is the minimising ``s``."""
    e.require("strict")
    state = _Wedestig(U, V, e, variant, cfg)
    name = f"wedestig_bound({variant})"
    if state.tv_infinite:
        return _diverged(name, TILDE_V_INFINITE, state.tv_witness)
    cache: dict[float, float] = {}

    def bound(s):
        if s not in cache:
            rep = state.report(s)
            cache[s] = ((e.p - 1) / (e.p - s)) ** (1.0 / e.p_prime) * rep.value
        return cache[s]

    ss = np.linspace(1.0 + margin, e.p - margin, n_s)
    vals = np.array([bound(float(s)) for s in ss])
    trace = list(zip(ss.tolist(), vals.tolist()))
    finite = np.isfinite(vals)
    if not finite.any():
        cause = state.report(float(ss[len(ss) // 2])).cause
        return _diverged(name, f"A(s) diverged for every scanned s ({cause})", None, trace)
    k = int(np.argmin(np.where(finite, vals, np.inf)))
    a, b = ss[max(k - 1, 0)], ss[min(k + 1, len(ss) - 1)]
    s_best, v_best = golden_section(lambda s: bound(float(s)), float(a), float(b), tol=1e-7, maximize=False)
    refined = v_best < vals[k]
    if not refined:
        s_best, v_best = float(ss[k]), float(vals[k])
    return ConditionReport(float(v_best), float(s_best), tuple(trace), True, None, name)


def classical_constants(e: ExponentPair, lam: float | None = None) -> dict:
    """``(p/(p-1))^p``, ``e`` and ``e^lam`` for report annotation."""
    out = {"polya_knopp": math.e}
    if e.p > 1:
        out["hardy"] = (e.p / (e.p - 1.0)) ** e.p
        out["hardy_norm"] = e.p / (e.p - 1.0)
    if lam is not None:
        out["exp_lambda"] = math.exp(lam)
    return out
