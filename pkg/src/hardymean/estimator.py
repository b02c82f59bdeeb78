"""Inequality ratios, empirical best-constant search and composite suites."""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import funcdsl
from .conditions import (
    ConditionReport,
    ExponentPair,
    classical_constants,
    constant_bound_wedestig,
    dual_weight_function,
    dual_weight_function_b,
    geometric_condition,
    muckenhoupt_constant,
    wedestig_as,
)
from .errors import DivergenceError, HardyMeanError, ValidationError
from .funcdsl import Function
from .means import MeanFunction, make_mean_function
from .operators import OperatorInstance, evaluate, jensen_order_check
from .quadrature import QuadConfig, integrate_positive_axis

__all__ = [
    "TestFamily",
    "RatioReport",
    "SearchReport",
    "SuiteSpec",
    "SuiteReport",
    "make_operator_for",
    "inequality_ratio",
    "modular_ratio",
    "best_constant_search",
    "run_suite",
]

FAMILY_KINDS = ("power_truncated", "exponential", "step", "custom")
INNER_TIGHTENING = 10.0
BOUND_TOLERANCE = 1e-3

_IDENTITY = funcdsl.to_source(funcdsl.parse("x"))
_LOG = funcdsl.to_source(funcdsl.parse("ln(x)"))


@dataclass(frozen=True)
class TestFamily:
    """Parametric family of test functions.

    ``power_truncated``: ``x^a`` on ``(0, 1)``; ``exponential``: ``exp(-a x)``;
    ``step``: heights (tuples) on the fixed ``partition``; ``custom``:
    parameters index into ``sources``.
    """

    __test__ = False  # not a pytest class

    kind: str
    parameter_grid: tuple
    partition: tuple = ()
    sources: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValidationError(f"family kind must be one of {FAMILY_KINDS}, got {self.kind!r}")
        if not self.parameter_grid:
            raise ValidationError("family needs a non-empty parameter grid")
        if self.kind == "step":
            edges = self.partition
            if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])) or edges[0] < 0:
                raise ValidationError(f"step partition must be increasing and non-negative, got {edges}")
            for heights in self.parameter_grid:
                if len(heights) != len(edges) - 1:
                    raise ValidationError(f"step heights {heights} do not match {len(edges) - 1} partition cells")
                if any(h < 0 for h in heights):
                    raise ValidationError(f"step heights must be non-negative, got {heights}")
        if self.kind == "exponential" and any(a <= 0 for a in self.parameter_grid):
            raise ValidationError("exponential family needs positive rates")
        if self.kind == "custom" and not self.sources:
            raise ValidationError("custom family needs sources")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def source(self, param) -> str:
        if self.kind == "power_truncated":
            return f"indicator(0, 1) * x^({float(param)!r})"
        if self.kind == "exponential":
            return f"exp(-({float(param)!r}) * x)"
        if self.kind == "step":
            edges = self.partition
            terms = [
                f"{float(h)!r} * indicator({float(a)!r}, {float(b)!r})"
                for h, a, b in zip(param, edges, edges[1:])
                if h != 0
            ]
            return " + ".join(terms) if terms else "0"
        return self.sources[int(param)]

    def member(self, param) -> funcdsl.FunctionExpr:
        return funcdsl.parse(self.source(param))

    def midpoints(self, best, neighbours) -> list:
        """Parameters halfway between ``best`` and each neighbour."""
        if self.kind == "custom":
            return []
        if self.kind == "step":
            return [tuple(0.5 * (a + b) for a, b in zip(best, nb)) for nb in neighbours]
        return [0.5 * (best + nb) for nb in neighbours]

    @staticmethod
    def random_steps(partition, n_members: int, seed: int = 0, low: float = 0.1, high: float = 3.0, name: str = "") -> "TestFamily":
        rng = np.random.default_rng(seed)
        grid = tuple(tuple(float(v) for v in rng.uniform(low, high, len(partition) - 1)) for _ in range(n_members))
        return TestFamily("step", grid, tuple(float(p) for p in partition), name=name)


@dataclass(frozen=True)
class RatioReport:
    lhs: float
    rhs: float
    ratio: float
    lhs_err: float
    rhs_err: float
    family_member: str = ""
    truncated_at: tuple = (None, None)
    flags: tuple = ()

    def __post_init__(self):
        for name in ("lhs", "rhs", "ratio", "lhs_err", "rhs_err"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def ratio_err(self) -> float:
        return self.ratio * (self.lhs_err / self.lhs + self.rhs_err / self.rhs) if self.lhs > 0 else self.rhs_err

    def as_dict(self) -> dict:
        return {
            "member": self.family_member,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "lhs_err": self.lhs_err,
            "rhs_err": self.rhs_err,
            "ratio_err": self.ratio_err,
        }


def make_operator_for(g, w="1", cfg: QuadConfig | None = None, ginv=None) -> OperatorInstance:
    """Operator for mean function ``g``: Hardy for the identity, geometric for ``ln``."""
    cfg = cfg or QuadConfig()
    w = funcdsl.as_function(w)
    if isinstance(g, MeanFunction):
        return OperatorInstance("quasi_arithmetic", g, w, cfg)
    if g is None:
        return OperatorInstance("hardy", None, w, cfg)
    canon = funcdsl.to_source(funcdsl.parse(g)) if isinstance(g, str) else funcdsl.to_source(g)
    if canon == _IDENTITY:
        return OperatorInstance("hardy", None, w, cfg)
    if canon == _LOG:
        return OperatorInstance("geometric", None, w, cfg)
    return OperatorInstance("quasi_arithmetic", make_mean_function(g, ginv), w, cfg)


class _NodeCache:
    """Operator values and error estimates at outer quadrature nodes."""

    def __init__(self, op, f):
        self.op, self.f = op, f
        self.values: dict[float, tuple] = {}
        self.flags: set = set()
        self._lock = threading.Lock()

    def _lookup(self, x):
        hit = self.values.get(x)
        if hit is None:
            res = evaluate(self.op, self.f, x, full_output=True)
            hit = (res.value, res.err)
            with self._lock:
                self.values[x] = hit
                if res.flag:
                    self.flags.add(res.flag)
        return hit

    def __call__(self, xs):
        return np.array([self._lookup(float(x))[0] for x in xs])

    def errors(self, xs):
        return np.array([self._lookup(float(x))[1] for x in xs])

    def worst_relative_error(self) -> float | None:
        """Largest ``err / |value|`` seen so far; None if some zero value carries an error."""
        worst = 0.0
        for value, err in list(self.values.values()):
            if value == 0:
                if err > 0:
                    return None
                continue
            worst = max(worst, err / abs(value))
        return worst


def _inner_error(weight, cache, power, outer, cfg, points):
    """``int weight * d/dM[outer(M)] * err(M)``: the outer integral's sensitivity to inner errors.

    Integrated at a loose tolerance; only the order of magnitude matters.
    Per-node errors are noisy in ``x`` and can spoil the endpoint power-law
    fit; if that happens they are replaced by the worst relative error seen
    times ``M``, which is smooth but more pessimistic.
    """
    def bound(rho):
        def fn(x):
            wv = np.asarray(weight(x), dtype=float)
            out = np.zeros(x.shape)
            live = wv != 0
            if live.any():
                m = cache(x[live])
                dm = cache.errors(x[live]) if rho is None else rho * np.abs(m)
                with np.errstate(all="ignore"):
                    out[live] = np.abs(wv[live] * outer(m, dm))
            return np.where(np.isfinite(out), out, 0.0)

        loose = replace(cfg, rel_tol=1e-2, abs_tol=max(cfg.abs_tol, 1e-12))
        try:
            res = integrate_positive_axis(fn, loose, points)
        except HardyMeanError:
            return math.inf
        return res.value + res.err_estimate if res.finite else math.inf

    per_node = bound(None)
    if math.isfinite(per_node):
        return per_node
    rho = cache.worst_relative_error()
    return bound(rho) if rho is not None else math.inf


def _side(fn, cfg, points, side):
    res = integrate_positive_axis(fn, cfg, points)
    if res.diverged:
        raise DivergenceError(f"{side} integral diverges", res, side)
    return res


def _check_nonneg(f, where):
    grid = np.geomspace(1e-3, 1e3, 49)
    vals = np.asarray(f(grid), dtype=float)
    if np.any(vals < 0):
        raise ValidationError(f"{where} must be non-negative; got {vals[vals < 0][0]!r}")


def inequality_ratio(f, g, u, v, w, e: ExponentPair, cfg: QuadConfig | None = None, ginv=None, member: str = "") -> RatioReport:
    """``(int u (M^g_w f)^q)^{1/q} / (int v f^p)^{1/p}`` by nested quadrature.

    Operator values are cached per outer node and computed with a 10x
    tighter tolerance than the outer integrals.  Raises ``DivergenceError``
    naming the side (``"lhs"``/``"rhs"``) that diverges.
    """
    cfg = cfg or QuadConfig()
    f, u, v = funcdsl.as_function(f), funcdsl.as_function(u), funcdsl.as_function(v)
    _check_nonneg(f, "f")
    op = make_operator_for(g, w, cfg.tightened(INNER_TIGHTENING), ginv)
    points = funcdsl.merge_breakpoints(f, u, v, op.w)
    cache = _NodeCache(op, f)

    def lhs_integrand(x):
        uv = np.asarray(u(x), dtype=float)
        out = np.zeros(x.shape)
        live = uv != 0
        if live.any():
            m = cache(x[live])
            with np.errstate(all="ignore"):
                out[live] = uv[live] * m**e.q
        return out

    def rhs_integrand(x):
        with np.errstate(all="ignore"):
            fv = np.asarray(f(x), dtype=float)
            return np.where(fv == 0, 0.0, np.asarray(v(x), dtype=float) * fv**e.p)

    try:
        left = _side(lhs_integrand, cfg, points, "lhs")
    except DivergenceError as exc:
        if exc.side != "lhs":
            raise DivergenceError(f"lhs operator evaluation diverged: {exc}", exc.result, "lhs") from exc
        raise
    right = _side(rhs_integrand, cfg, points, "rhs")
    if not right.value > 0:
        raise ValidationError(f"right-hand side is {right.value!r}; f vanishes against v")
    lhs = max(left.value, 0.0) ** (1.0 / e.q)
    rhs = right.value ** (1.0 / e.p)
    inner = _inner_error(u, cache, e.q, lambda m, dm: e.q * m ** (e.q - 1.0) * dm, cfg, points)
    lhs_err = (1.0 / e.q) * lhs / max(left.value, 1e-300) * (left.err_estimate + inner) if lhs > 0 else 0.0
    rhs_err = (1.0 / e.p) * rhs / right.value * right.err_estimate
    return RatioReport(
        lhs, rhs, lhs / rhs, lhs_err, rhs_err, member or str(f),
        (left.truncated_at, right.truncated_at), tuple(sorted(cache.flags)),
    )


def modular_ratio(h, U, V, phi, s: float = 1.0, cfg: QuadConfig | None = None, member: str = "") -> RatioReport:
    """``int U phi(H h)^s / int V phi(h)^s`` with the unweighted Hardy average ``H``."""
    cfg = cfg or QuadConfig()
    h, U, V = funcdsl.as_function(h), funcdsl.as_function(U), funcdsl.as_function(V)
    phi = funcdsl.as_function(phi)
    op = OperatorInstance("hardy", None, funcdsl.parse("1"), cfg.tightened(INNER_TIGHTENING))
    cache = _NodeCache(op, h)
    points = funcdsl.merge_breakpoints(h, U, V)

    def lhs_integrand(x):
        uv = np.asarray(U(x), dtype=float)
        out = np.zeros(x.shape)
        live = uv != 0
        if live.any():
            with np.errstate(all="ignore"):
                out[live] = uv[live] * np.asarray(phi(cache(x[live])), dtype=float) ** s
        return out

    def rhs_integrand(x):
        vv = np.asarray(V(x), dtype=float)
        out = np.zeros(x.shape)
        live = vv != 0
        if live.any():
            with np.errstate(all="ignore"):
                out[live] = vv[live] * np.asarray(phi(h(x[live])), dtype=float) ** s
        return out

    left = _side(lhs_integrand, cfg, points, "lhs")
    right = _side(rhs_integrand, cfg, points, "rhs")
    if not right.value > 0:
        raise ValidationError(f"right-hand side is {right.value!r}")
    return RatioReport(
        left.value, right.value, left.value / right.value,
        left.err_estimate + _modular_inner_error(U, cache, phi, s, cfg, points), right.err_estimate,
        member or str(h), (left.truncated_at, right.truncated_at),
    )


def _modular_inner_error(U, cache, phi, s, cfg, points):
    def outer(m, dm):
        hi = np.asarray(phi(m + dm), dtype=float) ** s
        lo = np.asarray(phi(np.maximum(m - dm, 0.0)), dtype=float) ** s
        return 0.5 * (hi - lo)

    return _inner_error(U, cache, s, outer, cfg, points)


@dataclass(frozen=True)
class SearchReport:
    sup_ratio: float
    best_member: str
    best_param: object
    reports: tuple
    failures: tuple = ()
    lower_bound: bool = True

    @property
    def sup_err(self) -> float:
        best = max(self.reports, key=lambda r: r.ratio)
        return best.ratio_err

    def as_dict(self) -> dict:
        return {
            "sup_ratio": self.sup_ratio,
            "sup_err": self.sup_err,
            "best_member": self.best_member,
            "lower_bound": self.lower_bound,
            "members": [r.as_dict() for r in self.reports],
            "failures": [{"member": m, "error": msg} for m, msg in self.failures],
        }


def best_constant_search(family: TestFamily, g, u, v, w, e: ExponentPair, cfg: QuadConfig | None = None,
                         ginv=None, workers: int | None = None, ratio_fn=None) -> SearchReport:
    """Largest ratio over the family, plus one refinement pass around the best member.

    The result is an empirical LOWER bound on the best constant.  Members
    whose evaluation fails are recorded in ``failures``; if every member
    fails a ``ValidationError`` is raised.
    """
    cfg = cfg or QuadConfig()
    if ratio_fn is None:
        def ratio_fn(fexpr, label):
            return inequality_ratio(fexpr, g, u, v, w, e, cfg, ginv, label)

    def run(params):
        def one(param):
            label = family.source(param)
            try:
                return param, ratio_fn(family.member(param), label), None
            except HardyMeanError as exc:
                return param, None, f"{type(exc).__name__}: {exc}"

        if workers and workers > 1 and len(params) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(one, params))
        return [one(p) for p in params]

    grid = list(family.parameter_grid)
    results = run(grid)
    ok = [(p, r) for p, r, err in results if r is not None]
    if ok:
        best_idx = max(range(len(results)), key=lambda i: results[i][1].ratio if results[i][1] is not None else -math.inf)
        neighbours = [grid[j] for j in (best_idx - 1, best_idx + 1) if 0 <= j < len(grid) and results[j][1] is not None]
        results += run(family.midpoints(grid[best_idx], neighbours))
    failures = tuple((family.source(p), err) for p, r, err in results if r is None)
    ok = [(p, r) for p, r, err in results if r is not None]
    if not ok:
        raise ValidationError(f"every member of family {family.label} failed: {failures[0][1]}")
    best_param, best = max(ok, key=lambda pr: pr[1].ratio)
    return SearchReport(best.ratio, best.family_member, best_param, tuple(r for _, r in ok), failures)


# --------------------------------------------------------------------------
# suites
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteSpec:
    """Declarative description of one verification run."""

    name: str
    g: str = "x"
    ginv: str | None = None
    u: str = "1"
    v: str = "1"
    w: str = "1"
    p: float = 2.0
    q: float = 2.0
    lam: float | None = None
    conditions: tuple = ()
    wedestig_s: float | None = None
    variants: tuple = ("paper", "alternate")
    families: tuple = ()
    checks: dict = field(default_factory=dict)
    cfg: QuadConfig = field(default_factory=QuadConfig)


@dataclass
class SuiteReport:
    name: str
    setting: dict
    conditions: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    empirical: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    observations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.get("passed", True) for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "setting": self.setting,
            "conditions": self.conditions,
            "constants": self.constants,
            "empirical": self.empirical,
            "checks": self.checks,
            "errors": self.errors,
            "observations": self.observations,
            "passed": self.passed,
        }


def _transformed(spec: SuiteSpec):
    """``(U, V)`` for the conditions: the weights themselves when ``w`` is constant 1."""
    if funcdsl.constant_value(funcdsl.as_function(spec.w)) == 1.0:
        return funcdsl.as_function(spec.u), funcdsl.as_function(spec.v)
    from .reduction import make_context, transform_weights

    ctx = make_context(spec.w, spec.p, spec.q, spec.u, spec.v, spec.cfg)
    return transform_weights(ctx)


def _conditions(spec, e, report):
    U, V = _transformed(spec)
    for cond in spec.conditions:
        try:
            if cond == "muckenhoupt":
                reps = [muckenhoupt_constant(U, V, e, spec.cfg)]
            elif cond == "geometric":
                reps = [geometric_condition(U, V, e, spec.cfg)]
            elif cond == "wedestig":
                s = spec.wedestig_s if spec.wedestig_s is not None else 0.5 * (1 + e.p)
                reps = [wedestig_as(U, V, e, s, var, spec.cfg) for var in spec.variants]
            elif cond == "wedestig_bound":
                reps = [constant_bound_wedestig(U, V, e, var, spec.cfg) for var in spec.variants]
            elif cond == "classical":
                report.constants = classical_constants(e, spec.lam)
                continue
            else:
                raise ValidationError(f"unknown condition {cond!r}")
            report.conditions.extend(r.as_dict() for r in reps)
        except HardyMeanError as exc:
            report.errors.append({"section": f"conditions.{cond}", "error": str(exc)})


def _empirical(spec, e, report):
    bound = spec.checks.get("ratio_bound")
    reserved = spec.checks.get("modular_dual", {}).get("family")
    for fam in spec.families:
        if fam.label == reserved:
            continue
        try:
            res = best_constant_search(fam, spec.g, spec.u, spec.v, spec.w, e, spec.cfg, spec.ginv)
        except HardyMeanError as exc:
            report.errors.append({"section": f"families.{fam.label}", "error": str(exc)})
            continue
        entry = {"family": fam.label, **res.as_dict()}
        report.empirical.append(entry)
        if bound is not None:
            worst = max(r.ratio - r.ratio_err for r in res.reports)
            report.checks.append({
                "name": f"ratio_bound[{fam.label}]",
                "bound": bound,
                "sup_ratio": res.sup_ratio,
                "passed": bool(worst <= bound + BOUND_TOLERANCE),
            })


def _check_jensen(spec, params, report):
    op = make_operator_for(spec.g, spec.w, spec.cfg, spec.ginv)
    if op.g is None:
        g = make_mean_function(spec.g, spec.ginv)
        op = OperatorInstance("quasi_arithmetic", g, op.w, op.cfg)
    grid = params.get("grid", (0.5, 1.0, 2.0))
    for src in params.get("functions", ("1 + x",)):
        rep = jensen_order_check(op, src, grid)
        report.checks.append({
            "name": f"jensen[{src}]",
            "case": rep.case,
            "passed": rep.holds,
            "violations": [pt.x for pt in rep.violations],
        })


def _check_reduction(spec, params, report):
    from .reduction import make_context, verify_reduction

    ctx = make_context(spec.w, spec.p, spec.q, spec.u, spec.v, spec.cfg)
    cutoff = float(params.get("cutoff", 2.0))
    for src in params.get("functions", ("1 + x",)):
        rep = verify_reduction(ctx, spec.g, src, cutoff)
        report.checks.append({
            "name": f"reduction[{src}]",
            "identity_error": rep.max_identity_error,
            "ratio_weighted": rep.ratio_weighted.ratio,
            "ratio_reduced": rep.ratio_reduced.ratio,
            "ratio_difference": rep.ratio_difference,
            "tolerance": rep.ratio_tolerance,
            "passed": bool(rep.ratios_agree and rep.max_identity_error <= 1e-8),
        })


def _check_dual_weight(spec, params, report):
    v = dual_weight_function(spec.u, spec.w, spec.cfg)
    e = ExponentPair(1.0, 1.0)
    for src in params.get("functions", ("1 + x",)):
        r = inequality_ratio(src, spec.g, spec.u, v, spec.w, e, spec.cfg, spec.ginv, src)
        report.checks.append({
            "name": f"dual_weight_bound[{src}]",
            "lhs": r.lhs,
            "rhs": r.rhs,
            "ratio": r.ratio,
            "bound": 1.0,
            "passed": bool(r.ratio <= 1.0 + r.ratio_err + BOUND_TOLERANCE),
        })


def _check_modular_dual(spec, params, report):
    lam = float(params.get("lambda", spec.lam if spec.lam is not None else 1.0))
    s = float(params.get("s", 1.0))
    phi = params.get("phi", "exp(x)")
    U = funcdsl.as_function(spec.u)
    V = dual_weight_function_b(U, lam, spec.cfg)
    fam_name = params.get("family")
    fams = [f for f in spec.families if f.label == fam_name] if fam_name else []
    fam = fams[0] if fams else TestFamily.random_steps((0, 0.25, 0.5, 1, 2), 5, seed=int(params.get("seed", 0)))
    bound = math.exp(lam)
    search = best_constant_search(
        fam, None, None, None, None, ExponentPair(1.0, 1.0), spec.cfg,
        ratio_fn=lambda h, label: modular_ratio(h, U, V, phi, s, spec.cfg, label),
    )
    report.checks.append({
        "name": "modular_dual_bound",
        "bound": bound,
        "sup_ratio": search.sup_ratio,
        "members": [r.as_dict() for r in search.reports],
        "passed": bool(search.sup_ratio <= bound + BOUND_TOLERANCE),
    })


_CHECKS = {
    "jensen": _check_jensen,
    "reduction": _check_reduction,
    "dual_weight": _check_dual_weight,
    "modular_dual": _check_modular_dual,
}


def run_suite(spec: SuiteSpec) -> SuiteReport:
    """Evaluate conditions, constants, empirical searches and checks.

    A failing section is recorded in ``errors``; the rest of the suite still runs.
    """
    e = ExponentPair(spec.p, spec.q)
    setting = {
        "g": spec.g, "ginv": spec.ginv, "u": spec.u, "v": spec.v, "w": spec.w,
        "p": spec.p, "q": spec.q, "lambda": spec.lam,
    }
    report = SuiteReport(spec.name, setting)
    _conditions(spec, e, report)
    if not report.constants:
        report.constants = classical_constants(e, spec.lam)
    _empirical(spec, e, report)
    for name, params in spec.checks.items():
        if name == "ratio_bound":
            continue
        handler = _CHECKS.get(name)
        if handler is None:
            report.errors.append({"section": f"checks.{name}", "error": "unknown check"})
            continue
        try:
            handler(spec, params, report)
        except HardyMeanError as exc:
            report.errors.append({"section": f"checks.{name}", "error": str(exc)})

    diverged = [c for c in report.conditions if c["status"] == "diverged"]
    finite_empirical = report.empirical and all(math.isfinite(x["sup_ratio"]) for x in report.empirical)
    if diverged and finite_empirical:
        names = ", ".join(sorted({c["name"] for c in diverged}))
        report.observations.append(
            f"inequality holds empirically (all family ratios finite) while the sufficient condition is not satisfied: {names}"
        )
    return report
