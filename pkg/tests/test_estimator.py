import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from hardymean.conditions import ExponentPair
from hardymean.errors import DivergenceError, ValidationError
from hardymean.estimator import (
    SuiteSpec,
    TestFamily,
    best_constant_search,
    inequality_ratio,
    make_operator_for,
    modular_ratio,
    run_suite,
)
from hardymean.reduction import make_context, pullback, transform_weights

P1 = ExponentPair(1.0, 1.0)
P2 = ExponentPair(2.0, 2.0)


def hardy_closed_form(a):
    eps = a + 0.5
    return math.sqrt((1 + 2 * eps) / (0.5 + eps) ** 2)


def sqrt_mean_closed_form(a):
    # g = sqrt, u = v = x, p = q = 2, f = x^a on (0, 1)
    c = a / 2 + 1
    rhs2 = 1 / (2 * a + 2)
    return math.sqrt((rhs2 + 0.5) / c**4 / rhs2)


# ---------------------------------------------------------------- families


def test_family_sources():
    fam = TestFamily("power_truncated", (-0.5,))
    assert float(fam.member(-0.5)(np.array([0.25]))[0]) == pytest.approx(2.0)
    assert float(fam.member(-0.5)(np.array([2.0]))[0]) == 0.0
    steps = TestFamily("step", ((1.0, 0.0, 2.0),), (0, 1, 2, 3))
    np.testing.assert_allclose(steps.member((1.0, 0.0, 2.0))(np.array([0.5, 1.5, 2.5, 4.0])), [1, 0, 2, 0])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="nope", parameter_grid=(1,)),
        dict(kind="power_truncated", parameter_grid=()),
        dict(kind="exponential", parameter_grid=(0.0,)),
        dict(kind="step", parameter_grid=((1.0,),), partition=(0, 1, 2)),
        dict(kind="step", parameter_grid=((-1.0,),), partition=(0, 1)),
        dict(kind="step", parameter_grid=((1.0,),), partition=(1, 0)),
        dict(kind="custom", parameter_grid=(0,)),
    ],
)
def test_family_validation(kwargs):
    with pytest.raises(ValidationError):
        TestFamily(**kwargs)


def test_random_steps_deterministic():
    a = TestFamily.random_steps((0, 1, 2), 4, seed=3)
    b = TestFamily.random_steps((0, 1, 2), 4, seed=3)
    assert a == b
    assert all(0.1 <= h <= 3.0 for hs in a.parameter_grid for h in hs)


def test_operator_selection():
    assert make_operator_for("x").kind == "hardy"
    assert make_operator_for("ln(x)").kind == "geometric"
    assert make_operator_for("x^2", ginv="sqrt(x)").kind == "quasi_arithmetic"


# ---------------------------------------------------------------- ratios


@pytest.mark.parametrize("a", [-0.45, -0.3, 0.0, 1.0])
def test_hardy_power_ratio(a):
    r = inequality_ratio(f"indicator(0, 1) * x^({a})", "x", "1", "1", "1", P2)
    assert r.ratio == pytest.approx(hardy_closed_form(a), abs=1e-3)
    assert r.ratio == pytest.approx(r.lhs / r.rhs, rel=1e-15)
    assert r.ratio_err < 1e-4


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.02])
def test_polya_knopp_ratio(eps):
    r = inequality_ratio(f"indicator(0, 1) * x^({eps - 1})", "ln(x)", "1", "1", "1", P1)
    assert r.ratio == pytest.approx(math.exp(1 - eps), rel=1e-3)


@pytest.mark.parametrize("p,a", [(1.5, -0.618849), (2.0, -0.271347)])
def test_slow_tail_not_truncated(p, a):
    # (H f)^p ~ x^(-p) beyond 1 while f is singular at 0; the tail must be kept
    closed = ((1 + (a * p + 1) / (p - 1)) / (a + 1) ** p) ** (1 / p)
    r = inequality_ratio(f"indicator(0, 1) * x^({a})", "x", "1", "1", "1", ExponentPair(p, p))
    assert abs(r.ratio - closed) <= max(r.ratio_err, 1e-9 * closed)
    assert r.ratio_err < 1e-6


def test_polya_knopp_extreme_singularity():
    # mass of x^(eps - 1) sits below 1e-300; the endpoint model must carry it
    eps = 0.002
    r = inequality_ratio(f"indicator(0, 1) * x^({eps - 1!r})", "ln(x)", "1", "1", "1", P1)
    assert r.ratio == pytest.approx(math.exp(1 - eps), rel=1e-4)
    assert math.isfinite(r.ratio_err)


def test_indicator_ratio():
    # H(indicator) = 1 on (0, 1) and 1/x beyond: slow tail handled without truncation
    r = inequality_ratio("indicator(0, 1)", "x", "1", "1", "1", P2)
    assert r.ratio == pytest.approx(math.sqrt(2), abs=1e-6)


@pytest.mark.parametrize("a", [-0.9, -0.5, 0.0])
def test_sqrt_mean_linear_weights(a):
    r = inequality_ratio(f"indicator(0, 1) * x^({a})", "sqrt(x)", "x", "x", "1", P2, ginv="x^2")
    assert r.ratio == pytest.approx(sqrt_mean_closed_form(a), rel=1e-6)


def test_ratio_against_nested_scipy():
    f = lambda t: math.exp(-t) * (1 + t)  # noqa: E731
    hf = lambda x: sp_integrate.quad(f, 0, x)[0] / x  # noqa: E731
    lhs = math.sqrt(sp_integrate.quad(lambda x: hf(x) ** 2 / (1 + x), 0, np.inf, limit=200)[0])
    rhs = math.sqrt(sp_integrate.quad(lambda x: f(x) ** 2, 0, np.inf)[0])
    r = inequality_ratio("exp(-x) * (1 + x)", "x", "1 / (1 + x)", "1", "1", P2)
    assert r.ratio == pytest.approx(lhs / rhs, rel=1e-7)


def test_constant_collapse():
    r = inequality_ratio("3", "ln(x)", "exp(-x)", "exp(-x)", "1", P2)
    assert r.ratio == pytest.approx(1.0, rel=1e-10)


def test_weighted_ratio_matches_reduced_form():
    ctx = make_context("x", 2.0, 2.0, "1 / (1 + x)^2", "1")
    f = "1.5 * indicator(0, 0.5) + 0.4 * indicator(0.5, 2)"
    U, V = transform_weights(ctx)
    h = pullback(ctx, f)
    cut = 2.0  # W(2) = 2 for w = x
    from hardymean.funcdsl import Function

    h_cut = Function(lambda y: np.where(y < cut, h(y), 0.0), (0.125, cut), "h")
    r1 = inequality_ratio(f, "ln(x)", ctx.u, ctx.v, "x", P2)
    r2 = inequality_ratio(h_cut, "ln(x)", U, V, "1", P2)
    assert abs(r1.ratio - r2.ratio) <= 2 * (r1.ratio_err + r2.ratio_err) + 1e-12


def test_rhs_divergence_named():
    with pytest.raises(DivergenceError) as info:
        # (H f)^2 = 4/x against u = x stays integrable; f^2 = 1/x does not
        inequality_ratio("indicator(0, 1) * x^(-0.5)", "x", "x * indicator(0, 1)", "1", "1", P2)
    assert info.value.side == "rhs"


def test_lhs_divergence_named():
    with pytest.raises(DivergenceError) as info:
        inequality_ratio("indicator(0, 1)", "x", "1", "1", "1", P1)
    assert info.value.side == "lhs"


def test_zero_rhs_rejected():
    with pytest.raises(ValidationError):
        inequality_ratio("indicator(2, 3)", "x", "1", "indicator(0, 1)", "1", P2)


def test_negative_f_rejected():
    with pytest.raises(ValidationError):
        inequality_ratio("x - 1", "x", "1", "1", "1", P2)


# ---------------------------------------------------------------- modular ratio


def test_modular_ratio_closed_form():
    # H h = c on (0, 1), V = 1 - x there: ratio e^c / (e^c / 2) = 2
    from hardymean.conditions import dual_weight_function_b

    V = dual_weight_function_b("indicator(0, 1)", 1.0)
    r = modular_ratio("1.3 * indicator(0, 2)", "indicator(0, 1)", V, "exp(x)", 1.0)
    assert r.ratio == pytest.approx(2.0, rel=1e-8)


# ---------------------------------------------------------------- search


HARDY_GRID = (-0.49, -0.45, -0.4, -0.25, 0.0)


@pytest.fixture(scope="module")
def hardy_search():
    return best_constant_search(TestFamily("power_truncated", HARDY_GRID), "x", "1", "1", "1", P2)


def test_hardy_search_lower_bound(hardy_search):
    assert hardy_search.sup_ratio >= 1.97
    assert hardy_search.lower_bound
    for r in hardy_search.reports:
        assert r.ratio < 2.0 + r.ratio_err


def test_hardy_search_monotone(hardy_search):
    by_param = {}
    for r in hardy_search.reports:
        a = float(r.family_member.split("x^(")[1].rstrip(")"))
        by_param[a] = r.ratio
    params = sorted(by_param)
    ratios = [by_param[a] for a in params]
    assert all(x > y for x, y in zip(ratios, ratios[1:]))
    for a in params:
        assert by_param[a] == pytest.approx(hardy_closed_form(a), abs=1e-3)


def test_hardy_search_refines(hardy_search):
    assert len(hardy_search.reports) == len(HARDY_GRID) + 1  # best sits at the grid edge
    assert hardy_search.best_param == -0.49


def test_polya_knopp_search_below_e():
    fam = TestFamily("power_truncated", (-0.5, -0.9, -0.98))
    res = best_constant_search(fam, "ln(x)", "1", "1", "1", P1)
    for r in res.reports:
        assert r.ratio < math.e + r.ratio_err
    assert res.sup_ratio == pytest.approx(math.exp(0.98), rel=1e-3)


def test_search_parallel_matches_serial():
    fam = TestFamily("exponential", (0.5, 1.0, 2.0))
    a = best_constant_search(fam, "x", "1", "1", "1", P2)
    b = best_constant_search(fam, "x", "1", "1", "1", P2, workers=3)
    assert [r.ratio for r in a.reports] == [r.ratio for r in b.reports]


def test_search_all_fail():
    fam = TestFamily("power_truncated", (-0.6, -0.7))  # f^2 not integrable
    with pytest.raises(ValidationError, match="every member"):
        best_constant_search(fam, "x", "1", "1", "1", P2)


def test_search_records_failures():
    fam = TestFamily("power_truncated", (-0.7, -0.25))
    res = best_constant_search(fam, "x", "1", "1", "1", P2)
    assert len(res.failures) == 1
    assert res.sup_ratio == pytest.approx(hardy_closed_form(-0.25), abs=1e-3)


# ---------------------------------------------------------------- suites


@pytest.mark.slow
def test_example_suite_shows_both_facts():
    spec = SuiteSpec(
        "example", g="sqrt(x)", ginv="x^2", u="x", v="x",
        conditions=("wedestig",), wedestig_s=1.5,
        families=(TestFamily("power_truncated", (-0.9, -0.5, 0.0)),),
    )
    rep = run_suite(spec)
    assert not rep.errors
    assert {c["status"] for c in rep.conditions} == {"diverged"}
    assert all(c["cause"] == "tilde-V infinite" for c in rep.conditions)
    assert all(math.isfinite(e["sup_ratio"]) for e in rep.empirical)
    assert any("not satisfied" in o for o in rep.observations)


def test_suite_errors_are_per_section():
    spec = SuiteSpec(
        "broken", conditions=("nonsense", "muckenhoupt"),
        families=(TestFamily("power_truncated", (-0.25,)),),
        checks={"mystery": {}},
    )
    rep = run_suite(spec)
    sections = {e["section"] for e in rep.errors}
    assert sections == {"conditions.nonsense", "checks.mystery"}
    assert rep.conditions[0]["value"] == pytest.approx(1.0, rel=1e-6)
    assert len(rep.empirical) == 1
    assert not rep.passed


def test_dual_weight_suite_check():
    spec = SuiteSpec(
        "dual", g="ln(x)", u="indicator(0, 1)", p=1, q=1,
        checks={"dual_weight": {"functions": ("1 + x", "exp(-x)", "2 * indicator(0, 0.5) + indicator(0.5, 3)")}},
    )
    rep = run_suite(spec)
    assert not rep.errors
    assert len(rep.checks) == 3
    assert all(c["passed"] and c["ratio"] <= 1.0 for c in rep.checks)
