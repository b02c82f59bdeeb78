import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy import optimize as sp_optimize

from hardymean.conditions import (
    TILDE_V_INFINITE,
    ExponentPair,
    classical_constants,
    constant_bound_wedestig,
    dual_weight_function,
    dual_weight_function_b,
    dual_weight_thm1,
    dual_weight_thm1b,
    geometric_condition,
    golden_section,
    muckenhoupt_constant,
    sup_scan,
    wedestig_as,
)
from hardymean.errors import ValidationError

P2 = ExponentPair(2.0, 2.0)


# ---------------------------------------------------------------- exponent pair


def test_exponent_pair_conjugate():
    assert ExponentPair(3.0, 4.0).p_prime == pytest.approx(1.5)
    assert ExponentPair(1.0, 1.0).p_prime == math.inf


@pytest.mark.parametrize("p,q", [(0.0, 1.0), (-1.0, 2.0), (math.inf, 2.0), (2.0, math.nan)])
def test_exponent_pair_invalid(p, q):
    with pytest.raises(ValidationError):
        ExponentPair(p, q)


def test_regimes_enforced():
    with pytest.raises(ValidationError):
        muckenhoupt_constant("1", "1", ExponentPair(1.0, 2.0))
    with pytest.raises(ValidationError):
        muckenhoupt_constant("1", "1", ExponentPair(3.0, 2.0))
    with pytest.raises(ValidationError):
        geometric_condition("1", "1", ExponentPair(2.0, 1.0))


# ---------------------------------------------------------------- dual weights


def test_dual_weight_indicator():
    # w = 1: v(t) = int_t^1 dx / x
    assert dual_weight_thm1("indicator(0, 1)", "1", 0.5) == pytest.approx(math.log(2), rel=1e-9)


def test_dual_weight_inverse_square():
    assert dual_weight_thm1("x^(-2)", "1", 2.0) == pytest.approx(0.125, rel=1e-9)


@pytest.mark.parametrize("f", [lambda t: 1 + t, lambda t: math.exp(-t), lambda t: 2.0 if t < 0.7 else 0.5])
def test_dual_weight_fubini(f):
    # equality case: int u H f = int v f for g = identity, u = indicator(0, 1), w = 1
    hf = lambda x: sp_integrate.quad(f, 0, x, points=[0.7] if x > 0.7 else None)[0] / x  # noqa: E731
    lhs = sp_integrate.quad(hf, 0, 1, limit=200)[0]
    v = dual_weight_function("indicator(0, 1)", "1")
    rhs = sp_integrate.quad(lambda t: float(v(np.array([t]))[0]) * f(t), 0, 1, points=[0.7], limit=200)[0]
    assert rhs == pytest.approx(lhs, rel=1e-7)


def test_dual_weight_harmonic_tail():
    assert dual_weight_thm1("1", "1", 1.0) == math.inf


def test_dual_weight_with_weight():
    # w = 2x: W = x^2, v(t) = 2t int_t^inf e^-x / x^2 dx
    oracle = 2 * 1.5 * sp_integrate.quad(lambda x: math.exp(-x) / x**2, 1.5, np.inf)[0]
    assert dual_weight_thm1("exp(-x)", "2*x", 1.5) == pytest.approx(oracle, rel=1e-8)


@pytest.mark.parametrize("U,x,expected", [("indicator(0, 1)", 0.5, 0.5), ("x^(-1)", 1.0, 0.5), ("1", 3.0, 1.0)])
def test_dual_weight_b(U, x, expected):
    assert dual_weight_thm1b(U, 1.0, x) == pytest.approx(expected, rel=1e-9)


def test_dual_weight_b_needs_positive_lambda():
    with pytest.raises(ValidationError):
        dual_weight_thm1b("1", 0.0, 1.0)


def test_vectorised_dual_weights_agree():
    xs = np.array([0.1, 0.5, 0.9, 2.0])
    v = dual_weight_function("indicator(0, 1)", "1")
    np.testing.assert_allclose(v(xs), [dual_weight_thm1("indicator(0, 1)", "1", x) for x in xs], rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(v(xs), np.where(xs < 1, -np.log(xs), 0.0), rtol=1e-8, atol=1e-14)
    V = dual_weight_function_b("indicator(0, 1)", 1.0)
    np.testing.assert_allclose(V(xs), np.where(xs < 1, 1 - xs, 0.0), rtol=1e-8, atol=1e-14)


# ---------------------------------------------------------------- muckenhoupt


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
def test_muckenhoupt_closed_form(p):
    rep = muckenhoupt_constant("1", "1", ExponentPair(p, p))
    assert rep.value == pytest.approx((p - 1) ** (-1 / p), rel=1e-5)
    assert rep.status == "finite"


def test_muckenhoupt_diverges_for_linear_weights():
    rep = muckenhoupt_constant("x", "x", P2)
    assert rep.diverged
    assert rep.as_dict()["value"] is None


BUMP = "(x / (1 + x)^2)^2"  # tail factor vanishes at both ends, so the sup is interior


def bump(x):
    return x**2 / (1 + x) ** 4


def _muckenhoupt_oracle(U, p, q):
    pp = p / (p - 1)

    def neg(logt):
        t = math.exp(logt)
        tail = sp_integrate.quad(lambda x: U(x) * x**-q, t, np.inf, limit=200)[0]
        return -(tail ** (1 / q)) * t ** (1 / pp)  # V = 1

    res = sp_optimize.minimize_scalar(neg, bounds=(-8, 8), method="bounded", options={"xatol": 1e-10})
    return -res.fun


def test_muckenhoupt_against_scipy():
    rep = muckenhoupt_constant(BUMP, "1", P2)
    assert rep.value == pytest.approx(_muckenhoupt_oracle(bump, 2.0, 2.0), rel=1e-6)


@pytest.mark.parametrize("c", [4.0, 0.25])
def test_muckenhoupt_scale_covariance(c):
    base = muckenhoupt_constant(BUMP, "1", P2).value
    scaled = muckenhoupt_constant(f"{c} * {BUMP}", "1", P2).value
    assert scaled == pytest.approx(c**0.5 * base, rel=1e-6)


def test_muckenhoupt_boundary_sup():
    # sup approached as tau -> 0, value 1
    rep = muckenhoupt_constant("1 / (1 + x)^2", "1", P2)
    assert rep.value == pytest.approx(1.0, rel=1e-6)
    assert rep.extremizer <= 1e-6


def test_muckenhoupt_extremizer_reproduces_value():
    rep = muckenhoupt_constant(BUMP, "1", P2)
    t = rep.extremizer
    tail = sp_integrate.quad(lambda x: bump(x) / x**2, t, np.inf)[0]
    assert math.sqrt(tail * t) == pytest.approx(rep.value, rel=1e-6)
    assert rep.refined
    assert all(rep.value >= v for _, v in rep.scan_trace)


# ---------------------------------------------------------------- geometric condition


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_geometric_condition_constant(p):
    rep = geometric_condition("1", "1", ExponentPair(p, p))
    assert rep.value == pytest.approx(1.0, rel=1e-8)


def test_geometric_condition_linear_weights():
    # G(1/t)(t) = e/t, so the functional is sqrt(e) for every x
    rep = geometric_condition("x", "x", P2)
    assert rep.value == pytest.approx(math.sqrt(math.e), rel=1e-6)


def test_geometric_condition_diverges():
    assert geometric_condition("1", "x", ExponentPair(1.0, 1.0)).diverged


# ---------------------------------------------------------------- wedestig


@pytest.mark.parametrize("variant", ["paper", "alternate"])
def test_wedestig_linear_weights_diverge(variant):
    rep = wedestig_as("x", "x", P2, 1.5, variant)
    assert rep.diverged
    assert rep.cause == TILDE_V_INFINITE


def test_wedestig_alternate_closed_form():
    rep = wedestig_as("1", "1", P2, 1.5, "alternate")
    assert rep.value == pytest.approx(math.sqrt(2), rel=1e-5)


def test_wedestig_full_exponent_diverges():
    rep = wedestig_as("1", "1", P2, 1.5, "paper")
    assert rep.diverged


def test_wedestig_s_range():
    with pytest.raises(ValidationError):
        wedestig_as("1", "1", P2, 2.0, "alternate")
    with pytest.raises(ValidationError):
        wedestig_as("1", "1", P2, 1.5, "other")


@settings(max_examples=10)
@given(
    s=st.floats(1.01, 1.99),
    variant=st.sampled_from(["paper", "alternate"]),
    V=st.sampled_from(["x", "x^2", "x + x^3", "exp(x) * x"]),
)
def test_wedestig_divergence_monotone(s, variant, V):
    rep = wedestig_as("1", V, P2, s, variant)
    assert rep.diverged and rep.cause == TILDE_V_INFINITE


@pytest.mark.slow
def test_wedestig_bound_sharp():
    rep = constant_bound_wedestig("1", "1", P2, "alternate")
    assert rep.value == pytest.approx(2.0, abs=1e-4)
    assert rep.extremizer == pytest.approx(1.5, abs=1e-2)


@pytest.mark.parametrize("U,V,variant", [("x", "x", "paper"), ("x", "x", "alternate"), ("1", "1", "paper")])
def test_wedestig_bound_diverges(U, V, variant):
    assert constant_bound_wedestig(U, V, P2, variant, n_s=8).diverged


# ---------------------------------------------------------------- classical constants


def test_classical_constants():
    c = classical_constants(P2, lam=0.0)
    assert c["hardy"] == 4.0
    assert c["polya_knopp"] == math.e
    assert c["exp_lambda"] == 1.0
    big = classical_constants(ExponentPair(1000.0, 1000.0))["hardy"]
    assert abs(big - math.e) / math.e < 2e-3


# ---------------------------------------------------------------- search helpers


@settings(max_examples=25)
@given(c=st.floats(-3, 3), a=st.floats(0.1, 5))
def test_golden_section_parabola(c, a):
    x, fx = golden_section(lambda z: -a * (z - c) ** 2, -4.0, 4.0)
    assert x == pytest.approx(c, abs=1e-6)
    assert fx == pytest.approx(0.0, abs=1e-10)


def test_sup_scan_interior_peak():
    rep = sup_scan(lambda t: t / (1 + t**2), "peak")
    assert rep.value == pytest.approx(0.5, rel=1e-12)
    assert rep.extremizer == pytest.approx(1.0, rel=1e-4)


def test_sup_scan_unbounded():
    rep = sup_scan(lambda t: np.log1p(t), "log")
    assert rep.diverged


def test_sup_scan_boundary_limit():
    # increasing to 1 as t -> inf: a finite sup approached at the boundary
    rep = sup_scan(lambda t: 1 - 1 / np.sqrt(1 + t), "approach")
    assert rep.value == pytest.approx(1.0, rel=1e-6)
    assert rep.note
