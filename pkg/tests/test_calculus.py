"""Differentiation: chain rule, product rule, finite-difference checks."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foldeq.calculus import differentiate, partial_derivative, total_derivative
from foldeq.errors import DivisionByZero, MissingDerivative
from foldeq.expr import (
    Deriv,
    FnRegistry,
    RAT_0,
    Var,
    eval_expr,
    eval_numeric,
    make_prod,
    make_sum,
)
from foldeq.parser import parse_expr


def P(text, reg=None):
    return parse_expr(text, reg)


class TestTotalDerivative:
    def test_product_with_time(self):
        assert differentiate(P("t*x^2"), "t", {"x"}) == P("x^2 + 2*t*x*x'")

    def test_constant(self):
        assert differentiate(P("c"), "t", set()) == RAT_0

    def test_opaque_chain_rule(self):
        reg = FnRegistry()
        reg.declare("rho")
        assert differentiate(P("rho(x)", reg), "t", {"x"}, reg) == \
            P("rho'(x)*x'", reg)

    def test_declared_derivative_used(self):
        reg = FnRegistry()
        reg.declare("psi", deriv=P("2*u"))
        assert differentiate(P("psi(x)", reg), "t", {"x"}, reg) == P("2*x*x'")

    def test_builtins(self):
        assert differentiate(P("sin(t)"), "t", set()) == P("cos(t)")
        assert differentiate(P("cos(x)"), "t", {"x"}) == P("-sin(x)*x'")
        assert differentiate(P("exp(2*t)"), "t", set()) == P("2*exp(2*t)")

    def test_quotient(self):
        assert differentiate(P("x'/x"), "t", {"x"}) == P("x''/x - x'^2/x^2")

    def test_prime_orders_stack(self):
        assert differentiate(Deriv("x", 2), "t", {"x"}) == Deriv("x", 3)


class TestPartialDerivative:
    def test_three_slots(self):
        f = P("t*u^2 - v")
        assert partial_derivative(f, "t") == P("u^2")
        assert partial_derivative(f, "u") == P("2*t*u")
        assert partial_derivative(f, "v") == P("-1")

    def test_other_vars_constant(self):
        assert partial_derivative(P("a*u + b"), "u") == Var("a")


_polyish = st.one_of(
    st.sampled_from([P("x"), P("t"), P("x^2"), P("t*x"), P("x + 2"),
                     P("1/x"), P("sin(x)"), P("exp(t)"), P("x*x'")]),
    st.fractions(min_value=-3, max_value=3, max_denominator=4).map(
        lambda q: P(str(q))),
)


@settings(max_examples=150, deadline=None)
@given(_polyish, _polyish)
def test_product_rule(e1, e2):
    d = total_derivative(make_prod([e1, e2]), {"x"})
    expected = make_sum([
        make_prod([total_derivative(e1, {"x"}), e2]),
        make_prod([e1, total_derivative(e2, {"x"})]),
    ])
    assert d == expected


@settings(max_examples=150, deadline=None)
@given(_polyish, _polyish)
def test_linearity(e1, e2):
    d = total_derivative(make_sum([e1, make_prod([P("3"), e2])]), {"x"})
    expected = make_sum([
        total_derivative(e1, {"x"}),
        make_prod([P("3"), total_derivative(e2, {"x"})]),
    ])
    assert d == expected


FD_CASES = [
    "u^3 - 2*u",
    "1/u",
    "sin(u)",
    "exp(u)",
    "u^2*sin(u)",
    "cos(2*u)/u",
    "(u + 1)/(u - 1)",
]


def test_derivative_matches_finite_differences():
    """Central differences at step 1e-5 agree within 1e-6 relative."""
    rng = random.Random(3)
    step = 1e-5
    for shape in FD_CASES:
        e = P(shape)
        de = partial_derivative(e, "u")
        checked = 0
        while checked < 50:
            u0 = rng.uniform(-3.0, 3.0)
            if abs(u0) < 0.2 or abs(u0 - 1.0) < 0.2:
                continue
            try:
                hi = eval_numeric(e, {"u": u0 + step})
                lo = eval_numeric(e, {"u": u0 - step})
                sym = eval_numeric(de, {"u": u0})
            except DivisionByZero:
                continue
            fd = (hi - lo) / (2 * step)
            scale = max(1.0, abs(sym))
            assert abs(fd - sym) / scale < 1e-6, (shape, u0, fd, sym)
            checked += 1


def test_missing_derivative_at_eval():
    reg = FnRegistry()
    reg.declare("rho")
    d = differentiate(P("rho(x)", reg), "t", {"x"}, reg)

    def deriv(name, order):
        return 1.0

    with pytest.raises(MissingDerivative):
        eval_expr(d, {"x": 1.0}, 0.0, reg, deriv=deriv)
