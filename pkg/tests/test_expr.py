"""Expression kernel: canonicalization, parsing, printing, evaluation."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foldeq.errors import (
    DivisionByZero,
    ExprSyntaxError,
    UnboundVariable,
    UnknownSymbol,
)
from foldeq.expr import (
    ALT,
    Deriv,
    Expr,
    FnApp,
    FnRegistry,
    Index,
    PI,
    Pow,
    Prod,
    Rat,
    Seq,
    Sum,
    Var,
    canonicalize,
    eval_numeric,
    make_pow,
    make_prod,
    make_sum,
    rat,
    shift_index,
    substitute,
    to_text,
)
from foldeq.parser import parse_expr


def P(text, reg=None):
    return parse_expr(text, reg)


class TestParsing:
    def test_product(self):
        assert P("x*y") == make_prod([Var("x"), Var("y")])

    def test_rational_layers(self):
        # (a + b*x)/y keeps y as a denominator factor of every term
        e = P("(a + b*x)/y")
        assert e == make_sum([
            make_prod([Var("a"), make_pow(Var("y"), -1)]),
            make_prod([Var("b"), Var("x"), make_pow(Var("y"), -1)]),
        ])

    def test_trig_coefficient(self):
        e = P("2*cos(2*pi*n/3)")
        assert isinstance(e, Prod)
        assert e.coeff == 2
        (base, exp), = e.factors
        assert exp == 1 and isinstance(base, FnApp) and base.fname == "cos"

    def test_seq_and_deriv_atoms(self):
        assert P("s[n+2]") == Seq("s", 2)
        assert P("s[n]") == Seq("s", 0)
        assert P("x2[n-1]") == Seq("x2", -1)
        assert P("x''") == Deriv("x", 2)

    def test_unknown_symbol(self):
        with pytest.raises(UnknownSymbol):
            P("psi(x)")
        reg = FnRegistry()
        reg.declare("psi")
        assert isinstance(P("psi(x)", reg), FnApp)

    def test_syntax_error_offset(self):
        with pytest.raises(ExprSyntaxError) as err:
            P("x + ")
        assert err.value.pos == 4

    def test_numbers(self):
        assert P("5/10") == Rat(Fraction(1, 2))
        assert P("-3") == Rat(Fraction(-3))


class TestCanonicalization:
    def test_cancellation_of_like_monomials(self):
        assert P("a*c*d*x - a*c*d*x + b*d*x") == P("b*d*x")

    def test_additive_identity(self):
        assert P("x + 0") == Var("x")

    def test_alternating_sign_squared(self):
        assert P("sgn_n*sgn_n") == Rat(Fraction(1))
        assert make_pow(ALT, -1) == ALT

    def test_power_merge_through_division(self):
        assert P("x^3/x^2") == Var("x")
        assert P("x/x") == Rat(Fraction(1))

    def test_sum_expansion(self):
        assert P("(a+b)*(a-b)") == P("a^2 - b^2")
        assert P("(a+b)^2") == P("a^2 + 2*a*b + b^2")

    def test_shared_sum_denominator_division(self):
        # d*x/(d - a^2*c) - a^2*c*x/(d - a^2*c) collapses to x
        e = P("d*x/(d - a^2*c) - a^2*c*x/(d - a^2*c)")
        assert e == Var("x")

    def test_denominator_clearing_in_reciprocal_sums(self):
        assert P("(u/v)/(a*u/v + b)") == P("u/(a*u + b*v)")

    def test_negative_base_normalization(self):
        assert P("1/(-x - y)") == P("-1/(x + y)")
        assert P("(2*a + 2*b)^-1") == P("1/2 * 1/(a+b)")


# random raw trees for idempotence / print-parse round trips
_names = st.sampled_from(["x", "y", "a", "b", "u", "v"])
_atoms = st.one_of(
    st.integers(-4, 4).map(lambda v: Rat(Fraction(v))),
    st.fractions(min_value=-4, max_value=4, max_denominator=6).map(Rat),
    _names.map(Var),
    st.just(Index("n")),
    st.just(ALT),
    st.sampled_from([Seq("s", 0), Seq("s", 1), Seq("s", 2)]),
    st.just(PI),
)


def _exprs(depth: int):
    if depth == 0:
        return _atoms
    sub = _exprs(depth - 1)
    return st.one_of(
        _atoms,
        st.lists(sub, min_size=2, max_size=3).map(make_sum),
        st.lists(sub, min_size=2, max_size=3).map(make_prod),
        st.tuples(sub, st.sampled_from([-2, -1, 2, 3])).map(
            lambda be: _safe_pow(*be)),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), sub).map(
            lambda fa: FnApp(fa[0], fa[1])),
    )


def _safe_pow(base, exp):
    try:
        return make_pow(base, exp)
    except DivisionByZero:
        return base


random_exprs = _exprs(3)


@settings(max_examples=300, deadline=None)
@given(random_exprs)
def test_canonicalize_idempotent(e):
    c = canonicalize(e)
    assert canonicalize(c) == c


@settings(max_examples=300, deadline=None)
@given(random_exprs)
def test_print_parse_roundtrip(e):
    c = canonicalize(e)
    again = parse_expr(to_text(c))
    assert again == c, f"{to_text(c)} reparsed as {to_text(again)}"


class TestSubstitution:
    def test_ratio_substitution(self):
        e = substitute(P("x*y"), {"y": P("s1/s0")})
        assert e == P("x*s1/s0")

    def test_empty_binding(self):
        assert substitute(Var("x"), {}) == Var("x")

    def test_eval_at_zero(self):
        assert substitute(P("a + b*x"), {"x": rat(0)}) == Var("a")

    def test_simultaneous(self):
        e = substitute(P("u + v"), {"u": Var("v"), "v": Var("u")})
        assert e == P("u + v")


class TestShift:
    def test_alternating_shift(self):
        e = P("sgn_n*u[n] + v[n]")
        assert shift_index(e, 1) == P("-sgn_n*u[n+1] + v[n+1]")

    def test_identity_shift(self):
        e = P("n*x[n]^2 + sgn_n")
        assert shift_index(e, 0) is e

    def test_literal_index(self):
        assert shift_index(P("n*x[n]^2"), 1) == P("(n+1)*x[n+1]^2")

    def test_shift_composes(self):
        e = P("sgn_n*s[n] + n")
        assert shift_index(shift_index(e, 1), -1) == e
        assert shift_index(e, 2) == P("sgn_n*s[n+2] + n + 2")


class TestEval:
    def test_direct(self):
        assert eval_numeric(P("x*y"), {"x": 1, "y": 2}) == 2
        assert isinstance(eval_numeric(P("x*y"), {"x": 1, "y": 2}), Fraction)

    def test_cosine_coefficient_period3(self):
        # checked against the period-3 list (-1, -1, 2) starting at n=1
        vals = [eval_numeric(P("2*cos(2*pi*n/3)"), {}, n) for n in (0, 1, 2, 3)]
        assert vals[0] == pytest.approx(2.0, abs=1e-12)
        assert vals[1] == pytest.approx(-1.0, abs=1e-12)
        assert vals[2] == pytest.approx(-1.0, abs=1e-12)
        assert vals[3] == pytest.approx(2.0, abs=1e-12)

    def test_division_by_zero(self):
        with pytest.raises(DivisionByZero):
            eval_numeric(P("1/x"), {"x": 0})

    def test_unbound(self):
        with pytest.raises(UnboundVariable):
            eval_numeric(P("x + y"), {"x": 1})

    def test_alternating(self):
        assert eval_numeric(ALT, {}, 4) == 1
        assert eval_numeric(ALT, {}, 7) == -1

    def test_float_contagion(self):
        v = eval_numeric(P("x + 1/2"), {"x": 0.25})
        assert isinstance(v, float) and v == 0.75

    def test_fn_definition(self):
        reg = FnRegistry()
        reg.declare("psi", defn=P("u^2"))
        assert eval_numeric(P("psi(x)", reg), {"x": Fraction(3)},
                            registry=reg) == 9
