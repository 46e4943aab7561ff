"""Single-variable isolation and its round-trip property."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from foldeq.errors import DivisionByZero, NotIsolatable
from foldeq.expr import (
    FnRegistry,
    Seq,
    Var,
    eval_expr,
    free_var_names,
    substitute,
)
from foldeq.parser import parse_expr
from foldeq.solve import solve_for


def P(text, reg=None):
    return parse_expr(text, reg)


W = Var("w")


def conds(S):
    return sorted(str(c) for c in S)


class TestExamples:
    def test_affine_product(self):
        h, S = solve_for(W, P("a + u*v"), "v")
        assert h == P("(w - a)/u")
        assert conds(S) == ["u != 0"]

    def test_reciprocal(self):
        h, S = solve_for(W, P("u/v"), "v")
        assert h == P("u/w")
        assert conds(S) == ["w != 0"]

    def test_additive(self):
        h, S = solve_for(W, P("u - v"), "v")
        assert h == P("u - w")
        assert conds(S) == []

    def test_cubic_refused(self):
        with pytest.raises(NotIsolatable):
            solve_for(W, P("v + v^3"), "v")

    def test_affine_with_symbolic_slope(self):
        reg = FnRegistry()
        reg.declare("psi")
        h, S = solve_for(W, P("a*v + psi(u)*v + u", reg), "v", reg)
        assert h == P("(w - u)/(a + psi(u))", reg)
        assert conds(S) == ["a + psi(u) != 0"]

    def test_declared_inverse_peeling(self):
        reg = FnRegistry()
        reg.declare("psi", inverse="psi_inv")
        h, S = solve_for(W, P("u + psi(2*v)", reg), "v", reg)
        assert h == P("psi_inv(w - u)/2", reg)
        assert conds(S) == []

    def test_no_inverse_refused(self):
        reg = FnRegistry()
        reg.declare("psi")
        with pytest.raises(NotIsolatable):
            solve_for(W, P("u + psi(v)", reg), "v", reg)

    def test_sequence_target(self):
        h, S = solve_for(Seq("s", 1), P("x[n]*y[n]"), Seq("y", 0))
        assert h == P("s[n+1]/x[n]")
        assert conds(S) == ["x[n] != 0"]

    def test_alternating_affine(self):
        h, S = solve_for(W, P("sgn_n*u + v"), "v")
        assert h == P("w - sgn_n*u")
        assert conds(S) == []


RHS_SHAPES = [
    "a + u*v",
    "u/v",
    "u - v",
    "a*v + b",
    "(a + b*u)*v - u",
    "u*v/(a + b)",
    "a/(b + v)",
    "u + 1/v",
    "a*v + u*v + b",
]


def test_solve_roundtrip_numeric():
    """Substituting the inversion back reproduces w at random rational
    points satisfying the side conditions (exact arithmetic)."""
    rng = random.Random(7)
    checked = 0
    for shape in RHS_SHAPES:
        rhs = P(shape)
        h, S = solve_for(W, rhs, "v")
        names = (free_var_names(rhs) | free_var_names(h)) - {"v"}
        trials = 0
        while trials < 200 // len(RHS_SHAPES) + 5:
            env = {
                name: Fraction(rng.randint(-9, 9), rng.randint(1, 9))
                for name in names | {"w"}
            }
            try:
                if any(eval_expr(c.expr, env) == 0 for c in S):
                    continue
                v_val = eval_expr(h, env)
                env_v = dict(env)
                env_v["v"] = v_val
                w_val = eval_expr(rhs, env_v)
            except DivisionByZero:
                continue
            assert w_val == env["w"], (shape, env)
            trials += 1
            checked += 1
    assert checked >= 150


def test_solve_roundtrip_symbolic():
    for shape in RHS_SHAPES:
        rhs = P(shape)
        h, _ = solve_for(W, rhs, "v")
        back = substitute(rhs, {"v": h})
        assert back == W, f"{shape}: got {back}"
