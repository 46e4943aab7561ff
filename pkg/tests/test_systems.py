"""Orbit iteration, equation iteration, recovery, spec files."""

from __future__ import annotations

from fractions import Fraction

import pytest

from conftest import P, bs1_system, i3es_system
from foldeq.errors import SystemFileError
from foldeq.expr import FnRegistry
from foldeq.folding import fold
from foldeq.sysfile import emit_system_file, parse_system_file
from foldeq.systems import (
    DiffSystem,
    HigherOrderEq,
    OdeSystem,
    eval_init_map,
    iterate_equation,
    iterate_orbit,
    make_system,
    recover_components,
)

F = Fraction


class TestOrbits:
    def test_bs1_hand_iteration(self, bs1):
        # hand-iterated oracle: x+ = x*y, y+ = (1+x)/y from (1,2)
        orbit = iterate_orbit(bs1, [1, 2], 4)
        assert orbit.status == "completed"
        assert orbit.component(0) == [1, 2, 2, 6, 6]
        assert orbit.component(1) == [2, 1, 3, 1, 7]

    def test_guard_violation_at_start(self, bs1):
        orbit = iterate_orbit(bs1, [1, 0], 5)
        assert orbit.status == "singular"
        assert orbit.singular_step == 0
        assert orbit.states == []

    def test_fixed_point(self):
        sysm = make_system(["x"], [P("x")])
        orbit = iterate_orbit(sysm, [5], 6)
        assert orbit.component(0) == [5] * 7

    def test_delta_equals_recursive_rewrite(self):
        delta = make_system(["x", "y"], [P("y - x"), P("x*y")], kind="delta")
        rec = delta.to_recursive()
        o1 = iterate_orbit(delta, [F(1, 2), F(1, 3)], 8)
        o2 = iterate_orbit(rec, [F(1, 2), F(1, 3)], 8)
        assert o1.states == o2.states

    def test_uncoupled_diagonal_componentwise(self):
        sysm = make_system(["x", "y"], [P("x^2"), P("3*y")])
        orbit = iterate_orbit(sysm, [F(1, 2), F(2)], 5)
        x, y = F(1, 2), F(2)
        for m in range(6):
            assert orbit.states[m] == (x, y)
            x, y = x * x, 3 * y

    def test_float_mode_threshold(self, bs1):
        orbit = iterate_orbit(bs1, [1.0, 1e-13], 5, mode="float")
        assert orbit.status == "singular" and orbit.singular_step == 0


class TestEquationIteration:
    def test_be1_values(self):
        eq = HigherOrderEq(2, P("s[n]*(1 + s[n])"), "difference")
        sol = iterate_equation(eq, [1, 2], 4)
        assert sol.values == [1, 2, 2, 6, 6, 42]

    def test_identity_psi_zeroes(self):
        reg = FnRegistry()
        reg.declare("psi", defn=P("u"))
        eq = HigherOrderEq(2, P("psi(s[n]) - s[n]", reg), "difference",
                           registry=reg)
        sol = iterate_equation(eq, [1, 4], 4)
        assert sol.values == [1, 4, 0, 0, 0, 0]

    def test_order_one_constant(self):
        eq = HigherOrderEq(1, P("s[n]"), "difference")
        sol = iterate_equation(eq, [F(7, 3)], 5)
        assert sol.values == [F(7, 3)] * 6

    def test_singular_stop(self):
        eq = HigherOrderEq(1, P("1/s[n]"), "difference")
        sol = iterate_equation(eq, [0], 3)
        assert sol.status == "singular" and sol.singular_step == 0


class TestRecovery:
    def test_bs1_passive_ratio(self, bs1):
        folding, _ = fold(bs1, "x")
        rec = recover_components(folding, [F(1), F(2), F(2), F(6)], bs1,
                                 init=[F(1), F(2)])
        assert [s[1] for s in rec.states] == [2, 1, 3]

    def test_zero_pivot_is_singular(self, bs1):
        folding, _ = fold(bs1, "x")
        rec = recover_components(folding, [F(1), F(0), F(3), F(5)], bs1,
                                 init=[F(1), F(0)])
        assert rec.status == "singular"
        assert rec.singular_step == 1

    def test_k1_orbit_is_the_sequence(self):
        sysm = make_system(["x"], [P("x^2 - 1")])
        folding, _ = fold(sysm, "x")
        assert folding.passive == ()
        seq = [F(2), F(3), F(8)]
        rec = recover_components(folding, seq, sysm, init=[F(2)])
        assert [s[0] for s in rec.states] == seq

    def test_auxiliary_recovery_matches_orbit(self):
        sysm = i3es_system({"a": F(2), "b": F(3), "c": F(1), "d": F(4)})
        folding, _ = fold(sysm, "x1")
        assert any(p.kind == "auxiliary" for p in folding.passive)
        init = [F(1), F(1, 2), F(-1)]
        orbit = iterate_orbit(sysm, init, 8)
        s0 = eval_init_map(folding, sysm, init)
        sol = iterate_equation(folding.equation, s0, 9)
        rec = recover_components(folding, sol.values, sysm, init=init)
        assert rec.states[: len(orbit.states)] == orbit.states


SPEC_TEXT = """
# sample
kind: difference
vars: x y
param a = 1/2
param b
fn psi inverse=psi_inv deriv=2*u def=u^2
eq x = x*y
eq y = (a + b*x)/y + psi(x)
guard x != 0
"""


class TestSpecFiles:
    def test_parse_fields(self):
        sysm = parse_system_file(SPEC_TEXT)
        assert isinstance(sysm, DiffSystem)
        assert sysm.vars == ("x", "y")
        assert sysm.params == {"a": F(1, 2), "b": None}
        assert sysm.registry.inverse_of("psi") == "psi_inv"
        conds = {str(c) for c in sysm.guards}
        assert "y != 0" in conds and "x != 0" in conds

    def test_emit_roundtrip(self):
        sysm = parse_system_file(SPEC_TEXT)
        text = emit_system_file(sysm)
        again = parse_system_file(text)
        assert again.vars == sysm.vars
        assert again.rhs == sysm.rhs
        assert again.params == sysm.params
        assert set(again.guards) == set(sysm.guards)

    def test_ode_kind(self):
        sysm = parse_system_file("kind: ode\nvars: x\neq x = -x\n")
        assert isinstance(sysm, OdeSystem)

    def test_error_carries_line(self):
        bad = "kind: difference\nvars: x\neq x = x +\n"
        with pytest.raises(SystemFileError) as err:
            parse_system_file(bad)
        assert "line 3" in str(err.value)

    def test_missing_equation(self):
        with pytest.raises(SystemFileError):
            parse_system_file("kind: difference\nvars: x y\neq x = y\n")

    def test_unknown_line(self):
        with pytest.raises(SystemFileError):
            parse_system_file("kind: difference\nvars: x\nbogus line\n")
