"""Differential foldings and the RK4 flow oracle."""

from __future__ import annotations

import math
from fractions import Fraction

import pytest

from conftest import (
    P,
    des1_system,
    des3e_system,
    volterra_classic_system,
    volterra_paper_system,
)
from foldeq.errors import ExprError, NotFoldable
from foldeq.expr import FnRegistry
from foldeq.odefold import (
    fold_ode,
    fold_ode_2d,
    folding_initial_state,
    integrate_rk4,
    recover_ode_components,
)
from foldeq.systems import make_system
from foldeq.verify import verify_ode_folding

F = Fraction


class TestFoldOde2d:
    def test_des1_collapses_to_linear(self):
        folding = fold_ode_2d(des1_system())
        assert folding.equation.rhs == P("-a*x")
        (p,) = folding.passive
        assert p.expr == P("t*x^2 - x'")
        assert [str(e) for e in folding.init_map] == ["x", "t*x^2 - y"]

    def test_volterra_literal_system(self):
        # the derivation x'' = a x' - b x' y - b x y' with by = a - x'/x
        # lands on (x')^2/x + (x' - a x)(c - d x)
        folding = fold_ode_2d(volterra_paper_system())
        assert folding.equation.rhs == P("x'^2/x + (x' - a*x)*(c - d*x)")
        assert any(str(c) == "x != 0" for c in folding.side_conditions)

    def test_volterra_classic_orientation(self):
        folding = fold_ode_2d(volterra_classic_system())
        assert folding.equation.rhs == P("x'^2/x + (a*x - x')*(c - d*x)")

    def test_standard_unfolding_roundtrip(self):
        reg = FnRegistry()
        sysm = make_system(["x", "y"], [P("y"), P("x^3 + t*y")], kind="ode",
                           registry=reg)
        folding = fold_ode_2d(sysm)
        assert folding.equation.rhs == P("x^3 + t*x'")

    def test_wrong_arity(self):
        with pytest.raises(ExprError):
            fold_ode_2d(des3e_system())


class TestFoldOdeDeep:
    def test_des3e_symbolic_jerk(self):
        sysm = des3e_system()
        folding = fold_ode(sysm, "x1")
        reg = sysm.registry
        want = P("(rho'(x1) + a*b + c*d)*x1' + a*c*rho(x1) + b*d*x1", reg)
        assert folding.equation.rhs == want
        assert folding.kappa == 3
        # the intermediate isolation needs d != a^2 c
        assert {str(c) for c in folding.side_conditions} == \
            {"d - a^2*c != 0"}
        assert [p.var for p in folding.passive] == ["x2", "x3"]
        x2 = folding.passive[0].expr
        assert x2 == P(
            "(x1'' - a*b*x1 - a*c*x1' - rho(x1))/(d - a^2*c)", reg)
        assert folding.passive[1].expr == P("x1' - a*x2")

    def test_des3e_degenerate_kappa2(self):
        sysm = des3e_system({"a": F(2), "b": F(3), "c": F(1), "d": F(4)},
                            concrete=True)
        folding = fold_ode(sysm, "x1")
        assert folding.kappa == 2
        aux = folding.passive[0]
        assert aux.kind == "auxiliary"
        assert aux.expr == P("-2*x2 + 3*x1 + x1'")

    def test_fa_shape_with_invertible_component(self):
        reg = FnRegistry()
        reg.declare("eta")
        reg.declare("zeta", inverse="zeta_inv")
        reg.declare("rho")
        sysm = make_system(
            ["x1", "x2", "x3"],
            [P("eta(x1) + zeta(x3)", reg), P("x1 + 2*x2 + x3", reg),
             P("rho(x1) + a*x2", reg)],
            kind="ode",
            params={"a": None},
            registry=reg,
        )
        folding = fold_ode(sysm, "x1")
        # level 1 inverts zeta: x3 = zeta_inv(x1' - eta(x1))
        x3 = [p for p in folding.passive if p.var == "x3"][0]
        assert x3.expr == P("zeta_inv(x1' - eta(x1))", reg)
        assert folding.kappa == 3

    def test_depth_cap(self):
        names = ["x1", "x2", "x3", "x4"]
        rhs = [P("x2"), P("x3"), P("x4"), P("x1")]
        sysm = make_system(names, rhs, kind="ode")
        with pytest.raises(ExprError):
            fold_ode(sysm, "x1")


class TestRk4:
    def test_exponential_decay(self):
        sysm = make_system(["x"], [P("-x")], kind="ode")
        traj = integrate_rk4(sysm, [1.0], 0.0, 0.1, 10)
        assert traj.status == "completed"
        assert traj.states[-1][0] == pytest.approx(math.exp(-1.0), abs=1e-5)

    def test_harmonic_quarter_period(self):
        sysm = make_system(["x", "y"], [P("y"), P("-x")], kind="ode")
        folding = fold_ode_2d(sysm)
        assert folding.equation.rhs == P("-x")
        n = int(round((math.pi / 2) / 0.01))
        h = (math.pi / 2) / n
        traj = integrate_rk4(folding, [0.0, 1.0], 0.0, h, n)
        assert traj.states[-1][0] == pytest.approx(1.0, abs=1e-6)

    def test_order_four_halving(self):
        sysm = make_system(["x"], [P("-x")], kind="ode")

        def err(h, n):
            traj = integrate_rk4(sysm, [1.0], 0.0, h, n)
            return max(abs(s[0] - math.exp(-t))
                       for t, s in zip(traj.grid, traj.states))

        e1 = err(0.1, 10)
        e2 = err(0.05, 20)
        assert e1 / e2 >= 12.0

    def test_singular_halt_and_crossing(self):
        sysm = make_system(["x", "y"], [P("x*(a - b*y)"), P("y*(c - d*x)")],
                           kind="ode",
                           params={k: F(1) for k in "abcd"})
        folding = fold_ode_2d(sysm)
        start = folding_initial_state(folding, sysm, [1.0, 2.0], 0.0)
        traj = integrate_rk4(folding, start, 0.0, 1e-3, 5000)
        # the literal orientation sends x to 0 exponentially: the folded
        # trajectory must halt on the x != 0 side condition
        assert traj.status == "singular"
        assert str(traj.condition) == "x != 0"


class TestFlowEquivalence:
    @pytest.mark.parametrize("a", [F(-1), F(0), F(1)])
    def test_des1_system_vs_equation(self, a):
        sysm = des1_system(a)
        folding = fold_ode_2d(sysm)
        h, n = 1e-3, 2000
        init = [0.4, 0.1]
        ts = integrate_rk4(sysm, init, 0.0, h, n)
        te = integrate_rk4(folding,
                           folding_initial_state(folding, sysm, init, 0.0),
                           0.0, h, n)
        assert ts.status == te.status == "completed"
        dev = max(abs(u[0] - v[0]) for u, v in zip(ts.states, te.states))
        assert dev < 1e-6
        series, sing, _ = recover_ode_components(folding, sysm, te)
        assert sing is None
        devy = max(abs(u[1] - v) for u, v in zip(ts.states, series["y"]))
        assert devy < 1e-5

    def test_des3e_rational_parameters(self):
        vals = {"a": F(1, 2), "b": F(1), "c": F(1, 3), "d": F(1)}
        assert vals["d"] != vals["a"] ** 2 * vals["c"]
        sysm = des3e_system(vals, concrete=True)
        folding = fold_ode(sysm, "x1")
        rep = verify_ode_folding(sysm, folding, (0.0, 1.0), 1e-3,
                                 inits=[[0.5, 0.25, -0.5], [0.2, 0.1, 0.3]],
                                 tol=1e-5)
        assert rep.status == "Pass"
        assert rep.max_abs_dev < 1e-5

    def test_volterra_positive_quadrant(self):
        sysm = volterra_classic_system()
        folding = fold_ode_2d(sysm)
        rep = verify_ode_folding(sysm, folding, (0.0, 5.0), 1e-3,
                                 inits=[[1.0, 2.0]], tol=1e-5)
        assert rep.status == "Pass"
        assert rep.singular_events == []
        assert rep.max_abs_dev < 1e-5

    def test_residual_scales_like_h_squared(self):
        sysm = volterra_classic_system()
        folding = fold_ode_2d(sysm)
        from foldeq.expr import eval_expr

        penv = {k: float(v) for k, v in sysm.params.items()}

        def residual(h, n):
            traj = integrate_rk4(sysm, [1.0, 2.0], 0.0, h, n)
            xs = [s[0] for s in traj.states]
            worst = 0.0
            for m in range(1, len(xs) - 1):
                x2 = (xs[m + 1] - 2 * xs[m] + xs[m - 1]) / h**2
                x1 = (xs[m + 1] - xs[m - 1]) / (2 * h)
                env = dict(penv, x=xs[m])
                rhs = eval_expr(folding.equation.rhs, env,
                                traj.grid[m], sysm.registry,
                                deriv=lambda n_, o: x1)
                worst = max(worst, abs(x2 - rhs))
            return worst

        r1 = residual(2e-2, 100)
        r2 = residual(1e-2, 200)
        assert r1 / r2 > 3.0  # second order: halving h quarters the residual
