"""Shared example systems used across the suite.

These are the worked examples everything is verified against; each
builder returns a fresh system so tests can substitute parameters
without interfering.
"""

from __future__ import annotations

from fractions import Fraction

import pytest

from foldeq import FnRegistry, make_system
from foldeq.parser import parse_expr


def P(text, registry=None):
    return parse_expr(text, registry)


def bs1_system(a=Fraction(1), b=Fraction(1)):
    """x+ = x*y, y+ = (a + b*x)/y."""
    return make_system(
        ["x", "y"],
        [P("x*y"), P("(a + b*x)/y")],
        params={"a": a, "b": b},
    )


def nas_system():
    """x+ = (-1)^n x + y, y+ = psi(x) + (-1)^n y with psi(u) = u^2."""
    reg = FnRegistry()
    reg.declare("psi", defn=P("u^2"))
    return make_system(
        ["x", "y"],
        [P("sgn_n*x + y"), P("psi(x) + sgn_n*y", reg)],
        registry=reg,
    )


def i3es_system(values=None):
    """Three coupled equations with an opaque nonlinearity rho."""
    reg = FnRegistry()
    reg.declare("rho", defn=P("u^2"))
    sysm = make_system(
        ["x1", "x2", "x3"],
        [P("a*x2 + x3"), P("b*x1 + c*x3", reg), P("rho(x1) + d*x2", reg)],
        params={"a": None, "b": None, "c": None, "d": None},
        registry=reg,
    )
    if values:
        sysm = sysm.substitute_params(values)
    return sysm


def sp3_system(values=None, f_def="u^2", g_def="u + 1"):
    """Triangular system folding without inversions."""
    reg = FnRegistry()
    reg.declare("f", defn=P(f_def))
    reg.declare("g", defn=P(g_def))
    sysm = make_system(
        ["x1", "x2", "x3"],
        [P("f(a*x2 + b*x3)", reg), P("c*x1 + g(x3)", reg), P("alpha*x1 + beta")],
        params={"a": None, "b": None, "c": None, "alpha": None, "beta": None},
        registry=reg,
    )
    if values:
        sysm = sysm.substitute_params(values)
    return sysm


def des1_system(a=Fraction(1)):
    """x' = t x^2 - y, y' = a x + x^2 + 2 t^2 x^3 - 2 t x y."""
    return make_system(
        ["x", "y"],
        [P("t*x^2 - y"), P("a*x + x^2 + 2*t^2*x^3 - 2*t*x*y")],
        kind="ode",
        params={"a": a},
    )


def volterra_paper_system(**params):
    """The literal form from the source: x' = x(a-by), y' = y(c-dx)."""
    vals = {k: Fraction(v) for k, v in
            {"a": 1, "b": 1, "c": 1, "d": 1, **params}.items()}
    return make_system(
        ["x", "y"],
        [P("x*(a - b*y)"), P("y*(c - d*x)")],
        kind="ode",
        params=vals,
    )


def volterra_classic_system(**params):
    """Predator-prey orientation: x' = x(a-by), y' = y(dx-c)."""
    vals = {k: Fraction(v) for k, v in
            {"a": 1, "b": 1, "c": 1, "d": 1, **params}.items()}
    return make_system(
        ["x", "y"],
        [P("x*(a - b*y)"), P("y*(d*x - c)")],
        kind="ode",
        params=vals,
    )


def des3e_system(values=None, concrete=False):
    """Differential analog of the 3-equation example.

    With concrete=True rho is given the definition u^2 so trajectories
    can be evaluated; otherwise it stays opaque and the fold keeps a
    symbolic rho'.
    """
    reg = FnRegistry()
    if concrete:
        reg.declare("rho", defn=P("u^2"))
    else:
        reg.declare("rho")
    sysm = make_system(
        ["x1", "x2", "x3"],
        [P("a*x2 + x3"), P("b*x1 + c*x3"), P("rho(x1) + d*x2", reg)],
        kind="ode",
        params={"a": None, "b": None, "c": None, "d": None},
        registry=reg,
    )
    if values:
        sysm = sysm.substitute_params(values)
    return sysm


@pytest.fixture
def bs1():
    return bs1_system()


@pytest.fixture
def nas():
    return nas_system()
