"""The inverse problem: build the second system component from a target.

Given a semi-invertible first component f and a prescribed scalar
equation right-hand side phi, construct g so that the assembled system
folds back to phi.  Difference case:

    g(n, u, v) = h(n+1, f(n, u, v), phi(n, u, f(n, u, v)))

where h is the partial inversion of f.  Differential case:

    g(t, u, v) = [phi(t, u, f) - f f_u - f_t] / f_v.

The corollary modes reuse the same construction with phi composed at u
(cdn), at f (o1) or linear (lin).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .calculus import partial_derivative
from .errors import ZeroPartial
from .expr import (
    Expr,
    FnRegistry,
    RAT_0,
    SideCondition,
    Var,
    free_var_names,
    make_pow,
    make_prod,
    make_sum,
    rat,
    shift_index,
    side_conditions_of,
    substitute,
)
from .solve import solve_for
from .systems import DiffSystem, OdeSystem, make_system

MODES = ("general", "cdn", "o1", "lin")


@dataclass
class Unfolding:
    """Result of an inverse construction."""

    f: Expr
    g: Expr
    h: Optional[Expr]  # partial inversion of f (difference case)
    mode: str
    kind: str  # "difference" | "ode"
    side_conditions: frozenset[SideCondition]


def unfold_difference(
    f: Expr,
    phi: Expr,
    mode: str = "general",
    registry: Optional[FnRegistry] = None,
) -> Unfolding:
    """Second component g for the system {x+ = f, y+ = g} folding to phi.

    f is an expression in (n, u, v); phi in (n, u, w) for the general and
    lin modes, in (n, u) for cdn and in (n, w) for o1.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    h, conds = solve_for(Var("w"), f, "v", registry)
    h_next = shift_index(h, 1)
    if mode == "cdn":
        w_arg = phi
    else:
        w_arg = substitute(phi, {"w": f})
    g = substitute(h_next, {"u": f, "w": w_arg})
    all_conds = set(conds) | side_conditions_of(g, registry)
    return Unfolding(f, g, h, mode, "difference", frozenset(all_conds))


def unfold_ode(
    f: Expr,
    phi: Expr,
    registry: Optional[FnRegistry] = None,
) -> Unfolding:
    """Second component for the differential system {x' = f, y' = g}.

    Requires f_v not identically zero; its zero set is recorded as a
    side condition.
    """
    f_v = partial_derivative(f, "v", registry)
    if f_v == RAT_0:
        raise ZeroPartial("f has no dependence on v")
    f_u = partial_derivative(f, "u", registry)
    f_t = partial_derivative(f, "t", registry)
    phi_at_f = substitute(phi, {"w": f})
    num = make_sum([
        phi_at_f,
        make_prod([rat(-1), f, f_u]),
        make_prod([rat(-1), f_t]),
    ])
    g = make_prod([num, make_pow(f_v, -1)])
    conds = {SideCondition(f_v)} | side_conditions_of(g, registry)
    return Unfolding(f, g, None, "general", "ode", frozenset(conds))


def assemble_system(
    unf: Unfolding,
    registry: Optional[FnRegistry] = None,
    params=None,
) -> DiffSystem | OdeSystem:
    """The two-variable system whose folding is the prescribed equation."""
    binds = {"u": Var("x"), "v": Var("y")}
    rhs1 = substitute(unf.f, binds)
    rhs2 = substitute(unf.g, binds)
    names = free_var_names(rhs1) | free_var_names(rhs2)
    declared = dict(params or {})
    for name in sorted(names - {"x", "y"}):
        declared.setdefault(name, None)
    kind = "ode" if unf.kind == "ode" else "recursive"
    extra = {
        SideCondition(substitute(c.expr, binds), c.relation)
        for c in unf.side_conditions
        if not (free_var_names(c.expr) & {"w"})
    }
    return make_system(["x", "y"], [rhs1, rhs2], kind, declared,
                       extra_guards=extra, registry=registry or FnRegistry())
