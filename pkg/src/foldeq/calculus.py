"""Total and partial differentiation with chain rule on opaque symbols.

The total derivative treats each dependent variable x as x(t) and
introduces primed atoms; opaque function symbols without a declared
derivative produce primed applications like rho'(x), which is how
derived equations keep such symbols abstract.
"""

from __future__ import annotations

from typing import Iterable, Optional

from .errors import ExprError
from .expr import (
    AltSign,
    Deriv,
    Expr,
    FnApp,
    FnRegistry,
    Index,
    Pi,
    Pow,
    Prod,
    RAT_0,
    RAT_1,
    Rat,
    Seq,
    Sum,
    Var,
    make_fnapp,
    make_pow,
    make_prod,
    make_sum,
    rat,
    substitute,
)


def _fn_chain(e: FnApp, darg: Expr, registry: Optional[FnRegistry]) -> Expr:
    if darg == RAT_0:
        return RAT_0
    if e.dorder == 0 and e.fname == "sin":
        outer: Expr = make_fnapp("cos", e.arg)
    elif e.dorder == 0 and e.fname == "cos":
        outer = make_prod([rat(-1), make_fnapp("sin", e.arg)])
    elif e.dorder == 0 and e.fname == "exp":
        outer = make_fnapp("exp", e.arg)
    else:
        sym = registry.get(e.fname) if registry else None
        if sym is not None and sym.deriv is not None:
            body = sym.deriv
            for _ in range(e.dorder):
                body = partial_derivative(body, sym.formal, registry)
            outer = substitute(body, {sym.formal: e.arg})
        elif sym is not None and sym.defn is not None:
            body = sym.defn
            for _ in range(e.dorder + 1):
                body = partial_derivative(body, sym.formal, registry)
            outer = substitute(body, {sym.formal: e.arg})
        else:
            outer = FnApp(e.fname, e.arg, e.dorder + 1)
    return make_prod([outer, darg])


def _derive(e: Expr, leaf, registry: Optional[FnRegistry]) -> Expr:
    t = type(e)
    if t in (Rat, Pi):
        return RAT_0
    if t in (Index, AltSign, Var, Seq, Deriv):
        return leaf(e)
    if t is FnApp:
        darg = _derive(e.arg, leaf, registry)
        return _fn_chain(e, darg, registry)
    if t is Pow:
        db = _derive(e.base, leaf, registry)
        if db == RAT_0:
            return RAT_0
        return make_prod([rat(e.exp), make_pow(e.base, e.exp - 1), db])
    if t is Prod:
        parts: list[Expr] = []
        for i, (b, ex) in enumerate(e.factors):
            db = _derive(b, leaf, registry)
            if db == RAT_0:
                continue
            rest = [make_pow(o, oe) for j, (o, oe) in enumerate(e.factors) if j != i]
            parts.append(
                make_prod([Rat(e.coeff), rat(ex), make_pow(b, ex - 1), db] + rest)
            )
        return make_sum(parts)
    if t is Sum:
        return make_sum([_derive(x, leaf, registry) for x in e.terms])
    raise TypeError(t)


def total_derivative(
    e: Expr,
    dependent: Iterable[str],
    registry: Optional[FnRegistry] = None,
) -> Expr:
    """d/dt of e, treating each name in `dependent` as a function of t."""
    dep = frozenset(dependent)

    def leaf(a: Expr) -> Expr:
        if isinstance(a, Index):
            if a.name == "t":
                return RAT_1
            raise ExprError("difference index n in a differential context")
        if isinstance(a, (AltSign, Seq)):
            raise ExprError(f"cannot differentiate {a} with respect to t")
        if isinstance(a, Var):
            return Deriv(a.name, 1) if a.name in dep else RAT_0
        if isinstance(a, Deriv):
            return Deriv(a.name, a.order + 1)
        raise TypeError(a)

    return _derive(e, leaf, registry)


def partial_derivative(
    e: Expr, name: str, registry: Optional[FnRegistry] = None
) -> Expr:
    """Partial derivative with respect to a single symbol.

    `name` may be an ordinary variable or the continuous index t; every
    other atom is held constant.
    """
    target: Expr = Index(name) if name in ("n", "t") else Var(name)

    def leaf(a: Expr) -> Expr:
        return RAT_1 if a == target else RAT_0

    return _derive(e, leaf, registry)


def differentiate(
    e: Expr,
    wrt: str = "t",
    dependent_vars: Iterable[str] = (),
    registry: Optional[FnRegistry] = None,
) -> Expr:
    """Spec-facing entry point: total in t, partial otherwise."""
    if wrt == "t":
        return total_derivative(e, dependent_vars, registry)
    return partial_derivative(e, wrt, registry)
