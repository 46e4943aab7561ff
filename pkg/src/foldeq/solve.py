"""Single-variable isolation: the partial-inversion engine.

Given lhs = rhs with the target occurring in rhs, produce h with
target = h and the nonvanishing side conditions picked up on the way.
Supported shapes: a single occurrence reachable through sums, products,
reciprocal powers and invertible function applications, or an rhs that
is affine in the target.  Everything else is NotIsolatable.
"""

from __future__ import annotations

from typing import Optional, Union

from .errors import NotIsolatable
from .expr import (
    Expr,
    FnApp,
    FnRegistry,
    Pow,
    Prod,
    Rat,
    Seq,
    SideCondition,
    Sum,
    Var,
    contains,
    count_occurrences,
    make_fnapp,
    make_pow,
    make_prod,
    make_sum,
    rat,
    side_conditions_of,
)

Target = Union[str, Expr]


def _as_target(target: Target) -> Expr:
    if isinstance(target, str):
        return Var(target)
    if isinstance(target, (Var, Seq)):
        return target
    raise NotIsolatable(target, "target must be a variable or sequence atom")


def _peel(lhs: Expr, e: Expr, target: Expr, registry: Optional[FnRegistry]) -> Expr:
    if e == target:
        return lhs
    if isinstance(e, Sum):
        carrier = None
        rest: list[Expr] = []
        for t in e.terms:
            if contains(t, target):
                carrier = t
            else:
                rest.append(t)
        assert carrier is not None
        new_lhs = make_sum([lhs, make_prod([rat(-1), make_sum(rest)])])
        return _peel(new_lhs, carrier, target, registry)
    if isinstance(e, Prod):
        rest_parts: list[Expr] = [Rat(e.coeff)]
        carrier_base, carrier_exp = None, 0
        for b, ex in e.factors:
            if contains(b, target):
                carrier_base, carrier_exp = b, ex
            else:
                rest_parts.append(make_pow(b, ex))
        assert carrier_base is not None
        new_lhs = make_prod(
            [lhs, make_pow(make_prod(rest_parts), -1)]
        )
        return _peel(new_lhs, make_pow(carrier_base, carrier_exp), target, registry)
    if isinstance(e, Pow):
        if e.exp == -1:
            return _peel(make_pow(lhs, -1), e.base, target, registry)
        raise NotIsolatable(target, f"target under power {e.exp}")
    if isinstance(e, FnApp):
        if e.dorder:
            raise NotIsolatable(target, f"target under primed symbol {e.fname}")
        inv = registry.inverse_of(e.fname) if registry else None
        if not inv:
            raise NotIsolatable(target, f"no declared inverse for {e.fname}")
        return _peel(make_fnapp(inv, lhs), e.arg, target, registry)
    raise NotIsolatable(target, f"unsupported position in {type(e).__name__}")


def _affine(lhs: Expr, rhs: Expr, target: Expr) -> Expr:
    terms = rhs.terms if isinstance(rhs, Sum) else (rhs,)
    p_parts: list[Expr] = []
    q_parts: list[Expr] = []
    inv_target = make_pow(target, -1)
    for t in terms:
        if not contains(t, target):
            p_parts.append(t)
            continue
        q = make_prod([t, inv_target])
        if contains(q, target):
            raise NotIsolatable(target, "not affine in target")
        q_parts.append(q)
    q = make_sum(q_parts)
    neg_p = make_prod([rat(-1), make_sum(p_parts)])
    return make_prod([make_sum([lhs, neg_p]), make_pow(q, -1)])


def solve_for(
    lhs: Expr,
    rhs: Expr,
    target: Target,
    registry: Optional[FnRegistry] = None,
) -> tuple[Expr, frozenset[SideCondition]]:
    """Isolate `target` from lhs = rhs; returns (h, side conditions).

    The side conditions are the nonvanishing requirements read off the
    denominators of h.
    """
    tgt = _as_target(target)
    if contains(lhs, tgt):
        raise NotIsolatable(tgt, "target occurs on the left-hand side")
    n = count_occurrences(rhs, tgt)
    if n == 0:
        raise NotIsolatable(tgt, "target does not occur")
    h: Optional[Expr] = None
    if n == 1:
        try:
            h = _peel(lhs, rhs, tgt, registry)
        except NotIsolatable:
            h = None
    if h is None:
        h = _affine(lhs, rhs, tgt)
    return h, side_conditions_of(h, registry)
