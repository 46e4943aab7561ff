"""The general folding algorithm for difference systems.

A system of k first-order equations is compressed into one scalar
equation of order kappa <= k by iterating shift, substitute and partial
inversion: each round advances the pivot equation one index and, when
offset-0 variables survive the substitutions, eliminates one of them by
inverting the previous equation.  Variables never eliminated are
recovered afterwards by driven first-order auxiliary recurrences; the
eliminated ones come back passively through their inversions.

The triangular class that folds with no inversions at all is handled
separately by backward substitution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import (
    ExprError,
    NotFoldable,
    NotIsolatable,
    ShapeMismatch,
    UndefinedInterdependence,
    UnfoldableSystem,
)
from .expr import (
    ALT,
    Expr,
    Index,
    N,
    Rat,
    Seq,
    SideCondition,
    Var,
    contains,
    free_var_names,
    rat,
    replace_atoms,
    seq_atoms,
    shift_index,
    side_conditions_of,
    substitute,
    to_text,
)
from .solve import solve_for
from .systems import DiffSystem, Folding, HigherOrderEq, PassiveEq


@dataclass(frozen=True)
class FoldStep:
    level: int
    equation: Expr  # equation for pivot[n+level+1] after this level's work
    inversion: Optional[Expr]
    eliminated: Optional[str]
    conditions: frozenset[SideCondition]


@dataclass(frozen=True)
class FoldTrace:
    steps: tuple[FoldStep, ...] = ()


@dataclass
class KappaReport:
    """Interdependence degree of a system."""

    status: str  # "kappa" | "uncoupled" | "undefined" | "unknown"
    kappa: Optional[int] = None
    blocks: tuple[tuple[str, ...], ...] = ()
    pivot: Optional[str] = None
    detail: str = ""


# ---------------------------------------------------------------------------
# structure checks
# ---------------------------------------------------------------------------


def reference_blocks(sys: DiffSystem) -> list[tuple[str, ...]]:
    """Connected components of the variable-reference graph."""
    names = list(sys.vars)
    adj: dict[str, set[str]] = {v: set() for v in names}
    for v, r in zip(names, sys.rhs):
        for w in free_var_names(r) & set(names):
            if w != v:
                adj[v].add(w)
                adj[w].add(v)
    seen: set[str] = set()
    blocks: list[tuple[str, ...]] = []
    for v in names:
        if v in seen:
            continue
        comp = []
        stack = [v]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            comp.append(u)
            stack.extend(adj[u] - seen)
        blocks.append(tuple(sorted(comp, key=names.index)))
    return blocks


def is_uncoupled(sys: DiffSystem) -> bool:
    if sys.k < 2:
        return False
    return all(
        free_var_names(r) & set(sys.vars) <= {v}
        for v, r in zip(sys.vars, sys.rhs)
    )


def matches_ske_shape(sys: DiffSystem) -> bool:
    """True for the triangular shape that folds without inversions:
    equation i >= 2 references only {n, x1, x_{i+1}, ..., x_k} and the
    last one only {n, x1}."""
    names = sys.vars
    for i in range(1, sys.k):
        allowed = {names[0]} | set(names[i + 1:])
        if free_var_names(sys.rhs[i]) & set(names) - allowed:
            return False
    return True


# ---------------------------------------------------------------------------
# shared construction helpers
# ---------------------------------------------------------------------------


def _seq_rhs(sys: DiffSystem) -> dict[str, Expr]:
    """System right-hand sides with state variables as offset-0 atoms."""
    mapping = {Var(v): Seq(v, 0) for v in sys.vars}
    return {v: replace_atoms(r, mapping) for v, r in zip(sys.vars, sys.rhs)}


def _fresh_seq_name(sys: DiffSystem, pivot: str) -> str:
    taken = set(sys.vars) | set(sys.params)
    taken.discard(pivot)
    name = "s"
    while name in taken:
        name += "s"
    return name


def _unresolved(e: Expr, sys: DiffSystem, pivot: str) -> list[str]:
    present = {a.name for a in seq_atoms(e) if a.offset == 0}
    return [v for v in sys.vars if v != pivot and v in present]


def _init_map(sys: DiffSystem, pivot: str, kappa: int) -> tuple[Expr, ...]:
    """Initial values s_0..s_{kappa-1} as expressions in the system state."""
    state: dict[str, Expr] = {v: Var(v) for v in sys.vars}
    out = [state[pivot]]
    for j in range(kappa - 1):
        literal = {N: rat(j), ALT: rat(1 if j % 2 == 0 else -1)}
        new_state = {}
        for v, r in zip(sys.vars, sys.rhs):
            e = substitute(replace_atoms(r, literal), state)
            new_state[v] = e
        state = new_state
        out.append(state[pivot])
    return tuple(out)


def _collect_conditions(
    eq_rhs: Expr,
    passive: list[PassiveEq],
    extra: set[SideCondition],
    registry,
) -> frozenset[SideCondition]:
    conds = set(extra)
    conds |= side_conditions_of(eq_rhs, registry)
    for p in passive:
        conds |= side_conditions_of(p.expr, registry)
    return frozenset(conds)


def _rename_pivot(e: Expr, pivot: str, seq_name: str) -> Expr:
    if pivot == seq_name:
        return e
    mapping = {
        a: Seq(seq_name, a.offset)
        for a in seq_atoms(e)
        if a.name == pivot
    }
    return replace_atoms(e, mapping)


# ---------------------------------------------------------------------------
# the folding algorithm
# ---------------------------------------------------------------------------


def fold(sys: DiffSystem, pivot: Optional[str] = None) -> tuple[Folding, FoldTrace]:
    """Fold a recursive difference system around the pivot variable.

    Returns the folding plus the level-by-level trace.  Raises
    UnfoldableSystem for uncoupled systems, UndefinedInterdependence for
    systems that splinter into variable-disjoint blocks, and NotFoldable
    when some level admits no partial inversion.
    """
    if sys.kind == "delta":
        sys = sys.to_recursive()
    if sys.kind != "recursive":
        raise ExprError("fold applies to difference systems")
    pivot = pivot or sys.vars[0]
    if pivot not in sys.vars:
        raise ExprError(f"unknown pivot {pivot!r}")
    if is_uncoupled(sys):
        raise UnfoldableSystem("interdependence degree 0: system is uncoupled")
    blocks = reference_blocks(sys)
    if len(blocks) > 1:
        raise UndefinedInterdependence(blocks)

    rhs_seq = _seq_rhs(sys)
    cur = rhs_seq[pivot]
    order = 1
    inversions: list[tuple[str, Expr]] = []
    conditions: set[SideCondition] = set()
    steps: list[FoldStep] = []
    snapshots: list[tuple[int, Expr]] = [(order, cur)]

    while _unresolved(cur, sys, pivot):
        adv = shift_index(cur, 1)
        adv = replace_atoms(
            adv, {Seq(v, 1): rhs_seq[v] for v in sys.vars if v != pivot}
        )
        for w, phi in inversions:
            adv = replace_atoms(adv, {Seq(w, 0): phi})
        if _unresolved(adv, sys, pivot):
            level = len(inversions) + 1
            tried: list[str] = []
            found = None
            for v in reversed(sys.vars):
                if v == pivot or v in dict(inversions):
                    continue
                if not contains(cur, Seq(v, 0)):
                    continue
                tried.append(v)
                try:
                    phi, conds = solve_for(
                        Seq(pivot, order), cur, Seq(v, 0), sys.registry
                    )
                except NotIsolatable:
                    continue
                found = (v, phi, conds)
                break
            if found is None:
                raise NotFoldable(level, tried)
            v, phi, conds = found
            inversions.append((v, phi))
            conditions |= conds
            adv = replace_atoms(adv, {Seq(v, 0): phi})
            steps.append(
                FoldStep(level, adv, phi, v, frozenset(conds))
            )
        cur = adv
        order += 1
        snapshots.append((order, cur))

    kappa = order
    seq_name = _fresh_seq_name(sys, pivot)
    eliminated = [v for v, _ in inversions]
    unresolved = [v for v in sys.vars if v != pivot and v not in eliminated]

    # a variable the equation never consumed may still admit a passive
    # recovery: invert any derived level equation for it, provided the
    # result involves pivot atoms only (otherwise fall back to a driven
    # first-order auxiliary recurrence)
    recovery_only: dict[str, Expr] = {}
    for v in unresolved:
        for j, eq_j in snapshots:
            if not contains(eq_j, Seq(v, 0)):
                continue
            try:
                phi, conds = solve_for(Seq(pivot, j), eq_j, Seq(v, 0),
                                       sys.registry)
            except NotIsolatable:
                continue
            others = {a.name for a in seq_atoms(phi)} - {pivot}
            if others:
                continue
            recovery_only[v] = phi
            conditions |= conds
            break

    def driven_equation(v: str) -> Expr:
        """The variable's own system equation with every other eliminated
        variable substituted away; self-references stay."""
        e = rhs_seq[v]
        for w, phi in inversions:
            if w != v:
                e = replace_atoms(e, {Seq(w, 0): phi})
        for w, phi in recovery_only.items():
            if w != v:
                e = replace_atoms(e, {Seq(w, 0): phi})
        return _rename_pivot(e, pivot, seq_name)

    passive: list[PassiveEq] = []
    for v in unresolved:
        if v in recovery_only:
            passive.append(PassiveEq(
                v, _rename_pivot(recovery_only[v], pivot, seq_name),
                "passive", fallback=driven_equation(v)))
    for v in unresolved:
        if v in recovery_only:
            continue
        passive.append(PassiveEq(v, driven_equation(v), "auxiliary"))
    for v, phi in reversed(inversions):
        passive.append(PassiveEq(v, _rename_pivot(phi, pivot, seq_name),
                                 "passive", fallback=driven_equation(v)))

    eq_rhs = _rename_pivot(cur, pivot, seq_name)
    offsets = {a.offset for a in seq_atoms(eq_rhs) if a.name == seq_name}
    decimation = kappa if kappa > 1 and offsets <= {0} else None
    renamed_conds = {
        SideCondition(_rename_pivot(c.expr, pivot, seq_name), c.relation)
        for c in conditions
    }
    equation = HigherOrderEq(
        kappa, eq_rhs, "difference", seq_name, dict(sys.params), sys.registry
    )
    folding = Folding(
        equation=equation,
        pivot=pivot,
        passive=tuple(passive),
        init_map=_init_map(sys, pivot, kappa),
        side_conditions=_collect_conditions(
            eq_rhs, passive, renamed_conds, sys.registry
        ),
        kappa=kappa,
        decimation=decimation,
    )
    return folding, FoldTrace(tuple(steps))


# ---------------------------------------------------------------------------
# triangular systems: folding without inversions
# ---------------------------------------------------------------------------


def fold_no_inversion(sys: DiffSystem) -> Folding:
    """Fold a triangular system by pure backward substitution.

    The pivot is the first variable.  The order-k equation may reference
    only offsets j..k-1; it is then shifted down by j (the identity is
    derived from system equations at indices >= n+j, so it holds for all
    n >= 0 after the shift) and the recorded order drops to k-j.
    """
    if sys.kind == "delta":
        sys = sys.to_recursive()
    if not matches_ske_shape(sys):
        raise ShapeMismatch("system does not match the no-inversion shape")
    rhs_seq = _seq_rhs(sys)
    names = sys.vars
    pivot = names[0]
    k = sys.k

    cache: dict[tuple[str, int], Expr] = {}

    def expand(v: str, m: int) -> Expr:
        """Expression for v at offset m in terms of pivot atoms only."""
        key = (v, m)
        if key in cache:
            return cache[key]
        if m <= 0:
            raise ExprError("backward expansion fell below the initial index")
        e = shift_index(rhs_seq[v], m - 1)
        mapping = {
            a: expand(a.name, a.offset)
            for a in seq_atoms(e)
            if a.name != pivot
        }
        e = replace_atoms(e, mapping)
        cache[key] = e
        return e

    cur = shift_index(rhs_seq[pivot], k - 1)
    mapping = {
        a: expand(a.name, a.offset)
        for a in seq_atoms(cur)
        if a.name != pivot
    }
    cur = replace_atoms(cur, mapping)

    offsets = sorted(a.offset for a in seq_atoms(cur) if a.name == pivot)
    down = offsets[0] if offsets else k - 1
    if down > 0:
        cur = shift_index(cur, -down)
    kappa = k - down

    seq_name = _fresh_seq_name(sys, pivot)
    passive: list[PassiveEq] = []
    for v in reversed(names[1:]):
        back = shift_index(rhs_seq[v], -1)
        passive.append(PassiveEq(v, _rename_pivot(back, pivot, seq_name), "passive"))

    eq_rhs = _rename_pivot(cur, pivot, seq_name)
    eq_offsets = {a.offset for a in seq_atoms(eq_rhs) if a.name == seq_name}
    decimation = kappa if kappa > 1 and eq_offsets <= {0} else None
    equation = HigherOrderEq(
        kappa, eq_rhs, "difference", seq_name, dict(sys.params), sys.registry
    )
    return Folding(
        equation=equation,
        pivot=pivot,
        passive=tuple(passive),
        init_map=_init_map(sys, pivot, kappa),
        side_conditions=_collect_conditions(eq_rhs, passive, set(), sys.registry),
        kappa=kappa,
        decimation=decimation,
    )


# ---------------------------------------------------------------------------
# interdependence degree
# ---------------------------------------------------------------------------


def interdependence_degree(sys: DiffSystem) -> KappaReport:
    """Order of the folded equation, or the reason there is none."""
    if sys.kind == "delta":
        sys = sys.to_recursive()
    if sys.k == 1:
        return KappaReport("kappa", 1, pivot=sys.vars[0])
    if is_uncoupled(sys):
        return KappaReport("uncoupled", 0, detail="every equation references only its own variable")
    blocks = reference_blocks(sys)
    if len(blocks) > 1:
        return KappaReport("undefined", None, tuple(blocks),
                           detail="system splinters into variable-disjoint blocks")
    last: Optional[NotFoldable] = None
    for pivot in sys.vars:
        try:
            folding, _ = fold(sys, pivot)
            return KappaReport("kappa", folding.kappa, pivot=pivot)
        except NotFoldable as exc:
            last = exc
    if matches_ske_shape(sys):
        folding = fold_no_inversion(sys)
        return KappaReport("kappa", folding.kappa, pivot=sys.vars[0])
    detail = str(last) if last else "no pivot admits a folding"
    return KappaReport("unknown", None, detail=detail)
