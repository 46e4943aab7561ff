"""Difference/differential system model, orbit iteration and recovery.

Orbit iteration is the brute-force oracle everything else is verified
against: exact Fraction arithmetic when inputs are rational, IEEE floats
otherwise.  A float-mode step is singular when a guard magnitude drops
below 1e-12; exact mode requires an exact zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import DivisionByZero, ExprError
from .expr import (
    Deriv,
    Expr,
    FnRegistry,
    Index,
    Rat,
    Seq,
    SideCondition,
    Var,
    eval_exact,
    eval_expr,
    exact_is_zero,
    free_var_names,
    fn_names,
    make_sum,
    rat,
    seq_atoms,
    side_conditions_of,
    substitute,
    to_text,
    walk,
)

Number = Union[Fraction, float]

try:  # GMP-backed rationals: identical semantics, far faster gcd
    from gmpy2 import mpq as _exact_number
except ImportError:  # pragma: no cover
    _exact_number = Fraction

FLOAT_SINGULAR_EPS = 1e-12

_RESERVED_NAMES = {"n", "t", "pi", "sgn_n", "sin", "cos", "exp"}


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------


@dataclass
class DiffSystem:
    """k first-order difference equations, recursive or delta form."""

    vars: tuple[str, ...]
    rhs: tuple[Expr, ...]
    kind: str  # "recursive" | "delta"
    params: dict[str, Optional[Fraction]]
    guards: tuple[SideCondition, ...]
    registry: FnRegistry

    @property
    def k(self) -> int:
        return len(self.vars)

    def rhs_of(self, name: str) -> Expr:
        return self.rhs[self.vars.index(name)]

    def to_recursive(self) -> "DiffSystem":
        """Rewrite a delta system as x_{n+1} = x_n + f."""
        if self.kind == "recursive":
            return self
        new_rhs = tuple(
            make_sum([Var(v), r]) for v, r in zip(self.vars, self.rhs)
        )
        return DiffSystem(self.vars, new_rhs, "recursive", dict(self.params),
                          self.guards, self.registry)

    def with_param_values(self, values: Mapping[str, Fraction]) -> "DiffSystem":
        params = dict(self.params)
        for k, v in values.items():
            if k not in params:
                raise ExprError(f"unknown parameter {k}")
            params[k] = Fraction(v)
        return DiffSystem(self.vars, self.rhs, self.kind, params,
                          self.guards, self.registry)

    def substitute_params(self, values: Mapping[str, Fraction]) -> "DiffSystem":
        """Substitute concrete parameter values into the right-hand sides."""
        binds = {k: rat(Fraction(v)) for k, v in values.items()}
        new_rhs = tuple(substitute(r, binds) for r in self.rhs)
        params = {k: v for k, v in self.params.items() if k not in values}
        return _finish_system(DiffSystem, self.vars, new_rhs, self.kind,
                              params, (), self.registry)


@dataclass
class OdeSystem:
    """k first-order differential equations over the index t."""

    vars: tuple[str, ...]
    rhs: tuple[Expr, ...]
    kind: str  # always "ode"
    params: dict[str, Optional[Fraction]]
    guards: tuple[SideCondition, ...]
    registry: FnRegistry

    @property
    def k(self) -> int:
        return len(self.vars)

    def rhs_of(self, name: str) -> Expr:
        return self.rhs[self.vars.index(name)]

    def with_param_values(self, values: Mapping[str, Fraction]) -> "OdeSystem":
        params = dict(self.params)
        for k, v in values.items():
            if k not in params:
                raise ExprError(f"unknown parameter {k}")
            params[k] = Fraction(v)
        return OdeSystem(self.vars, self.rhs, self.kind, params,
                         self.guards, self.registry)

    def substitute_params(self, values: Mapping[str, Fraction]) -> "OdeSystem":
        binds = {k: rat(Fraction(v)) for k, v in values.items()}
        new_rhs = tuple(substitute(r, binds) for r in self.rhs)
        params = {k: v for k, v in self.params.items() if k not in values}
        return _finish_system(OdeSystem, self.vars, new_rhs, "ode",
                              params, (), self.registry)


def _finish_system(cls, vars, rhs, kind, params, extra_guards, registry):
    guards: list[SideCondition] = []
    seen = set()
    for r in rhs:
        for c in sorted(side_conditions_of(r, registry), key=lambda c: to_text(c.expr)):
            if c not in seen:
                seen.add(c)
                guards.append(c)
    for c in extra_guards:
        if c not in seen:
            seen.add(c)
            guards.append(c)
    return cls(tuple(vars), tuple(rhs), kind, dict(params), tuple(guards), registry)


def make_system(
    vars: Sequence[str],
    rhs: Sequence[Expr],
    kind: str = "recursive",
    params: Optional[Mapping[str, Optional[Fraction]]] = None,
    extra_guards: Iterable[SideCondition] = (),
    registry: Optional[FnRegistry] = None,
):
    """Validated constructor for both system flavours."""
    if kind not in ("recursive", "delta", "ode"):
        raise ExprError(f"unknown system kind {kind!r}")
    if len(vars) != len(rhs) or not vars:
        raise ExprError("need one equation per variable")
    registry = registry or FnRegistry()
    params = dict(params or {})
    names = set(vars)
    if len(names) != len(vars):
        raise ExprError("duplicate variable names")
    for v in list(vars) + list(params):
        if v in _RESERVED_NAMES:
            raise ExprError(f"name {v!r} is reserved")
    allowed = names | set(params)
    bad_index = "t" if kind in ("recursive", "delta") else "n"
    for v, r in zip(vars, rhs):
        for a in walk(r):
            if isinstance(a, (Seq, Deriv)):
                raise ExprError(f"equation for {v} contains {a}; systems are first order")
            if isinstance(a, Index) and a.name == bad_index:
                raise ExprError(f"index {bad_index} is not valid in a {kind} system")
        undeclared = free_var_names(r) - allowed
        if undeclared:
            raise ExprError(f"equation for {v} uses undeclared names {sorted(undeclared)}")
        for fn in fn_names(r):
            if not registry.known(fn):
                raise ExprError(f"equation for {v} uses undeclared symbol {fn}")
    cls = OdeSystem if kind == "ode" else DiffSystem
    return _finish_system(cls, vars, rhs, kind, params, extra_guards, registry)


# ---------------------------------------------------------------------------
# higher-order scalar equations
# ---------------------------------------------------------------------------


@dataclass
class HigherOrderEq:
    """Scalar equation of order kappa.

    Difference kind: rhs over Seq(seq_name, 0..order-1) and n, giving
    s[n+order].  ODE kind: rhs over the pivot variable and its primes up
    to order-1 plus t, giving the order-th derivative.
    """

    order: int
    rhs: Expr
    kind: str  # "difference" | "ode"
    seq_name: str = "s"
    params: dict[str, Optional[Fraction]] = field(default_factory=dict)
    registry: FnRegistry = field(default_factory=FnRegistry)

    def __post_init__(self):
        if self.order < 1:
            raise ExprError("order must be at least 1")
        if self.kind == "difference":
            for a in seq_atoms(self.rhs):
                if a.name == self.seq_name and not 0 <= a.offset < self.order:
                    raise ExprError(
                        f"offset {a.offset} out of range for order {self.order}"
                    )


@dataclass
class PassiveEq:
    """One recovery entry: either a passive formula or a driven
    first-order auxiliary recurrence/ODE for the variable.

    A passive entry may carry a fallback: the variable's own system
    equation (driven by the folded solution), used pointwise when the
    passive denominator vanishes while the orbit itself is fine, e.g.
    recovering y recursively on the x = 0 axis of the quadratic-rational
    example."""

    var: str
    expr: Expr
    kind: str = "passive"  # "passive" | "auxiliary"
    fallback: Optional[Expr] = None


@dataclass
class Folding:
    """Order-kappa equation plus passive recovery of the other components."""

    equation: HigherOrderEq
    pivot: str
    passive: tuple[PassiveEq, ...]
    init_map: tuple[Expr, ...]
    side_conditions: frozenset[SideCondition]
    kappa: int
    decimation: Optional[int] = None
    case: Optional[str] = None
    trace_note: str = ""


# ---------------------------------------------------------------------------
# orbits
# ---------------------------------------------------------------------------


@dataclass
class Orbit:
    states: list[tuple[Number, ...]]
    status: str  # "completed" | "singular"
    horizon: int
    singular_step: Optional[int] = None
    condition: Optional[SideCondition] = None

    def component(self, i: int) -> list[Number]:
        return [s[i] for s in self.states]


@dataclass
class ScalarSolution:
    values: list[Number]
    status: str
    horizon: int
    singular_step: Optional[int] = None
    condition: Optional[SideCondition] = None


def _param_env(params: Mapping[str, Optional[Fraction]], mode: str) -> dict:
    env = {}
    for k, v in params.items():
        if v is None:
            raise ExprError(f"parameter {k} has no value")
        env[k] = float(v) if mode == "float" else _exact_number(v)
    return env


def _is_zero(value, mode: str) -> bool:
    if mode == "float":
        return abs(value) < FLOAT_SINGULAR_EPS
    return value == 0


def _evaluator(mode: str):
    # values go through Fraction arithmetic in exact mode: its per-op
    # normalization keeps intermediates minimal, which beats batching
    # the gcd work (guard tests use the gcd-free pair evaluator instead)
    return eval_expr


def _guard_is_zero(expr, env, m, registry, mode, seq=None) -> bool:
    if mode == "exact":
        return exact_is_zero(expr, env, m, registry, seq)
    return abs(eval_expr(expr, env, m, registry, seq=seq)) < FLOAT_SINGULAR_EPS


def _check_guards(guards, env, m, registry, mode):
    """Return the first violated guard, or None."""
    for g in guards:
        try:
            if _guard_is_zero(g.expr, env, m, registry, mode):
                return g
        except DivisionByZero:
            return g
    return None


def iterate_orbit(
    sys: DiffSystem,
    init: Sequence[Number],
    n_steps: int,
    mode: str = "exact",
) -> Orbit:
    """Iterate the system map, stopping at the first guard violation."""
    if len(init) != sys.k:
        raise ExprError(f"initial state needs {sys.k} components")
    conv = float if mode == "float" else _exact_number
    penv = _param_env(sys.params, mode)
    states: list[tuple[Number, ...]] = []
    current = tuple(conv(v) for v in init)
    for m in range(n_steps + 1):
        env = dict(penv)
        env.update(zip(sys.vars, current))
        bad = _check_guards(sys.guards, env, m, sys.registry, mode)
        if bad is not None:
            return Orbit(states, "singular", n_steps, m, bad)
        states.append(current)
        if m == n_steps:
            break
        ev = _evaluator(mode)
        try:
            vals = tuple(
                ev(r, env, m, sys.registry) for r in sys.rhs
            )
        except DivisionByZero as exc:
            return Orbit(states, "singular", n_steps,
                         m + 1, SideCondition(exc.denominator))
        if sys.kind == "delta":
            current = tuple(x + d for x, d in zip(current, vals))
        else:
            current = vals
    return Orbit(states, "completed", n_steps)


def iterate_equation(
    eq: HigherOrderEq,
    init: Sequence[Number],
    n_steps: int,
    mode: str = "exact",
    params: Optional[Mapping[str, Fraction]] = None,
) -> ScalarSolution:
    """Iterate s[m+order] = rhs(m, s[m..m+order-1]) for n_steps new terms."""
    if eq.kind != "difference":
        raise ExprError("iterate_equation applies to difference equations")
    if len(init) != eq.order:
        raise ExprError(f"need {eq.order} initial values")
    conv = float if mode == "float" else _exact_number
    merged = dict(eq.params)
    if params:
        merged.update(params)
    penv = _param_env(merged, mode)
    values: list[Number] = [conv(v) for v in init]
    conds = sorted(side_conditions_of(eq.rhs, eq.registry),
                   key=lambda c: to_text(c.expr))
    ev = _evaluator(mode)
    for m in range(n_steps):

        def seq(name, off, m=m):
            if name != eq.seq_name:
                raise ExprError(f"unknown sequence {name}")
            return values[m + off]

        bad = None
        for g in conds:
            try:
                if _guard_is_zero(g.expr, penv, m, eq.registry, mode, seq):
                    bad = g
                    break
            except DivisionByZero:
                bad = g
                break
        if bad is not None:
            return ScalarSolution(values, "singular", n_steps, m, bad)
        try:
            nxt = ev(eq.rhs, penv, m, eq.registry, seq=seq)
        except DivisionByZero as exc:
            return ScalarSolution(values, "singular", n_steps, m,
                                  SideCondition(exc.denominator))
        values.append(nxt)
    return ScalarSolution(values, "completed", n_steps)


# ---------------------------------------------------------------------------
# passive recovery
# ---------------------------------------------------------------------------


def passive_offset_span(f: Folding) -> int:
    """Largest positive sequence offset any recovery entry needs."""
    span = 0
    for p in f.passive:
        for a in seq_atoms(p.expr):
            span = max(span, a.offset)
    return span


def eval_init_map(
    f: Folding,
    sys,
    init: Sequence[Number],
    mode: str = "exact",
) -> list[Number]:
    conv = float if mode == "float" else _exact_number
    env = _param_env(sys.params, mode)
    env.update(zip(sys.vars, (conv(v) for v in init)))
    ev = _evaluator(mode)
    return [ev(e, env, None, sys.registry) for e in f.init_map]


def recover_components(
    f: Folding,
    s_values: Sequence[Number],
    sys: DiffSystem,
    init: Optional[Sequence[Number]] = None,
    mode: str = "exact",
) -> Orbit:
    """Rebuild the full orbit from a folded-equation solution.

    The pivot component is the given sequence; auxiliary variables are
    co-iterated from the initial state, then passive variables are
    evaluated in recovery order.  Negative offsets at step 0 fall back
    to the initial state, which must then be provided.
    """
    penv = _param_env(sys.params, mode)
    ev = _evaluator(mode)
    seqs: dict[str, list[Number]] = {f.equation.seq_name: list(s_values)}
    init_env = dict(zip(sys.vars, init)) if init is not None else {}

    span = passive_offset_span(f)
    target = len(s_values) - span
    if target <= 0:
        raise ExprError("folded solution too short for recovery")

    singular_step: Optional[int] = None
    condition: Optional[SideCondition] = None

    def lookup(name, off, m):
        vs = seqs[name]
        i = m + off
        if i < 0:
            raise IndexError
        return vs[i]

    def note_singular(m, cond):
        nonlocal singular_step, condition
        if singular_step is None or m < singular_step:
            singular_step, condition = m, cond

    aux_entries = [p for p in f.passive if p.kind == "auxiliary"]
    if aux_entries:
        for p in aux_entries:
            if p.var not in init_env:
                raise ExprError(
                    f"recovery of {p.var} needs the system initial state"
                )
            seqs[p.var] = [init_env[p.var]]
        limit = target
        for m in range(target - 1):
            if singular_step is not None and m >= singular_step:
                break
            nxt: dict[str, Number] = {}
            stop = False
            for p in aux_entries:

                def seq(name, off, m=m):
                    return lookup(name, off, m)

                try:
                    nxt[p.var] = ev(p.expr, penv, m, sys.registry, seq=seq)
                except DivisionByZero as exc:
                    note_singular(m + 1, SideCondition(exc.denominator))
                    stop = True
                    break
                except IndexError:
                    stop = True
                    break
                if mode == "float" and abs(nxt[p.var]) > 1e306:
                    note_singular(m + 1, SideCondition(p.expr))
                    stop = True
                    break
            if stop:
                break
            for p in aux_entries:
                seqs[p.var].append(nxt[p.var])

    for p in f.passive:
        if p.kind == "auxiliary":
            continue
        conds = sorted(side_conditions_of(p.expr, sys.registry),
                       key=lambda c: to_text(c.expr))
        vals: list[Number] = []
        seqs[p.var] = vals

        def fallback_value(m: int):
            """Step the variable's own equation when the passive formula
            is undefined at m (the orbit may still be perfectly fine)."""
            if m == 0:
                if p.var in init_env:
                    return init_env[p.var]
                return None
            if p.fallback is None or len(vals) < m:
                return None

            def seq(name, off, base=m - 1):
                return lookup(name, off, base)

            try:
                return ev(p.fallback, penv, m - 1, sys.registry, seq=seq)
            except (DivisionByZero, IndexError):
                return None

        for m in range(target):
            if singular_step is not None and m >= singular_step:
                break

            def seq(name, off, m=m):
                return lookup(name, off, m)

            try:
                bad = None
                for g in conds:
                    if _guard_is_zero(g.expr, penv, m, sys.registry, mode,
                                      seq):
                        bad = g
                        break
                if bad is not None:
                    fb = fallback_value(m)
                    if fb is None:
                        note_singular(m, bad)
                        break
                    vals.append(fb)
                    continue
                vals.append(ev(p.expr, penv, m, sys.registry, seq=seq))
            except DivisionByZero as exc:
                fb = fallback_value(m)
                if fb is None:
                    note_singular(m, SideCondition(exc.denominator))
                    break
                vals.append(fb)
            except IndexError:
                if m == 0 and p.var in init_env:
                    vals.append(init_env[p.var])
                else:
                    raise ExprError(
                        f"recovery of {p.var} needs the system initial state"
                    )

    length = target
    for v in sys.vars:
        if v == f.pivot:
            continue
        length = min(length, len(seqs[v]))
    if singular_step is not None:
        length = min(length, singular_step)

    states = []
    for m in range(length):
        row = []
        for v in sys.vars:
            row.append(s_values[m] if v == f.pivot else seqs[v][m])
        states.append(tuple(row))
    if singular_step is not None and singular_step <= target:
        return Orbit(states, "singular", target - 1, singular_step, condition)
    return Orbit(states, "completed", length - 1)
