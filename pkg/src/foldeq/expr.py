"""Immutable symbolic expression kernel.

Expressions are built over exact rationals, named variables, the time
index (n or t), subscripted sequence atoms like x[n+2], derivative atoms
like x'', opaque function applications, pi, and the alternating sign
(-1)^n.  Every constructor returns a canonical form:

* sums are flat, like monomials merged, rational parts folded into a
  single constant;
* products are flat with exponents merged per structurally-equal base
  and the rational coefficient pulled out front;
* positive integer powers of sums are expanded, so a canonical sum is a
  multivariate (Laurent) polynomial over its atoms;
* sums kept as denominators (negative powers) are normalized: internal
  denominators cleared, rational content extracted, leading sign made
  positive, and a shared sum denominator is divided out of a sum of
  terms when the division is exact.

Structural equality of canonical forms is expression identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Optional, Union

from .errors import (
    DivisionByZero,
    ExprError,
    MissingDefinition,
    MissingDerivative,
    UnboundVariable,
)

Number = Union[int, Fraction, float]

_EXPAND_GUARD = 512  # cap on terms produced by a single product expansion


# ---------------------------------------------------------------------------
# node classes
# ---------------------------------------------------------------------------


class Expr:
    """Base class; all concrete nodes are frozen dataclasses."""

    __slots__ = ()

    def __add__(self, other):
        return make_sum([self, as_expr(other)])

    def __radd__(self, other):
        return make_sum([as_expr(other), self])

    def __sub__(self, other):
        return make_sum([self, make_prod([RAT_M1, as_expr(other)])])

    def __rsub__(self, other):
        return make_sum([as_expr(other), make_prod([RAT_M1, self])])

    def __mul__(self, other):
        return make_prod([self, as_expr(other)])

    def __rmul__(self, other):
        return make_prod([as_expr(other), self])

    def __truediv__(self, other):
        return make_prod([self, make_pow(as_expr(other), -1)])

    def __rtruediv__(self, other):
        return make_prod([as_expr(other), make_pow(self, -1)])

    def __pow__(self, exponent: int):
        return make_pow(self, exponent)

    def __neg__(self):
        return make_prod([RAT_M1, self])

    def __str__(self) -> str:
        return to_text(self)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {to_text(self)}>"


@dataclass(frozen=True, repr=False)
class Rat(Expr):
    value: Fraction

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True, repr=False)
class Pi(Expr):
    pass


@dataclass(frozen=True, repr=False)
class Index(Expr):
    name: str  # "n" or "t"


@dataclass(frozen=True, repr=False)
class AltSign(Expr):
    """The sequence (-1)^n as a first-class atom."""


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str


@dataclass(frozen=True, repr=False)
class Seq(Expr):
    """Subscripted sequence atom: name[n+offset]."""

    name: str
    offset: int


@dataclass(frozen=True, repr=False)
class Deriv(Expr):
    """Derivative atom: name with `order` primes (order >= 1)."""

    name: str
    order: int


@dataclass(frozen=True, repr=False)
class FnApp(Expr):
    """Application of a function symbol, possibly primed (dorder > 0)."""

    fname: str
    arg: Expr
    dorder: int = 0


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    base: Expr  # atom or Sum; never Rat, Pow or Prod
    exp: int  # never 0 or 1


@dataclass(frozen=True, repr=False)
class Prod(Expr):
    coeff: Fraction
    factors: tuple[tuple[Expr, int], ...]  # sorted, exponents nonzero


@dataclass(frozen=True, repr=False)
class Sum(Expr):
    terms: tuple[Expr, ...]  # sorted, at least two, no like monomials


PI = Pi()
N = Index("n")
T = Index("t")
ALT = AltSign()
RAT_0 = Rat(Fraction(0))
RAT_1 = Rat(Fraction(1))
RAT_M1 = Rat(Fraction(-1))

ZERO = RAT_0
ONE = RAT_1


def rat(p: Number, q: int = 1) -> Rat:
    return Rat(Fraction(p, q) if q != 1 else Fraction(p))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Rat(Fraction(x))
    raise TypeError(f"cannot coerce {x!r} to Expr")


# ---------------------------------------------------------------------------
# ordering keys (deterministic term/factor order)
# ---------------------------------------------------------------------------

_TAGS = {
    Rat: 0,
    Pi: 1,
    Index: 2,
    AltSign: 3,
    Var: 4,
    Seq: 5,
    Deriv: 6,
    FnApp: 7,
    Pow: 8,
    Prod: 9,
    Sum: 10,
}


def sort_key(e: Expr):
    t = type(e)
    tag = _TAGS[t]
    if t is Rat:
        return (tag, (e.value.numerator, e.value.denominator))
    if t is Pi or t is AltSign:
        return (tag,)
    if t is Index:
        return (tag, e.name)
    if t is Var:
        return (tag, e.name)
    if t is Seq:
        return (tag, e.name, e.offset)
    if t is Deriv:
        return (tag, e.name, e.order)
    if t is FnApp:
        return (tag, e.fname, e.dorder, sort_key(e.arg))
    if t is Pow:
        return (tag, sort_key(e.base), e.exp)
    if t is Prod:
        return (tag, tuple((sort_key(b), x) for b, x in e.factors),
                (e.coeff.numerator, e.coeff.denominator))
    if t is Sum:
        return (tag, tuple(sort_key(x) for x in e.terms))
    raise TypeError(t)


# ---------------------------------------------------------------------------
# canonicalizing constructors
# ---------------------------------------------------------------------------


def _coeff_mono(term: Expr) -> tuple[Fraction, Optional[Expr]]:
    """Split a canonical non-Sum term into (rational coeff, monomial or None).

    The monomial part is itself canonical (a bare atom, a Pow, or a
    coefficient-1 Prod with at least two factors) so it is usable as a
    combining key.
    """
    if isinstance(term, Rat):
        return term.value, None
    if isinstance(term, Prod):
        if term.coeff == 1:
            return Fraction(1), term
        if len(term.factors) == 1:
            b, e = term.factors[0]
            return term.coeff, b if e == 1 else Pow(b, e)
        return term.coeff, Prod(Fraction(1), term.factors)
    return Fraction(1), term


def _attach_coeff(coeff: Fraction, mono: Optional[Expr]) -> Expr:
    if mono is None:
        return Rat(coeff)
    if coeff == 1:
        return mono
    if isinstance(mono, Prod):
        return Prod(coeff, mono.factors)
    if isinstance(mono, Pow):
        return Prod(coeff, ((mono.base, mono.exp),))
    return Prod(coeff, ((mono, 1),))


def make_sum(parts: Iterable[Expr]) -> Expr:
    acc: dict[Optional[Expr], Fraction] = {}
    stack = list(parts)
    stack.reverse()
    while stack:
        p = stack.pop()
        if isinstance(p, Sum):
            stack.extend(reversed(p.terms))
            continue
        c, m = _coeff_mono(p)
        if c == 0:
            continue
        prev = acc.get(m)
        if prev is None:
            acc[m] = c
        else:
            tot = prev + c
            if tot == 0:
                del acc[m]
            else:
                acc[m] = tot
    terms = [_attach_coeff(c, m) for m, c in acc.items()]
    terms = _cancel_sum_denominators(terms)
    if not terms:
        return RAT_0
    if len(terms) == 1:
        return terms[0]
    terms.sort(key=sort_key)
    return Sum(tuple(terms))


def _mono_factors(term: Expr) -> tuple[Fraction, dict[Expr, int]]:
    """Factor map of a canonical non-Sum term."""
    c, m = _coeff_mono(term)
    if m is None:
        return c, {}
    if isinstance(m, Prod):
        return c, dict(m.factors)
    if isinstance(m, Pow):
        return c, {m.base: m.exp}
    return c, {m: 1}


def _from_factors(coeff: Fraction, factors: dict[Expr, int]) -> Expr:
    if coeff == 0:
        return RAT_0
    items = [(b, e) for b, e in factors.items() if e != 0]
    if not items:
        return Rat(coeff)
    if coeff == 1 and len(items) == 1 and items[0][1] == 1:
        return items[0][0]
    items.sort(key=lambda be: (sort_key(be[0]), be[1]))
    out: list[tuple[Expr, int]] = []
    for b, e in items:
        if isinstance(b, Pow) or isinstance(b, Prod) or isinstance(b, Rat):
            raise ExprError(f"invalid product base: {b!r}")
        out.append((b, e))
    if coeff == 1 and len(out) == 1:
        b, e = out[0]
        return b if e == 1 else Pow(b, e)
    return Prod(coeff, tuple(out))


def _sum_den_signature(factors: dict[Expr, int]) -> tuple[tuple[Expr, int], ...]:
    sig = [(b, e) for b, e in factors.items() if e < 0 and isinstance(b, Sum)]
    sig.sort(key=lambda be: (sort_key(be[0]), be[1]))
    return tuple(sig)


def _cancel_sum_denominators(terms: list[Expr]) -> list[Expr]:
    """Divide a shared sum denominator out of term groups when exact.

    Terms are grouped by their multiset of sum-typed denominators; for each
    group the numerator polynomial is divided by each denominator base in
    turn.  Non-exact divisions leave the group untouched.
    """
    if not any(
        isinstance(t, (Prod, Pow))
        and _sum_den_signature(_mono_factors(t)[1])
        for t in terms
    ):
        return terms
    groups: dict[tuple, list[tuple[Fraction, dict[Expr, int]]]] = {}
    order: list[tuple] = []
    for t in terms:
        c, f = _mono_factors(t)
        sig = _sum_den_signature(f)
        if sig not in groups:
            groups[sig] = []
            order.append(sig)
        groups[sig].append((c, f))
    out: list[Expr] = []
    changed = False
    for sig in order:
        entries = groups[sig]
        if not sig:
            out.extend(_from_factors(c, f) for c, f in entries)
            continue
        # clear the sum denominators from every term of the group
        cleared: list[tuple[Fraction, dict[Expr, int]]] = []
        for c, f in entries:
            g = dict(f)
            for base, e in sig:
                g[base] = g.get(base, 0) - e  # remove the negative exponent
                if g[base] == 0:
                    del g[base]
            cleared.append((c, g))
        remaining: list[tuple[Expr, int]] = []
        for base, e in sig:
            depth = -e
            while depth > 0 and len(cleared) > 1:
                q = _poly_divide(cleared, base)
                if q is None:
                    break
                cleared = q
                changed = True
                depth -= 1
            if depth:
                remaining.append((base, -depth))
        if len(remaining) == len(sig) and all(
            r == s for r, s in zip(remaining, sig)
        ):
            out.extend(_from_factors(c, f) for c, f in entries)
            continue
        for c, f in cleared:
            g = dict(f)
            for base, e in remaining:
                g[base] = g.get(base, 0) + e
                if g[base] == 0:
                    del g[base]
            out.append(_from_factors(c, g))
    if not changed:
        return terms
    # regrouping may expose new like-monomial merges; fold them here
    acc: dict[Optional[Expr], Fraction] = {}
    for t in out:
        c, m = _coeff_mono(t)
        if c == 0:
            continue
        tot = acc.get(m, Fraction(0)) + c
        if tot == 0:
            acc.pop(m, None)
        else:
            acc[m] = tot
    return [_attach_coeff(c, m) for m, c in acc.items()]


def _poly_divide(
    num: list[tuple[Fraction, dict[Expr, int]]], den: Sum
) -> Optional[list[tuple[Fraction, dict[Expr, int]]]]:
    """Exact division of a Laurent polynomial by a canonical sum, or None.

    Uses long division under a lexicographic exponent-vector order, which
    is multiplicative, so an exact division terminates with the true
    quotient; anything else runs into the step cap and returns None.
    """
    den_terms = []
    for t in den.terms:
        c, f = _mono_factors(t)
        den_terms.append((c, f))

    bases: dict[Expr, int] = {}
    for _, f in list(num) + den_terms:
        for b in f:
            bases.setdefault(b, 0)
    ordered = sorted(bases, key=sort_key, reverse=True)
    for i, b in enumerate(ordered):
        bases[b] = i
    width = len(ordered)

    def vec(f: dict[Expr, int]) -> tuple[int, ...]:
        v = [0] * width
        for b, e in f.items():
            v[bases[b]] = e
        return tuple(v)

    den_vec = sorted(((vec(f), c, f) for c, f in den_terms), reverse=True)
    lead_v, lead_c, lead_f = den_vec[0]

    rem: dict[tuple[int, ...], tuple[Fraction, dict[Expr, int]]] = {}
    for c, f in num:
        k = vec(f)
        if k in rem:
            c = rem[k][0] + c
        if c == 0:
            rem.pop(k, None)
        else:
            rem[k] = (c, f)
    quotient: list[tuple[Fraction, dict[Expr, int]]] = []
    cap = 4 * (len(num) + len(den_terms)) + 16
    while rem:
        cap -= 1
        if cap < 0:
            return None
        k = max(rem)
        c, f = rem[k]
        qc = c / lead_c
        qf = dict(f)
        for b, e in lead_f.items():
            qf[b] = qf.get(b, 0) - e
            if qf[b] == 0:
                del qf[b]
        quotient.append((qc, qf))
        for _, dc, df in den_vec:
            nf = dict(qf)
            for b, e in df.items():
                nf[b] = nf.get(b, 0) + e
                if nf[b] == 0:
                    del nf[b]
            nk = vec(nf)
            nc = rem[nk][0] - qc * dc if nk in rem else -qc * dc
            if nc == 0:
                rem.pop(nk, None)
            else:
                rem[nk] = (nc, nf)
    return quotient


def make_prod(parts: Iterable[Expr]) -> Expr:
    coeff = Fraction(1)
    factors: dict[Expr, int] = {}

    def add_factor(b: Expr, e: int):
        nonlocal coeff
        if e == 0:
            return
        if isinstance(b, Rat):
            if b.value == 0 and e < 0:
                raise DivisionByZero(b)
            coeff *= b.value ** e
            return
        factors[b] = factors.get(b, 0) + e

    stack = list(parts)
    while stack:
        p = stack.pop()
        if isinstance(p, Rat):
            coeff *= p.value
        elif isinstance(p, Prod):
            coeff *= p.coeff
            for b, e in p.factors:
                add_factor(b, e)
        elif isinstance(p, Pow):
            add_factor(p.base, p.exp)
        else:
            add_factor(p, 1)
    if coeff == 0:
        return RAT_0

    resolved: dict[Expr, int] = {}
    for b, e in factors.items():
        if isinstance(b, AltSign):
            e %= 2
        if e:
            resolved[b] = e

    # exponent merging can stack sum denominators below -1; renormalize
    # each through make_pow so the canonical shape stays exponent -1
    for _ in range(16):
        bad = next((b for b, e in resolved.items()
                    if isinstance(b, Sum) and e < -1), None)
        if bad is None:
            break
        e = resolved.pop(bad)
        repl = make_pow(bad, e)
        if isinstance(repl, Rat):
            coeff *= repl.value
        elif isinstance(repl, Prod):
            coeff *= repl.coeff
            for b2, e2 in repl.factors:
                resolved[b2] = resolved.get(b2, 0) + e2
                if resolved[b2] == 0:
                    del resolved[b2]
        elif isinstance(repl, Pow):
            resolved[repl.base] = resolved.get(repl.base, 0) + repl.exp
            if resolved[repl.base] == 0:
                del resolved[repl.base]
        else:
            resolved[repl] = resolved.get(repl, 0) + 1
            if resolved[repl] == 0:
                del resolved[repl]
    else:
        raise ExprError("sum-denominator normalization did not settle")
    if coeff == 0:
        return RAT_0

    pos_sums = [(b, e) for b, e in resolved.items()
                if isinstance(b, Sum) and e > 0]
    if not pos_sums:
        return _from_factors(coeff, resolved)

    for b, _ in pos_sums:
        del resolved[b]
    kernel = _from_factors(coeff, resolved)
    terms = [kernel]
    for b, e in pos_sums:
        for _ in range(e):
            nxt = []
            for t in terms:
                for u in b.terms:
                    nxt.append(make_prod([t, u]))
            if len(nxt) > _EXPAND_GUARD:
                raise ExprError("product expansion exceeds size guard")
            terms = nxt
    return make_sum(terms)


def make_pow(base: Expr, exp) -> Expr:
    exp = _as_int_exponent(exp)
    if exp == 0:
        return RAT_1
    if exp == 1:
        return base
    if isinstance(base, Rat):
        if base.value == 0 and exp < 0:
            raise DivisionByZero(base)
        return Rat(base.value ** exp)
    if isinstance(base, AltSign):
        return base if exp % 2 else RAT_1
    if isinstance(base, Pow):
        return make_pow(base.base, base.exp * exp)
    if isinstance(base, Prod):
        parts: list[Expr] = [Rat(base.coeff ** exp)]
        parts.extend(make_pow(b, e * exp) for b, e in base.factors)
        return make_prod(parts)
    if isinstance(base, Sum):
        if exp > 1:
            return make_prod([base] * exp)
        if exp < -1:
            # canonical negative sum powers carry exponent -1 over the
            # expanded magnitude, so (1+n)^-2 and (1+2n+n^2)^-1 coincide
            return make_pow(make_prod([base] * (-exp)), -1)
        return _normalized_sum_power(base, exp)
    return Pow(base, exp)


def _as_int_exponent(exp) -> int:
    if isinstance(exp, int):
        return exp
    if isinstance(exp, Rat) and exp.value.denominator == 1:
        return exp.value.numerator
    if isinstance(exp, Fraction) and exp.denominator == 1:
        return exp.numerator
    from .errors import NonIntegerExponent

    raise NonIntegerExponent(f"exponent {exp} is not an integer")


def _normalized_sum_power(s: Sum, exp: int) -> Expr:
    """Build s**exp (exp < 0) with the base put in normal form."""
    den_depth: dict[Expr, int] = {}
    for t in s.terms:
        _, f = _mono_factors(t)
        for b, e in f.items():
            if e < 0:
                den_depth[b] = max(den_depth.get(b, 0), -e)
    parts: list[Expr] = []
    if den_depth:
        clear = _from_factors(Fraction(1), dict(den_depth))
        s = make_sum([make_prod([t, clear]) for t in s.terms])  # type: ignore
        parts.append(make_pow(clear, -exp))
        if not isinstance(s, Sum):
            parts.append(make_pow(s, exp))
            return make_prod(parts)
    coeffs = [_coeff_mono(t)[0] for t in s.terms]
    g = Fraction(math.gcd(*(c.numerator for c in coeffs)),
                 math.lcm(*(c.denominator for c in coeffs)))
    lead = min(s.terms, key=sort_key)
    if _coeff_mono(lead)[0] < 0:
        g = -g
    if g != 1:
        inv = Rat(1 / g)
        s = make_sum([make_prod([t, inv]) for t in s.terms])  # type: ignore
        parts.append(Rat(g ** exp))
        if not isinstance(s, Sum):
            parts.append(make_pow(s, exp))
            return make_prod(parts)
    parts.append(Pow(s, exp))
    return make_prod(parts) if len(parts) > 1 else parts[0]


def make_fnapp(fname: str, arg: Expr, dorder: int = 0) -> Expr:
    return FnApp(fname, canonicalize(arg), dorder)


def canonicalize(e: Expr) -> Expr:
    """Rebuild an expression through the canonicalizing constructors."""
    t = type(e)
    if t in (Rat, Pi, Index, AltSign, Var, Seq, Deriv):
        return e
    if t is FnApp:
        return FnApp(e.fname, canonicalize(e.arg), e.dorder)
    if t is Pow:
        return make_pow(canonicalize(e.base), e.exp)
    if t is Prod:
        parts: list[Expr] = [Rat(e.coeff)]
        parts.extend(make_pow(canonicalize(b), x) for b, x in e.factors)
        return make_prod(parts)
    if t is Sum:
        return make_sum([canonicalize(x) for x in e.terms])
    raise TypeError(t)


# ---------------------------------------------------------------------------
# traversal helpers
# ---------------------------------------------------------------------------


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    t = type(e)
    if t is FnApp:
        yield from walk(e.arg)
    elif t is Pow:
        yield from walk(e.base)
    elif t is Prod:
        for b, _ in e.factors:
            yield from walk(b)
    elif t is Sum:
        for x in e.terms:
            yield from walk(x)


def free_var_names(e: Expr) -> set[str]:
    return {a.name for a in walk(e) if isinstance(a, Var)}


def seq_atoms(e: Expr) -> set[Seq]:
    return {a for a in walk(e) if isinstance(a, Seq)}


def deriv_atoms(e: Expr) -> set[Deriv]:
    return {a for a in walk(e) if isinstance(a, Deriv)}


def fn_names(e: Expr) -> set[str]:
    return {a.fname for a in walk(e) if isinstance(a, FnApp)}


def contains(e: Expr, atom: Expr) -> bool:
    return any(x == atom for x in walk(e))


def count_occurrences(e: Expr, atom: Expr) -> int:
    return sum(1 for x in walk(e) if x == atom)


def replace_atoms(e: Expr, mapping: Mapping[Expr, Expr]) -> Expr:
    """Simultaneously replace atom nodes, rebuilding canonically."""
    if not mapping:
        return e
    t = type(e)
    if t in (Rat, Pi, Index, AltSign, Var, Seq, Deriv):
        return mapping.get(e, e)
    if e in mapping:  # allow whole-subtree replacement of FnApp atoms
        return mapping[e]
    if t is FnApp:
        return FnApp(e.fname, replace_atoms(e.arg, mapping), e.dorder)
    if t is Pow:
        return make_pow(replace_atoms(e.base, mapping), e.exp)
    if t is Prod:
        parts: list[Expr] = [Rat(e.coeff)]
        parts.extend(
            make_pow(replace_atoms(b, mapping), x) for b, x in e.factors
        )
        return make_prod(parts)
    if t is Sum:
        return make_sum([replace_atoms(x, mapping) for x in e.terms])
    raise TypeError(t)


def substitute(e: Expr, bindings: Mapping[str, Expr]) -> Expr:
    """Simultaneous substitution of named variables."""
    mapping = {Var(k): as_expr(v) for k, v in bindings.items()}
    return replace_atoms(e, mapping)


def shift_index(e: Expr, amount: int) -> Expr:
    """Shift the difference index: n, sequence offsets and (-1)^n."""
    if amount == 0:
        return e
    mapping: dict[Expr, Expr] = {}
    for a in walk(e):
        if isinstance(a, Seq):
            mapping[a] = Seq(a.name, a.offset + amount)
        elif isinstance(a, Index) and a.name == "n":
            mapping[a] = make_sum([N, rat(amount)])
        elif isinstance(a, AltSign):
            mapping[a] = ALT if amount % 2 == 0 else make_prod([RAT_M1, ALT])
    return replace_atoms(e, mapping)


def denominator_bases(e: Expr) -> set[Expr]:
    """All bases appearing with a negative exponent anywhere in e."""
    out: set[Expr] = set()

    def visit(x: Expr):
        t = type(x)
        if t is Pow:
            if x.exp < 0:
                out.add(x.base)
            visit(x.base)
        elif t is Prod:
            for b, ex in x.factors:
                if ex < 0:
                    out.add(b)
                visit(b)
        elif t is Sum:
            for u in x.terms:
                visit(u)
        elif t is FnApp:
            visit(x.arg)

    visit(e)
    return out


# ---------------------------------------------------------------------------
# side conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SideCondition:
    """A nonvanishing requirement accumulated during partial inversion."""

    expr: Expr
    relation: str = "nonzero"

    def __str__(self) -> str:
        return f"{to_text(self.expr)} != 0"


def side_conditions_of(e: Expr, registry: "FnRegistry | None" = None) -> frozenset[SideCondition]:
    """Nonvanishing conditions for every denominator of e.

    Constants, pi and the alternating sign can never vanish and are
    skipped, as are function symbols declared nonvanishing.
    """
    conds = set()
    for b in denominator_bases(e):
        if isinstance(b, (Rat, Pi, AltSign)):
            continue
        if (
            isinstance(b, FnApp)
            and registry is not None
            and registry.is_nonvanishing(b.fname)
        ):
            continue
        conds.add(SideCondition(b))
    return frozenset(conds)


# ---------------------------------------------------------------------------
# function symbol registry
# ---------------------------------------------------------------------------

_BUILTIN_FNS = ("sin", "cos", "exp")


@dataclass
class FnSymbol:
    name: str
    inverse_name: Optional[str] = None
    deriv: Optional[Expr] = None  # closed form in the formal variable
    defn: Optional[Expr] = None  # definition in the formal variable
    formal: str = "u"
    nonvanishing: bool = False
    builtin: bool = False


class FnRegistry:
    """Declared function symbols plus the builtins sin, cos, exp."""

    def __init__(self):
        self._symbols: dict[str, FnSymbol] = {}
        for b in _BUILTIN_FNS:
            self._symbols[b] = FnSymbol(name=b, builtin=True)

    def declare(
        self,
        name: str,
        inverse: Optional[str] = None,
        deriv: Optional[Expr] = None,
        defn: Optional[Expr] = None,
        formal: str = "u",
        nonvanishing: bool = False,
    ) -> FnSymbol:
        sym = FnSymbol(name, inverse, deriv, defn, formal, nonvanishing)
        self._symbols[name] = sym
        if inverse:
            other = self._symbols.get(inverse)
            if other is None:
                self._symbols[inverse] = FnSymbol(inverse, inverse_name=name)
            elif other.inverse_name is None:
                other.inverse_name = name
        return sym

    def known(self, name: str) -> bool:
        return name in self._symbols

    def get(self, name: str) -> Optional[FnSymbol]:
        return self._symbols.get(name)

    def inverse_of(self, name: str) -> Optional[str]:
        sym = self._symbols.get(name)
        return sym.inverse_name if sym else None

    def is_nonvanishing(self, name: str) -> bool:
        sym = self._symbols.get(name)
        return bool(sym and sym.nonvanishing)

    def symbols(self) -> Iterator[FnSymbol]:
        return (s for s in self._symbols.values() if not s.builtin)

    def copy(self) -> "FnRegistry":
        r = FnRegistry()
        for s in self.symbols():
            r._symbols[s.name] = FnSymbol(
                s.name, s.inverse_name, s.deriv, s.defn, s.formal, s.nonvanishing
            )
        return r


# ---------------------------------------------------------------------------
# numeric / exact evaluation
# ---------------------------------------------------------------------------

_TRANSCENDENTAL = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


def is_exact_candidate(e: Expr) -> bool:
    """True when e involves no pi and no transcendental builtin."""
    for x in walk(e):
        if isinstance(x, Pi):
            return False
        if isinstance(x, FnApp) and x.fname in _TRANSCENDENTAL:
            return False
    return True


def eval_expr(
    e: Expr,
    env: Mapping[str, Number],
    index_value: Optional[Number] = None,
    registry: Optional[FnRegistry] = None,
    seq: Optional[Callable[[str, int], Number]] = None,
    deriv: Optional[Callable[[str, int], Number]] = None,
):
    """Evaluate with exact Fraction arithmetic where inputs permit.

    `seq(name, offset)` and `deriv(name, order)` supply sequence and
    derivative atoms; plain variables come from `env`.
    """
    t = type(e)
    if t is Rat:
        return e.value
    if t is Pi:
        return math.pi
    if t is Index:
        if index_value is None:
            raise UnboundVariable(e.name)
        return index_value
    if t is AltSign:
        if index_value is None:
            raise UnboundVariable("n")
        m = index_value
        if isinstance(m, float):
            m = round(m)
        elif isinstance(m, Fraction):
            if m.denominator != 1:
                raise ExprError("(-1)^n needs an integer index")
            m = m.numerator
        return 1 if m % 2 == 0 else -1
    if t is Var:
        if e.name in env:
            return env[e.name]
        raise UnboundVariable(e.name)
    if t is Seq:
        if seq is None:
            raise UnboundVariable(f"{e.name}[n{e.offset:+d}]")
        return seq(e.name, e.offset)
    if t is Deriv:
        if deriv is None:
            raise UnboundVariable(e.name + "'" * e.order)
        return deriv(e.name, e.order)
    if t is FnApp:
        a = eval_expr(e.arg, env, index_value, registry, seq, deriv)
        return _eval_fnapp(e, a, registry)
    if t is Pow:
        b = eval_expr(e.base, env, index_value, registry, seq, deriv)
        if e.exp < 0 and b == 0:
            raise DivisionByZero(e.base)
        return b ** e.exp
    if t is Prod:
        acc: Number = e.coeff
        for b, ex in e.factors:
            v = eval_expr(b, env, index_value, registry, seq, deriv)
            if ex < 0 and v == 0:
                raise DivisionByZero(b)
            acc *= v ** ex
        return acc
    if t is Sum:
        acc = Fraction(0)
        for x in e.terms:
            acc += eval_expr(x, env, index_value, registry, seq, deriv)
        return acc
    raise TypeError(t)


def _eval_fnapp(e: FnApp, argval: Number, registry: Optional[FnRegistry]):
    if e.fname in _TRANSCENDENTAL and e.dorder == 0:
        return _TRANSCENDENTAL[e.fname](float(argval))
    if e.fname in _TRANSCENDENTAL:
        # derivative chains of builtins are expanded by differentiate();
        # a primed builtin atom should not survive to evaluation
        raise MissingDerivative(e.fname, e.dorder)
    sym = registry.get(e.fname) if registry else None
    if sym is None:
        raise MissingDefinition(e.fname)
    body: Optional[Expr] = None
    if e.dorder == 0:
        body = sym.defn
    else:
        from .calculus import partial_derivative

        if sym.defn is not None:
            body = sym.defn
            for _ in range(e.dorder):
                body = partial_derivative(body, sym.formal, registry)
        elif sym.deriv is not None:
            body = sym.deriv
            for _ in range(e.dorder - 1):
                body = partial_derivative(body, sym.formal, registry)
        else:
            raise MissingDerivative(e.fname, e.dorder)
    if body is None:
        raise MissingDefinition(e.fname)
    return eval_expr(body, {sym.formal: argval}, None, registry)


def eval_exact(
    e: Expr,
    env: Mapping[str, Fraction],
    index_value: Optional[Fraction] = None,
    registry: Optional[FnRegistry] = None,
    seq: Optional[Callable[[str, int], Fraction]] = None,
) -> Fraction:
    """Exact evaluation through unnormalized integer pairs.

    Equivalent to eval_expr on all-rational input but performs a single
    gcd normalization on the final value instead of one per operation,
    which matters a great deal on orbits whose terms grow quickly.
    """
    num, den = _eval_pair(e, env, index_value, registry, seq)
    return Fraction(num, den)


def _eval_pair(e, env, index_value, registry, seq) -> tuple[int, int]:
    t = type(e)
    if t is Rat:
        return e.value.numerator, e.value.denominator
    if t is Index:
        if index_value is None:
            raise UnboundVariable(e.name)
        f = Fraction(index_value)
        return f.numerator, f.denominator
    if t is AltSign:
        if index_value is None:
            raise UnboundVariable("n")
        m = Fraction(index_value)
        if m.denominator != 1:
            raise ExprError("(-1)^n needs an integer index")
        return (1 if m.numerator % 2 == 0 else -1), 1
    if t is Var:
        if e.name in env:
            f = env[e.name]
            return f.numerator, f.denominator
        raise UnboundVariable(e.name)
    if t is Seq:
        if seq is None:
            raise UnboundVariable(f"{e.name}[n{e.offset:+d}]")
        f = seq(e.name, e.offset)
        return f.numerator, f.denominator
    if t is FnApp:
        an, ad = _eval_pair(e.arg, env, index_value, registry, seq)
        val = _eval_fnapp(e, Fraction(an, ad), registry)
        f = Fraction(val)
        return f.numerator, f.denominator
    if t is Pow:
        bn, bd = _eval_pair(e.base, env, index_value, registry, seq)
        if e.exp < 0:
            if bn == 0:
                raise DivisionByZero(e.base)
            return bd ** -e.exp, bn ** -e.exp
        return bn ** e.exp, bd ** e.exp
    if t is Prod:
        num, den = e.coeff.numerator, e.coeff.denominator
        for b, ex in e.factors:
            bn, bd = _eval_pair(b, env, index_value, registry, seq)
            if ex < 0:
                if bn == 0:
                    raise DivisionByZero(b)
                bn, bd = bd ** -ex, bn ** -ex
            else:
                bn, bd = bn ** ex, bd ** ex
            num *= bn
            den *= bd
        return num, den
    if t is Sum:
        num, den = 0, 1
        for x in e.terms:
            xn, xd = _eval_pair(x, env, index_value, registry, seq)
            num = num * xd + xn * den
            den *= xd
        return num, den
    if t is Pi:
        raise ExprError("pi is not exactly representable")
    if t is Deriv:
        raise UnboundVariable(e.name + "'" * e.order)
    raise TypeError(t)


def exact_is_zero(
    e: Expr,
    env: Mapping[str, Fraction],
    index_value: Optional[Fraction] = None,
    registry: Optional[FnRegistry] = None,
    seq: Optional[Callable[[str, int], Fraction]] = None,
) -> bool:
    """Exact zero test without any normalization at all."""
    num, _ = _eval_pair(e, env, index_value, registry, seq)
    return num == 0


def eval_numeric(
    e: Expr,
    bindings: Mapping[str, Number],
    n_or_t: Optional[Number] = None,
    registry: Optional[FnRegistry] = None,
):
    """Public evaluation entry point for closed expressions.

    Exact rational arithmetic is used whenever every binding is rational
    and the expression is free of pi and transcendental functions;
    otherwise the result is a float.
    """
    exact = is_exact_candidate(e) and all(
        not isinstance(v, float) for v in bindings.values()
    ) and not isinstance(n_or_t, float)
    if exact:
        env = {k: Fraction(v) for k, v in bindings.items()}
        idx = None if n_or_t is None else Fraction(n_or_t)
        return eval_expr(e, env, idx, registry)
    env = {k: float(v) for k, v in bindings.items()}
    idx = None if n_or_t is None else float(n_or_t)
    return eval_expr(e, env, idx, registry)


# ---------------------------------------------------------------------------
# printing (text re-parses under the package grammar)
# ---------------------------------------------------------------------------


def _atom_text(e: Expr) -> str:
    t = type(e)
    if t is Rat:
        return str(e.value)
    if t is Pi:
        return "pi"
    if t is Index:
        return e.name
    if t is AltSign:
        return "sgn_n"
    if t is Var:
        return e.name
    if t is Seq:
        if e.offset == 0:
            return f"{e.name}[n]"
        return f"{e.name}[n{e.offset:+d}]"
    if t is Deriv:
        return e.name + "'" * e.order
    if t is FnApp:
        return f"{e.fname}{chr(39) * e.dorder}({to_text(e.arg)})"
    if t is Sum:
        return "(" + to_text(e) + ")"
    raise TypeError(t)


def _power_text(base: Expr, exp: int) -> str:
    b = _atom_text(base)
    if exp == 1:
        return b
    return f"{b}^{exp}"


def _product_text(coeff: Fraction, factors: Iterable[tuple[Expr, int]]) -> str:
    num_parts: list[str] = []
    den_parts: list[str] = []
    c_num, c_den = abs(coeff.numerator), coeff.denominator
    for b, e in factors:
        if e > 0:
            num_parts.append(_power_text(b, e))
        else:
            den_parts.append(_power_text(b, -e))
    if c_num != 1 or not num_parts:
        num_parts.insert(0, str(c_num))
    if c_den != 1:
        den_parts.insert(0, str(c_den))
    num = "*".join(num_parts)
    if not den_parts:
        text = num
    elif len(den_parts) == 1:
        text = f"{num}/{den_parts[0]}"
    else:
        text = f"{num}/({'*'.join(den_parts)})"
    return ("-" if coeff < 0 else "") + text


def _term_text(e: Expr) -> tuple[bool, str]:
    """Return (negative, absolute text) for use inside sums."""
    c, m = _coeff_mono(e)
    if m is None:
        return c < 0, str(abs(c))
    if isinstance(m, Prod):
        return c < 0, _product_text(abs(c), m.factors)
    if isinstance(m, Pow):
        return c < 0, _product_text(abs(c), ((m.base, m.exp),))
    if c == 1:
        return False, _atom_text(m)
    return c < 0, _product_text(abs(c), ((m, 1),))


def to_text(e: Expr) -> str:
    t = type(e)
    if t is Sum:
        first = True
        out: list[str] = []
        for term in e.terms:
            neg, txt = _term_text(term)
            if first:
                out.append(("-" if neg else "") + txt)
                first = False
            else:
                out.append((" - " if neg else " + ") + txt)
        return "".join(out)
    if t is Prod:
        return _product_text(e.coeff, e.factors)
    if t is Pow:
        return _product_text(Fraction(1), ((e.base, e.exp),))
    return _atom_text(e)
