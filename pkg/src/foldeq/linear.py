"""Closed-form foldings of 2x2 linear systems and the eigensequence
machinery for second-order linear difference equations with periodic
coefficients.

The linear system

    x[n+1] = a_n x[n] + b_n y[n] + alpha_n
    y[n+1] = c_n x[n] + d_n y[n] + beta_n

folds into x[n+2] = A_n x[n+1] + B_n x[n] + C_n whenever b_n never
vanishes, with y recovered passively; a constant b gives the recursive
form directly, and a b that vanishes somewhere leaves a non-recursive
equation with y recovered by a driven first-order recurrence.

For periodic (A_n, B_n) the equation factors into a triangular pair of
first-order equations once a unitary eigensequence of the quadratic
characteristic recurrence is found.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

from .errors import (
    ComplexRoots,
    ExprError,
    NonPeriodicEigensequence,
    ZeroEigenvalue,
)
from .expr import (
    Deriv,
    Expr,
    FnRegistry,
    Rat,
    Seq,
    SideCondition,
    Var,
    make_pow,
    make_prod,
    make_sum,
    rat,
    shift_index,
    side_conditions_of,
)
from .calculus import total_derivative
from .systems import (
    DiffSystem,
    Folding,
    HigherOrderEq,
    OdeSystem,
    PassiveEq,
    make_system,
)

Coefficient = Union[Expr, Sequence]

_COEF_NAMES = ("a", "b", "c", "d", "alpha", "beta")


@dataclass
class LinearSystem2:
    """Coefficient bundle of the 2x2 linear system.

    Each entry is a closed-form expression in n (or t for the
    differential case) or an explicit period list of numbers.
    """

    a: Coefficient
    b: Coefficient
    c: Coefficient
    d: Coefficient
    alpha: Coefficient
    beta: Coefficient
    params: dict[str, Optional[Fraction]] = field(default_factory=dict)
    registry: FnRegistry = field(default_factory=FnRegistry)

    def coefficients(self) -> dict[str, Coefficient]:
        return {k: getattr(self, k) for k in _COEF_NAMES}

    def swapped(self) -> "LinearSystem2":
        return LinearSystem2(self.d, self.c, self.b, self.a, self.beta,
                             self.alpha, dict(self.params), self.registry)

    def has_lists(self) -> bool:
        return any(not isinstance(getattr(self, k), Expr) for k in _COEF_NAMES)

    def to_diff_system(self, names: tuple[str, str] = ("x", "y")) -> DiffSystem:
        """The same system as a plain DiffSystem (expression entries only)."""
        cs = {k: _require_expr(v, k) for k, v in self.coefficients().items()}
        x, y = Var(names[0]), Var(names[1])
        rhs1 = make_sum([make_prod([cs["a"], x]), make_prod([cs["b"], y]), cs["alpha"]])
        rhs2 = make_sum([make_prod([cs["c"], x]), make_prod([cs["d"], y]), cs["beta"]])
        return make_system(list(names), [rhs1, rhs2], "recursive",
                           self.params, registry=self.registry)

    def to_ode_system(self) -> OdeSystem:
        cs = {k: _require_expr(v, k) for k, v in self.coefficients().items()}
        x, y = Var("x"), Var("y")
        rhs1 = make_sum([make_prod([cs["a"], x]), make_prod([cs["b"], y]), cs["alpha"]])
        rhs2 = make_sum([make_prod([cs["c"], x]), make_prod([cs["d"], y]), cs["beta"]])
        return make_system(["x", "y"], [rhs1, rhs2], "ode",
                           self.params, registry=self.registry)


def _require_expr(v: Coefficient, name: str) -> Expr:
    if isinstance(v, Expr):
        return v
    raise ExprError(f"coefficient {name} is a period list; expression required here")


@dataclass
class PeriodicLinearEq:
    """x[n+2] = A_n x[n+1] + B_n x[n] + C_n with period-p coefficients."""

    p: int
    A: tuple
    B: tuple
    C: tuple

    def __post_init__(self):
        if self.p < 1 or not (len(self.A) == len(self.B) == len(self.C) == self.p):
            raise ExprError("period lists must share length p >= 1")


@dataclass
class EigenFactorization:
    alpha_table: tuple  # indices 0..p+1
    beta_table: tuple
    quad: tuple  # (q2, q1, q0)
    roots: tuple  # both roots, ascending
    root_choice: int
    r_seq: tuple  # r_1..r_p
    growth_factor: float
    factor_pair: tuple[str, str]
    eq: PeriodicLinearEq


@dataclass
class LinearFoldResult:
    case: str  # "a" | "b" | "c"
    swapped: bool
    folding: Optional[Folding]
    periodic: Optional[PeriodicLinearEq]
    A: Optional[Coefficient]
    B: Optional[Coefficient]
    C: Optional[Coefficient]
    recovery: str  # "passive" | "first-order" | "periodic-passive"
    implicit_lhs: Optional[Expr] = None
    implicit_rhs: Optional[Expr] = None
    notes: str = ""


def _is_zero_expr(e: Coefficient) -> bool:
    return isinstance(e, Expr) and e == Rat(Fraction(0))


def _constant_value(e: Coefficient) -> Optional[Fraction]:
    if isinstance(e, Rat):
        return e.value
    if not isinstance(e, Expr):
        vals = list(e)
        if vals and all(v == vals[0] for v in vals):
            return Fraction(vals[0])
    return None


# ---------------------------------------------------------------------------
# discrete case
# ---------------------------------------------------------------------------


def fold_linear_2d(sys: LinearSystem2) -> LinearFoldResult:
    """Fold the linear difference system, reporting which case fired.

    Case (a): b never vanishes (elementwise for lists, recorded as a
    side condition for symbolic closed forms).  Case (b): b vanishes
    somewhere without being constant; the x-equation is non-recursive.
    Case (c): b constant; the recursive form with passive recovery when
    b is nonzero, first-order recovery when b = 0.  A vanishing b with
    a usable c swaps the roles of x and y.
    """
    return _fold_linear(sys, swapped=False)


def _fold_linear(sys: LinearSystem2, swapped: bool) -> LinearFoldResult:
    b_const = _constant_value(sys.b)
    if b_const == 0 and not swapped:
        c_const = _constant_value(sys.c)
        if not (_is_zero_expr(sys.c) or c_const == 0):
            res = _fold_linear(sys.swapped(), swapped=True)
            res.notes = (res.notes + " pivot swapped: b = 0, roles of x and y "
                         "interchanged").strip()
            return res

    if sys.has_lists():
        return _fold_linear_lists(sys, swapped)

    cs = sys.coefficients()
    a, b, c, d = cs["a"], cs["b"], cs["c"], cs["d"]
    alpha, beta = cs["alpha"], cs["beta"]
    pivot, other = ("y", "x") if swapped else ("x", "y")
    diff_sys = sys.to_diff_system((pivot, other))

    if b_const is not None:
        # constant b: recursive form, trace/determinant visible
        A = make_sum([shift_index(a, 1), d])
        B = make_sum([make_prod([b, c]), make_prod([rat(-1), d, a])])
        C = make_sum([make_prod([rat(-1), d, alpha]), make_prod([b, beta]),
                      shift_index(alpha, 1)])
        case = "c"
    else:
        a1, b1 = shift_index(a, 1), shift_index(b, 1)
        binv = make_pow(b, -1)
        A = make_sum([a1, make_prod([b1, d, binv])])
        B = make_prod([b1, make_sum([c, make_prod([rat(-1), d, binv, a])])])
        C = make_sum([make_prod([b1, make_sum([beta, make_prod([rat(-1), d, binv, alpha])])]),
                      shift_index(alpha, 1)])
        case = "a"

    s0, s1 = Seq("s", 0), Seq("s", 1)
    eq_rhs = make_sum([make_prod([A, s1]), make_prod([B, s0]), C])
    conditions: set[SideCondition] = set(side_conditions_of(eq_rhs, sys.registry))

    if b_const == 0:
        aux = make_sum([make_prod([d, Seq(other, 0)]), make_prod([c, s0]), beta])
        passive = (PassiveEq(other, aux, "auxiliary"),)
        recovery = "first-order"
    else:
        h = make_prod([make_sum([s1, make_prod([rat(-1), a, s0]),
                                 make_prod([rat(-1), alpha])]), make_pow(b, -1)])
        passive = (PassiveEq(other, h, "passive"),)
        recovery = "passive"
        conditions |= side_conditions_of(h, sys.registry)
        if b_const is None:
            conditions.add(SideCondition(b))

    kappa = 2
    equation = HigherOrderEq(kappa, eq_rhs, "difference", "s",
                             dict(sys.params), sys.registry)
    from .folding import _init_map

    folding = Folding(
        equation=equation,
        pivot=pivot,
        passive=passive,
        init_map=_init_map(diff_sys, pivot, kappa),
        side_conditions=frozenset(conditions),
        kappa=kappa,
        case=case,
    )
    return LinearFoldResult(case, swapped, folding, None, A, B, C, recovery)


def _fold_linear_lists(sys: LinearSystem2, swapped: bool) -> LinearFoldResult:
    """Period-list coefficients: emit the periodic equation (aln)."""
    lists = {}
    p = 1
    for k, v in sys.coefficients().items():
        if isinstance(v, Expr):
            cv = _constant_value(v)
            if cv is None:
                raise ExprError(
                    f"coefficient {k}: cannot mix closed forms with period lists"
                )
            lists[k] = [cv]
        else:
            lists[k] = [Fraction(x) if not isinstance(x, float) else x for x in v]
        p = p * len(lists[k]) // math.gcd(p, len(lists[k]))
    at = {k: (lambda vs: (lambda n: vs[n % len(vs)]))(vs) for k, vs in lists.items()}

    b_vals = [at["b"](n) for n in range(p)]
    if any(v == 0 for v in b_vals):
        if all(v == 0 for v in b_vals):
            raise ExprError("b vanishes identically; swap was not applicable")
        # case (b): the equation b_n x[n+2] = P_n x[n+1] + Q_n x[n] + R_n
        # is not recursive; report its coefficient lists and fall back to
        # first-order recovery of y
        P = [at["b"](n) * at["a"]((n + 1) % p) + at["b"]((n + 1) % p) * at["d"](n)
             for n in range(p)]
        Q = [at["b"]((n + 1) % p) * (at["b"](n) * at["c"](n) - at["d"](n) * at["a"](n))
             for n in range(p)]
        R = [-at["b"]((n + 1) % p) * (at["d"](n) * at["alpha"](n) - at["b"](n) * at["beta"](n))
             + at["b"](n) * at["alpha"]((n + 1) % p) for n in range(p)]
        return LinearFoldResult(
            "b", swapped, None, None, tuple(P), tuple(Q), tuple(R),
            "first-order",
            notes=(f"non-recursive: lhs coefficient list b = {b_vals} multiplies "
                   "s[n+2]; y recovered by y[n+1] = d_n*y[n] + c_n*s[n] + beta_n"),
        )

    A = [at["a"]((n + 1) % p) + at["b"]((n + 1) % p) * at["d"](n) / at["b"](n)
         for n in range(p)]
    B = [at["b"]((n + 1) % p) * (at["c"](n) - at["d"](n) * at["a"](n) / at["b"](n))
         for n in range(p)]
    C = [at["b"]((n + 1) % p) * (at["beta"](n) - at["d"](n) * at["alpha"](n) / at["b"](n))
         + at["alpha"]((n + 1) % p) for n in range(p)]
    eq = PeriodicLinearEq(p, tuple(A), tuple(B), tuple(C))
    return LinearFoldResult("a", swapped, None, eq, tuple(A), tuple(B), tuple(C),
                            "periodic-passive",
                            notes=f"period {p} coefficient lists")


def fold_linear_2d_exprs(
    a: Expr, b: Expr, c: Expr, d: Expr, alpha: Expr, beta: Expr,
    params=None, registry=None,
) -> LinearFoldResult:
    sys = LinearSystem2(a, b, c, d, alpha, beta, dict(params or {}),
                        registry or FnRegistry())
    return fold_linear_2d(sys)


def implicit_linear_fold(sys: LinearSystem2) -> tuple[Expr, Expr]:
    """The non-recursive case (b) pair: (b_n*x[n+2], rhs of (bnu1))."""
    cs = {k: _require_expr(v, k) for k, v in sys.coefficients().items()}
    a, b, c, d = cs["a"], cs["b"], cs["c"], cs["d"]
    alpha, beta = cs["alpha"], cs["beta"]
    a1, b1, alpha1 = shift_index(a, 1), shift_index(b, 1), shift_index(alpha, 1)
    s0, s1, s2 = Seq("s", 0), Seq("s", 1), Seq("s", 2)
    lhs = make_prod([b, s2])
    rhs = make_sum([
        make_prod([make_sum([make_prod([b, a1]), make_prod([b1, d])]), s1]),
        make_prod([b1, make_sum([make_prod([b, c]), make_prod([rat(-1), d, a])]), s0]),
        make_prod([rat(-1), b1, make_sum([make_prod([d, alpha]),
                                          make_prod([rat(-1), b, beta])])]),
        make_prod([b, alpha1]),
    ])
    return lhs, rhs


# ---------------------------------------------------------------------------
# differential case
# ---------------------------------------------------------------------------


def fold_linear_ode_2d(sys: LinearSystem2) -> Folding:
    """Closed-form fold of the linear differential system.

    b(t) nonzero (or symbolic): x'' = (a+d+b'/b) x' + (bc-ad+a'-b'a/b) x
    - d alpha + b beta - b' alpha / b + alpha', with passive
    y = (x' - a x - alpha)/b.  A constant zero b leaves y to the second
    system equation as a driven first-order ODE.
    """
    cs = {k: _require_expr(v, k) for k, v in sys.coefficients().items()}
    a, b, c, d = cs["a"], cs["b"], cs["c"], cs["d"]
    alpha, beta = cs["alpha"], cs["beta"]
    reg = sys.registry
    da = total_derivative(a, (), reg)
    dalpha = total_derivative(alpha, (), reg)
    x, x1 = Var("x"), Deriv("x", 1)

    conditions: set[SideCondition] = set()
    if b == Rat(Fraction(0)):
        coef_x1 = make_sum([a, d])
        coef_x = make_sum([make_prod([rat(-1), a, d]), da])
        free = make_sum([make_prod([rat(-1), d, alpha]), dalpha])
        aux = make_sum([make_prod([c, x]), make_prod([d, Var("y")]), beta])
        passive = (PassiveEq("y", aux, "auxiliary"),)
    else:
        db = total_derivative(b, (), reg)
        binv = make_pow(b, -1)
        coef_x1 = make_sum([a, d, make_prod([db, binv])])
        coef_x = make_sum([make_prod([b, c]), make_prod([rat(-1), a, d]), da,
                           make_prod([rat(-1), db, a, binv])])
        free = make_sum([make_prod([rat(-1), d, alpha]), make_prod([b, beta]),
                         make_prod([rat(-1), db, alpha, binv]), dalpha])
        h = make_prod([make_sum([x1, make_prod([rat(-1), a, x]),
                                 make_prod([rat(-1), alpha])]), binv])
        passive = (PassiveEq("y", h, "passive"),)
        conditions |= side_conditions_of(h, reg)
        if not isinstance(b, Rat):
            conditions.add(SideCondition(b))

    eq_rhs = make_sum([make_prod([coef_x1, x1]), make_prod([coef_x, x]), free])
    conditions |= side_conditions_of(eq_rhs, reg)
    equation = HigherOrderEq(2, eq_rhs, "ode", "x", dict(sys.params), reg)
    ode_sys = sys.to_ode_system()
    from .odefold import _ode_init_map

    return Folding(
        equation=equation,
        pivot="x",
        passive=passive,
        init_map=_ode_init_map(ode_sys, "x", 2),
        side_conditions=frozenset(conditions),
        kappa=2,
        case="b-constant" if isinstance(b, Rat) else "b-nonvanishing",
    )


# ---------------------------------------------------------------------------
# eigensequences and semiconjugate factorization
# ---------------------------------------------------------------------------


def iterate_periodic(eq: PeriodicLinearEq, x0, x1, n_steps: int) -> list:
    """Directly iterate x[n+2] = A_n x[n+1] + B_n x[n] + C_n."""
    xs = [x0, x1]
    for n in range(n_steps - 1):
        i = n % eq.p
        xs.append(eq.A[i] * xs[-1] + eq.B[i] * xs[-2] + eq.C[i])
    return xs[: n_steps + 1]


def eigenseq_tables(eq: PeriodicLinearEq) -> tuple[tuple, tuple]:
    """alpha/beta tables 0..p+1 from the homogeneous part.

    Both sequences iterate v[j+2] = A_j v[j+1] + B_j v[j]; alpha starts
    (0, 1), beta starts (1, 0).
    """
    alpha = [_like(eq.A[0], 0), _like(eq.A[0], 1)]
    beta = [_like(eq.A[0], 1), _like(eq.A[0], 0)]
    for j in range(eq.p):
        alpha.append(eq.A[j] * alpha[-1] + eq.B[j] * alpha[-2])
        beta.append(eq.A[j] * beta[-1] + eq.B[j] * beta[-2])
    return tuple(alpha), tuple(beta)


def _like(sample, value: int):
    return float(value) if isinstance(sample, float) else Fraction(value)


def eigensequence(eq: PeriodicLinearEq, root_choice: int = 0) -> EigenFactorization:
    """Unitary eigensequence and triangular factor pair of the equation.

    The quadratic alpha_p r^2 + (beta_p - alpha_{p+1}) r - beta_{p+1} is
    solved in floating point; the chosen root seeds r_{j+1} = A_{j-1} +
    B_{j-1}/r_j.  Every r_j must stay away from zero and the sequence
    must close up to period p.
    """
    if root_choice not in (0, 1):
        raise ExprError("root_choice must be 0 or 1")
    alpha, beta = eigenseq_tables(eq)
    p = eq.p
    q2 = float(alpha[p])
    q1 = float(beta[p] - alpha[p + 1])
    q0 = float(-beta[p + 1])
    if abs(q2) < 1e-300:
        if q1 == 0:
            raise ComplexRoots("degenerate characteristic quadratic")
        r = -q0 / q1
        roots = (r, r)
    else:
        disc = q1 * q1 - 4.0 * q2 * q0
        if disc < 0:
            raise ComplexRoots(f"negative discriminant {disc}")
        sq = math.sqrt(disc)
        roots = tuple(sorted(((-q1 - sq) / (2 * q2), (-q1 + sq) / (2 * q2))))

    r1 = roots[root_choice]
    if abs(r1) <= 1e-12:
        raise ZeroEigenvalue(1, r1)
    r_seq = [r1]
    for j in range(1, p):
        nxt = float(eq.A[j - 1]) + float(eq.B[j - 1]) / r_seq[-1]
        if abs(nxt) <= 1e-12:
            raise ZeroEigenvalue(j + 1, nxt)
        r_seq.append(nxt)
    wrap = float(eq.A[p - 1]) + float(eq.B[p - 1]) / r_seq[-1]
    if abs(wrap - r1) > 1e-9:
        raise NonPeriodicEigensequence(
            f"r_{p + 1} = {wrap} does not return to r_1 = {r1}"
        )

    prod_r = math.prod(r_seq)
    prod_b = math.prod(float(b) for b in eq.B)
    growth = (-1.0) ** p * prod_b / prod_r

    pair = (
        "t[n+1] = C[n-1] - B[n-1]*t[n]/r[n]",
        "x[n+1] = r[n+1]*x[n] + t[n+1]",
    )
    return EigenFactorization(alpha, beta, (q2, q1, q0), roots, root_choice,
                              tuple(r_seq), growth, pair, eq)


def iterate_factor_pair(fac: EigenFactorization, x0, x1, n_steps: int) -> list[float]:
    """Co-iterate the triangular pair from x0, x1; returns x_0..x_N."""
    eq = fac.eq
    p = eq.p

    def r(n: int) -> float:  # r_n, 1-based, period p
        return fac.r_seq[(n - 1) % p]

    xs = [float(x0), float(x1)]
    t = xs[1] - r(1) * xs[0]  # t_1
    for n in range(1, n_steps):
        t = float(eq.C[(n - 1) % p]) - float(eq.B[(n - 1) % p]) / r(n) * t
        xs.append(r(n + 1) * xs[-1] + t)
    return xs[: n_steps + 1]
