"""Folding differential systems and the fixed-step flow oracle.

The differential analog of the folding algorithm replaces index shifts
with total derivatives: differentiate the pivot equation, substitute the
system right-hand sides for the other variables' derivatives, and
eliminate one surviving variable per level by partial inversion.

The integrator is classical fixed-step RK4; folded equations integrate
through their first-order companion form, with auxiliary recovery
variables co-integrated after the companion block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

from .calculus import total_derivative
from .errors import DivisionByZero, ExprError, NotFoldable, NotIsolatable
from .expr import (
    Deriv,
    Expr,
    SideCondition,
    Var,
    contains,
    deriv_atoms,
    eval_expr,
    free_var_names,
    side_conditions_of,
    substitute,
    to_text,
)
from .solve import solve_for
from .systems import Folding, HigherOrderEq, OdeSystem, PassiveEq

OdeFolding = Folding

SINGULAR_EPS = 1e-9
MAX_FOLD_DEPTH = 3


def _unresolved(e: Expr, sys: OdeSystem, pivot: str) -> list[str]:
    present = free_var_names(e)
    return [v for v in sys.vars if v != pivot and v in present]


def _ode_init_map(sys: OdeSystem, pivot: str, kappa: int) -> tuple[Expr, ...]:
    """Successive flow derivatives of the pivot in terms of the state."""
    deriv_subst = {Deriv(v, 1): r for v, r in zip(sys.vars, sys.rhs)}
    cur: Expr = Var(pivot)
    out = [cur]
    for _ in range(kappa - 1):
        cur = total_derivative(cur, sys.vars, sys.registry)
        from .expr import replace_atoms

        cur = replace_atoms(cur, deriv_subst)
        out.append(cur)
    return tuple(out)


def fold_ode(sys: OdeSystem, pivot: Optional[str] = None) -> Folding:
    """Fold a differential system around the pivot variable (k <= 3)."""
    from .expr import replace_atoms

    if sys.kind != "ode":
        raise ExprError("fold_ode applies to differential systems")
    if sys.k > MAX_FOLD_DEPTH:
        raise ExprError(f"differential folding is capped at k = {MAX_FOLD_DEPTH}")
    pivot = pivot or sys.vars[0]
    if pivot not in sys.vars:
        raise ExprError(f"unknown pivot {pivot!r}")

    rhs_of = dict(zip(sys.vars, sys.rhs))
    nonpivot_derivs = {
        Deriv(v, 1): rhs_of[v] for v in sys.vars if v != pivot
    }
    cur = rhs_of[pivot]
    order = 1
    inversions: list[tuple[str, Expr]] = []
    conditions: set[SideCondition] = set()
    snapshots: list[tuple[int, Expr]] = [(order, cur)]

    while _unresolved(cur, sys, pivot):
        adv = total_derivative(cur, sys.vars, sys.registry)
        adv = replace_atoms(adv, nonpivot_derivs)
        for w, phi in inversions:
            adv = substitute(adv, {w: phi})
        if _unresolved(adv, sys, pivot):
            level = len(inversions) + 1
            tried: list[str] = []
            found = None
            for v in reversed(sys.vars):
                if v == pivot or v in dict(inversions):
                    continue
                if not contains(cur, Var(v)):
                    continue
                tried.append(v)
                try:
                    phi, conds = solve_for(
                        Deriv(pivot, order), cur, Var(v), sys.registry
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
            adv = substitute(adv, {v: phi})
        cur = adv
        order += 1
        snapshots.append((order, cur))

    kappa = order
    eliminated = [v for v, _ in inversions]
    unresolved = [v for v in sys.vars if v != pivot and v not in eliminated]

    # recovery-only inversions for variables the equation dropped: any
    # level equation that isolates the variable in terms of the pivot
    # and its derivatives alone gives a passive recovery
    recovery_only: dict[str, Expr] = {}
    for v in unresolved:
        for j, eq_j in snapshots:
            if not contains(eq_j, Var(v)):
                continue
            try:
                phi, conds = solve_for(Deriv(pivot, j), eq_j, Var(v),
                                       sys.registry)
            except NotIsolatable:
                continue
            if free_var_names(phi) & set(sys.vars) - {pivot}:
                continue
            recovery_only[v] = phi
            conditions |= conds
            break

    passive: list[PassiveEq] = []
    for v in unresolved:
        if v in recovery_only:
            passive.append(PassiveEq(v, recovery_only[v], "passive"))
    for v in unresolved:
        if v in recovery_only:
            continue
        aux = rhs_of[v]
        for w, phi in inversions:
            aux = substitute(aux, {w: phi})
        for w, phi in recovery_only.items():
            aux = substitute(aux, {w: phi})
        passive.append(PassiveEq(v, aux, "auxiliary"))
    for v, phi in reversed(inversions):
        passive.append(PassiveEq(v, phi, "passive"))

    for a in deriv_atoms(cur):
        if a.name == pivot and a.order >= kappa:
            raise ExprError("equation references a derivative at or above its order")

    conds = set(conditions)
    conds |= side_conditions_of(cur, sys.registry)
    for p in passive:
        conds |= side_conditions_of(p.expr, sys.registry)

    equation = HigherOrderEq(
        kappa, cur, "ode", pivot, dict(sys.params), sys.registry
    )
    return Folding(
        equation=equation,
        pivot=pivot,
        passive=tuple(passive),
        init_map=_ode_init_map(sys, pivot, kappa),
        side_conditions=frozenset(conds),
        kappa=kappa,
    )


def fold_ode_2d(sys: OdeSystem) -> Folding:
    """Plane case: x'' = f_t + x' f_x + g f_y with y = h(t, x, x')."""
    if sys.k != 2:
        raise ExprError("fold_ode_2d needs a system of two equations")
    return fold_ode(sys, sys.vars[0])


# ---------------------------------------------------------------------------
# trajectories and the RK4 oracle
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    grid: list[float]
    states: list[tuple[float, ...]]
    labels: tuple[str, ...]
    status: str  # "completed" | "singular"
    horizon: int
    singular_index: Optional[int] = None
    condition: Optional[SideCondition] = None
    crossings: list = field(default_factory=list)  # (index, condition)

    def component(self, label: str) -> list[float]:
        i = self.labels.index(label)
        return [s[i] for s in self.states]


def _float_params(params) -> dict[str, float]:
    env = {}
    for k, v in params.items():
        if v is None:
            raise ExprError(f"parameter {k} has no value")
        env[k] = float(v)
    return env


def companion_labels(f: Folding) -> tuple[str, ...]:
    pivot = f.pivot
    labels = [pivot + "'" * j for j in range(f.kappa)]
    labels.extend(p.var for p in f.passive if p.kind == "auxiliary")
    return tuple(labels)


def _folding_env(f: Folding, state: Sequence[float], penv: dict) -> tuple[dict, Callable]:
    """Environment exposing pivot derivatives and auxiliary components."""
    env = dict(penv)
    env[f.pivot] = state[0]
    aux_names = [p.var for p in f.passive if p.kind == "auxiliary"]
    for i, v in enumerate(aux_names):
        env[v] = state[f.kappa + i]

    def deriv(name: str, order: int) -> float:
        if name != f.pivot or order >= f.kappa:
            raise ExprError(f"unbound derivative {name}{chr(39) * order}")
        return state[order]

    return env, deriv


def folding_field(f: Folding):
    """First-order companion vector field of a folded ODE (plus auxiliaries)."""
    if f.equation.kind != "ode":
        raise ExprError("companion form needs an ODE folding")
    penv = _float_params(f.equation.params)
    aux = [p for p in f.passive if p.kind == "auxiliary"]
    kappa = f.kappa

    def field_fn(t: float, state: Sequence[float]) -> tuple[float, ...]:
        env, deriv = _folding_env(f, state, penv)
        out = list(state[1:kappa])
        out.append(float(eval_expr(f.equation.rhs, env, t, f.equation.registry,
                                   deriv=deriv)))
        for p in aux:
            out.append(float(eval_expr(p.expr, env, t, f.equation.registry,
                                       deriv=deriv)))
        return tuple(out)

    return field_fn


def system_field(sys: OdeSystem):
    penv = _float_params(sys.params)

    def field_fn(t: float, state: Sequence[float]) -> tuple[float, ...]:
        env = dict(penv)
        env.update(zip(sys.vars, state))
        return tuple(
            float(eval_expr(r, env, t, sys.registry)) for r in sys.rhs
        )

    return field_fn


def _model_parts(model: Union[OdeSystem, Folding]):
    if isinstance(model, OdeSystem):
        labels = model.vars
        conds = list(model.guards)
        penv = _float_params(model.params)
        registry = model.registry

        def env_of(state):
            env = dict(penv)
            env.update(zip(labels, state))
            return env, None

        return system_field(model), labels, conds, registry, env_of
    if isinstance(model, Folding) and model.equation.kind == "ode":
        labels = companion_labels(model)
        conds = sorted(model.side_conditions, key=lambda c: to_text(c.expr))
        penv = _float_params(model.equation.params)
        registry = model.equation.registry

        def env_of(state):
            return _folding_env(model, state, penv)

        return folding_field(model), labels, conds, registry, env_of
    raise ExprError("integrate_rk4 accepts an ODE system or an ODE folding")


def integrate_rk4(
    model: Union[OdeSystem, Folding],
    init: Sequence[float],
    t0: float = 0.0,
    h: float = 1e-3,
    n_steps: int = 1000,
) -> Trajectory:
    """Classical fourth-order Runge-Kutta on a uniform grid.

    Integration halts with singular status when a side condition falls
    below 1e-9 in magnitude at a grid point; a sign change between grid
    points is flagged as a crossing but does not stop the run.
    """
    if h <= 0:
        raise ExprError("step size must be positive")
    field_fn, labels, conds, registry, env_of = _model_parts(model)
    if len(init) != len(labels):
        raise ExprError(f"initial state needs {len(labels)} components")

    def cond_values(t, state):
        env, deriv = env_of(state)
        vals = []
        for c in conds:
            try:
                vals.append(float(eval_expr(c.expr, env, t, registry, deriv=deriv)))
            except DivisionByZero:
                vals.append(0.0)
            except ExprError:
                vals.append(float("nan"))
        return vals

    grid = [t0]
    states = [tuple(float(v) for v in init)]
    crossings: list = []
    prev_vals = cond_values(t0, states[0])
    for i, val in enumerate(prev_vals):
        if val == val and abs(val) < SINGULAR_EPS:
            return Trajectory(grid[:0], [], tuple(labels), "singular",
                              n_steps, 0, conds[i], crossings)

    y = states[0]
    t = t0
    for m in range(n_steps):
        try:
            k1 = field_fn(t, y)
            k2 = field_fn(t + h / 2, _axpy(y, k1, h / 2))
            k3 = field_fn(t + h / 2, _axpy(y, k2, h / 2))
            k4 = field_fn(t + h, _axpy(y, k3, h))
        except (DivisionByZero, OverflowError):
            return Trajectory(grid, states, tuple(labels), "singular",
                              n_steps, m + 1, None, crossings)
        y = tuple(
            yi + (h / 6) * (a + 2 * b + 2 * c + d)
            for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
        )
        t = t0 + (m + 1) * h
        vals = cond_values(t, y)
        for i, (pv, nv) in enumerate(zip(prev_vals, vals)):
            if nv != nv:
                continue
            if abs(nv) < SINGULAR_EPS:
                return Trajectory(grid, states, tuple(labels), "singular",
                                  n_steps, m + 1, conds[i], crossings)
            if pv == pv and pv * nv < 0:
                crossings.append((m + 1, conds[i]))
        prev_vals = vals
        grid.append(t)
        states.append(y)
    return Trajectory(grid, states, tuple(labels), "completed", n_steps,
                      crossings=crossings)


def _axpy(y: Sequence[float], k: Sequence[float], a: float) -> tuple[float, ...]:
    return tuple(yi + a * ki for yi, ki in zip(y, k))


def folding_initial_state(
    f: Folding, sys: OdeSystem, init: Sequence[float], t0: float
) -> list[float]:
    """Companion initial state matched to a system initial state."""
    penv = _float_params(sys.params)
    env = dict(penv)
    env.update({v: float(x) for v, x in zip(sys.vars, init)})
    state = [
        float(eval_expr(e, env, float(t0), sys.registry)) for e in f.init_map
    ]
    for p in f.passive:
        if p.kind == "auxiliary":
            state.append(float(init[sys.vars.index(p.var)]))
    return state


def recover_ode_components(
    f: Folding, sys: OdeSystem, traj: Trajectory
) -> tuple[dict[str, list[float]], Optional[int], Optional[SideCondition]]:
    """Evaluate the passive equations along a companion trajectory.

    Returns the per-variable series plus the first grid index at which a
    passive denominator vanished, if any.
    """
    penv = _float_params(sys.params)
    out: dict[str, list[float]] = {f.pivot: [s[0] for s in traj.states]}
    aux_names = [p.var for p in f.passive if p.kind == "auxiliary"]
    for i, v in enumerate(aux_names):
        out[v] = [s[f.kappa + i] for s in traj.states]
    singular_index: Optional[int] = None
    condition: Optional[SideCondition] = None
    for p in f.passive:
        if p.kind == "auxiliary":
            continue
        conds = sorted(side_conditions_of(p.expr, f.equation.registry),
                       key=lambda c: to_text(c.expr))
        vals: list[float] = []
        for idx, (t, state) in enumerate(zip(traj.grid, traj.states)):
            env, deriv = _folding_env(f, state, penv)
            for name, series in out.items():
                if idx < len(series):
                    env[name] = series[idx]
            try:
                stop = None
                for c in conds:
                    cv = float(eval_expr(c.expr, env, t, f.equation.registry,
                                         deriv=deriv))
                    if abs(cv) < SINGULAR_EPS:
                        stop = c
                        break
                if stop is not None:
                    if singular_index is None or idx < singular_index:
                        singular_index, condition = idx, stop
                    break
                vals.append(float(eval_expr(p.expr, env, t, f.equation.registry,
                                            deriv=deriv)))
            except DivisionByZero as exc:
                if singular_index is None or idx < singular_index:
                    singular_index = idx
                    condition = SideCondition(exc.denominator)
                break
        out[p.var] = vals
    return out, singular_index, condition
