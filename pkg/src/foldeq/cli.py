"""Command-line interface.

Subcommands: fold, simulate, verify, eigseq, unfold, degree.
Exit codes: 0 ok, 1 parse error, 2 not foldable / not isolatable,
3 eigensequence failure.
"""

from __future__ import annotations

import argparse
import json
import sys as _sys
from fractions import Fraction
from typing import Optional

from .errors import (
    ComplexRoots,
    DivisionByZero,
    ExprError,
    ExprSyntaxError,
    FoldeqError,
    NonPeriodicEigensequence,
    NotFoldable,
    NotIsolatable,
    ShapeMismatch,
    SystemFileError,
    UndefinedInterdependence,
    UnfoldableSystem,
    UnknownSymbol,
    ZeroEigenvalue,
    ZeroPartial,
)
from .expr import FnRegistry, to_text
from .folding import fold, fold_no_inversion, interdependence_degree
from .inverse import assemble_system, unfold_difference, unfold_ode
from .linear import (
    LinearSystem2,
    PeriodicLinearEq,
    eigensequence,
    eigenseq_tables,
    fold_linear_2d,
    fold_linear_ode_2d,
    iterate_factor_pair,
)
from .odefold import fold_ode, integrate_rk4
from .parser import parse_expr
from .sysfile import emit_system_file, load_system_file
from .systems import DiffSystem, Folding, OdeSystem, iterate_orbit
from .verify import verify_folding, verify_ode_folding

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_NOT_FOLDABLE = 2
EXIT_EIGEN = 3


def _write(out, text: str):
    out.write(text)
    if not text.endswith("\n"):
        out.write("\n")


def _parse_sets(values: Optional[list[str]]) -> dict[str, Fraction]:
    out: dict[str, Fraction] = {}
    for item in values or []:
        if "=" not in item:
            raise SystemFileError(f"--set needs name=value, got {item!r}")
        name, value = item.split("=", 1)
        out[name.strip()] = Fraction(value.strip())
    return out


def _load(path: str, sets: Optional[list[str]] = None):
    sysm = load_system_file(path)
    subst = _parse_sets(sets)
    if subst and isinstance(sysm, (DiffSystem, OdeSystem)):
        sysm = sysm.substitute_params(subst)
    return sysm


def _equation_lhs(f: Folding) -> str:
    eq = f.equation
    if eq.kind == "difference":
        return f"{eq.seq_name}[n+{eq.order}]"
    return eq.seq_name + "'" * eq.order


def _folding_lines(f: Folding) -> list[str]:
    lines = [f"kappa: {f.kappa}"]
    if f.case:
        lines.append(f"case: {f.case}")
    lines.append(f"pivot: {f.pivot}")
    lines.append(f"equation: {_equation_lhs(f)} = {to_text(f.equation.rhs)}")
    for p in f.passive:
        if p.kind == "passive":
            lines.append(f"passive: {p.var} = {to_text(p.expr)}")
        elif f.equation.kind == "ode":
            lines.append(f"auxiliary: {p.var}' = {to_text(p.expr)}")
        else:
            lines.append(f"auxiliary: {p.var}[n+1] = {to_text(p.expr)}")
    for c in sorted(f.side_conditions, key=lambda c: to_text(c.expr)):
        lines.append(f"side-condition: {c}")
    for j, e in enumerate(f.init_map):
        if f.equation.kind == "difference":
            lines.append(f"init: {f.equation.seq_name}[{j}] = {to_text(e)}")
        else:
            lines.append(
                f"init: {f.equation.seq_name}{chr(39) * j}(t0) = {to_text(e)}")
    if f.decimation:
        lines.append(f"note: decimates to order 1 with stride {f.decimation}")
    return lines


def _folding_dict(f: Folding) -> dict:
    return {
        "kappa": f.kappa,
        "case": f.case,
        "pivot": f.pivot,
        "equation": {
            "lhs": _equation_lhs(f),
            "rhs": to_text(f.equation.rhs),
        },
        "passive": [
            {"var": p.var, "expr": to_text(p.expr), "kind": p.kind}
            for p in f.passive
        ],
        "side_conditions": sorted(str(c) for c in f.side_conditions),
        "init_map": [to_text(e) for e in f.init_map],
        "decimation": f.decimation,
    }


def cmd_fold(args, out) -> int:
    sysm = _load(args.spec, args.set)
    if isinstance(sysm, LinearSystem2):
        res = fold_linear_2d(sysm)
        lines = [f"linear case: {res.case}"]
        if res.swapped:
            lines.append("pivot swapped: roles of x and y interchanged")
        if res.notes:
            lines.append(f"note: {res.notes}")
        if res.folding is not None:
            lines.extend(_folding_lines(res.folding))
        elif res.periodic is not None:
            eq = res.periodic
            lines.append(f"period: {eq.p}")
            lines.append(f"A: [{', '.join(str(v) for v in eq.A)}]")
            lines.append(f"B: [{', '.join(str(v) for v in eq.B)}]")
            lines.append(f"C: [{', '.join(str(v) for v in eq.C)}]")
            lines.append("equation: s[n+2] = A[n]*s[n+1] + B[n]*s[n] + C[n]")
            lines.append("passive: y = (s[n+1] - a[n]*s[n] - alpha[n])/b[n]")
        else:
            lines.append("equation (implicit): b[n]*s[n+2] = "
                         "P[n]*s[n+1] + Q[n]*s[n] + R[n]")
            lines.append(f"P: {res.A}")
            lines.append(f"Q: {res.B}")
            lines.append(f"R: {res.C}")
        _write(out, "\n".join(lines))
        return EXIT_OK
    if isinstance(sysm, OdeSystem):
        folding = fold_ode(sysm, args.pivot)
    elif args.no_inversion:
        folding = fold_no_inversion(sysm)
    else:
        folding, _trace = fold(sysm, args.pivot)
    if args.json:
        _write(out, json.dumps(_folding_dict(folding), indent=2))
    else:
        _write(out, "\n".join(_folding_lines(folding)))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_folding_dict(folding), indent=2) + "\n")
    return EXIT_OK


def cmd_degree(args, out) -> int:
    sysm = _load(args.spec, args.set)
    if isinstance(sysm, LinearSystem2):
        sysm = sysm.to_diff_system()
    rep = interdependence_degree(sysm)
    lines = [f"status: {rep.status}"]
    if rep.kappa is not None:
        lines.append(f"kappa: {rep.kappa}")
    if rep.pivot:
        lines.append(f"pivot: {rep.pivot}")
    if rep.blocks:
        lines.append("blocks: " + "; ".join(
            "{" + ", ".join(b) + "}" for b in rep.blocks))
    if rep.detail:
        lines.append(f"detail: {rep.detail}")
    _write(out, "\n".join(lines))
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    sysm = _load(args.spec, args.set)
    if isinstance(sysm, LinearSystem2):
        raise SystemFileError("simulate needs a difference or ode system")
    init = [Fraction(v) for v in args.init.split(",")]
    if isinstance(sysm, OdeSystem):
        traj = integrate_rk4(sysm, [float(v) for v in init],
                             args.t0, args.h, args.steps)
        _write(out, "t," + ",".join(sysm.vars))
        for t, state in zip(traj.grid, traj.states):
            _write(out, f"{t:.10g}," + ",".join(f"{v:.12g}" for v in state))
        if traj.status == "singular":
            _write(out, f"# singular at index {traj.singular_index}: "
                        f"{traj.condition}")
    else:
        orbit = iterate_orbit(sysm, init, args.steps, args.mode)
        _write(out, "n," + ",".join(sysm.vars))
        for m, state in enumerate(orbit.states):
            _write(out, f"{m}," + ",".join(str(v) for v in state))
        if orbit.status == "singular":
            _write(out, f"# singular at step {orbit.singular_step}: "
                        f"{orbit.condition}")
    return EXIT_OK


def cmd_verify(args, out) -> int:
    sysm = _load(args.spec, args.set)
    if isinstance(sysm, LinearSystem2):
        res = fold_linear_2d(sysm)
        if res.folding is None:
            raise NotFoldable(1, ["b"])
        folding = res.folding
        sysm = sysm.to_diff_system()
    elif isinstance(sysm, OdeSystem):
        folding = fold_ode(sysm, args.pivot)
        report = verify_ode_folding(
            sysm, folding, (args.t0, args.t1), args.h,
            trials=args.trials, tol=args.tol, seed=args.seed)
        _write(out, report.to_json() if args.json else report.to_text())
        return EXIT_OK if report.status == "Pass" else EXIT_NOT_FOLDABLE
    else:
        if args.no_inversion:
            folding = fold_no_inversion(sysm)
        else:
            folding, _ = fold(sysm, args.pivot)
    report = verify_folding(sysm, folding, trials=args.trials,
                            n_steps=args.steps, seed=args.seed,
                            mode=args.mode, tol=args.tol)
    if folding.decimation:
        report.notes = f"decimates to order 1 with stride {folding.decimation}"
    _write(out, report.to_json() if args.json else report.to_text())
    return EXIT_OK if report.status == "Pass" else EXIT_NOT_FOLDABLE


def _parse_listflag(text: str) -> tuple:
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    return tuple(Fraction(v.strip()) for v in body.split(",") if v.strip())


def cmd_eigseq(args, out) -> int:
    A, B = _parse_listflag(args.A), _parse_listflag(args.B)
    C = _parse_listflag(args.C) if args.C else tuple([Fraction(0)] * len(A))
    p = len(A)
    if not (len(B) == len(C) == p):
        raise SystemFileError("A, B, C must share one period length")
    eq = PeriodicLinearEq(p, A, B, C)
    fac = eigensequence(eq, args.root)
    alpha, beta = fac.alpha_table, fac.beta_table
    lines = [f"period: {p}"]
    lines.append("alpha: [" + ", ".join(str(v) for v in alpha) + "]")
    lines.append("beta: [" + ", ".join(str(v) for v in beta) + "]")
    q2, q1, q0 = fac.quad
    lines.append(f"quadratic: {_fmt(q2)}*r^2 + {_fmt(q1)}*r + {_fmt(q0)} = 0")
    lines.append(f"roots: [{_fmt(fac.roots[0])}, {_fmt(fac.roots[1])}]")
    lines.append(f"root_choice: {fac.root_choice}")
    lines.append("r: [" + ", ".join(_fmt(r) for r in fac.r_seq) + "]")
    lines.append(f"growth_factor: {_fmt(fac.growth_factor)}")
    lines.append(f"factor: {fac.factor_pair[0]}")
    lines.append(f"cofactor: {fac.factor_pair[1]}")
    if args.x0 is not None and args.x1 is not None:
        xs = iterate_factor_pair(fac, args.x0, args.x1, args.steps)
        lines.append("solution: [" + ", ".join(_fmt(v) for v in xs) + "]")
        t1 = args.x1 - fac.r_seq[0] * args.x0
        if abs(t1) <= 1e-12:
            lines.append("note: special solution (t1 = 0), decays to 0")
        else:
            lines.append("note: generic solution (t1 != 0), unbounded")
    _write(out, "\n".join(lines))
    return EXIT_OK


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def cmd_unfold(args, out) -> int:
    registry = FnRegistry()
    for name in args.fn or []:
        registry.declare(name)
    f_expr = parse_expr(args.f, registry)
    phi = parse_expr(args.phi, registry)
    if args.kind == "ode":
        unf = unfold_ode(f_expr, phi, registry)
    else:
        unf = unfold_difference(f_expr, phi, args.mode, registry)
    sysm = assemble_system(unf, registry)
    header = (f"unfolded: x+ = f, y+ = g with f = {to_text(unf.f)}"
              if args.kind != "ode"
              else f"unfolded: x' = f, y' = g with f = {to_text(unf.f)}")
    _write(out, emit_system_file(sysm, header=header))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="foldeq",
        description="Fold systems of difference/differential equations "
                    "into higher order scalar equations and verify them.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fold", help="fold a system spec file")
    p.add_argument("spec")
    p.add_argument("--pivot", default=None)
    p.add_argument("--no-inversion", action="store_true")
    p.add_argument("--set", action="append", metavar="NAME=VALUE")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(run=cmd_fold)

    p = sub.add_parser("degree", help="interdependence degree of a system")
    p.add_argument("spec")
    p.add_argument("--set", action="append", metavar="NAME=VALUE")
    p.set_defaults(run=cmd_degree)

    p = sub.add_parser("simulate", help="dump an orbit or trajectory as CSV")
    p.add_argument("spec")
    p.add_argument("--init", required=True, help="comma-separated state")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--mode", choices=("exact", "float"), default="exact")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--set", action="append", metavar="NAME=VALUE")
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("verify", help="verify a folding against orbits")
    p.add_argument("spec")
    p.add_argument("--pivot", default=None)
    p.add_argument("--no-inversion", action="store_true")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--mode", choices=("exact", "float"), default="exact")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--set", action="append", metavar="NAME=VALUE")
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("eigseq", help="eigensequence factorization of "
                                      "x[n+2] = A_n x[n+1] + B_n x[n] + C_n")
    p.add_argument("--A", required=True, help="period list, e.g. [-1,-1,2]")
    p.add_argument("--B", required=True)
    p.add_argument("--C", default=None)
    p.add_argument("--root", type=int, choices=(0, 1), default=0)
    p.add_argument("--x0", type=float, default=None)
    p.add_argument("--x1", type=float, default=None)
    p.add_argument("--steps", type=int, default=20)
    p.set_defaults(run=cmd_eigseq)

    p = sub.add_parser("unfold", help="inverse problem: assemble a system "
                                      "that folds to a target equation")
    p.add_argument("--f", required=True, help="first component in (n|t, u, v)")
    p.add_argument("--phi", required=True, help="target right-hand side")
    p.add_argument("--kind", choices=("difference", "ode"), default="difference")
    p.add_argument("--mode", choices=("general", "cdn", "o1", "lin"),
                   default="general")
    p.add_argument("--fn", action="append", metavar="NAME",
                   help="declare an opaque function symbol")
    p.set_defaults(run=cmd_unfold)

    return ap


def main(argv: Optional[list[str]] = None, out=None) -> int:
    out = out or _sys.stdout
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.run(args, out)
    except (SystemFileError, ExprSyntaxError, UnknownSymbol, DivisionByZero) as exc:
        _write(_sys.stderr, f"error: {exc}")
        return EXIT_PARSE
    except (NotFoldable, NotIsolatable, UnfoldableSystem,
            UndefinedInterdependence, ShapeMismatch, ZeroPartial) as exc:
        if isinstance(exc, UnfoldableSystem):
            _write(_sys.stderr, "error: interdependence degree 0")
        else:
            _write(_sys.stderr, f"error: {exc}")
        return EXIT_NOT_FOLDABLE
    except (ComplexRoots, ZeroEigenvalue, NonPeriodicEigensequence) as exc:
        _write(_sys.stderr, f"error: {exc}")
        return EXIT_EIGEN
    except ExprError as exc:
        _write(_sys.stderr, f"error: {exc}")
        return EXIT_PARSE


if __name__ == "__main__":
    raise SystemExit(main())
