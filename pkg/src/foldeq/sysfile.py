"""Line-oriented system spec files.

Format:

    # comment
    kind: difference | delta | ode | linear
    vars: x y
    param a = 1/2        # value optional: `param a` stays symbolic
    fn psi inverse=psi_inv deriv=2*u def=u^2 nonvanishing
    eq x = x*y
    eq y = (a + b*x)/y
    guard y != 0

Linear files replace vars/eq with the six coefficient entries, each a
closed form in n (or t) or a period list:

    a = 1/2
    b = [1, 2, 3]
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Union

from .errors import SystemFileError, ExprSyntaxError, UnknownSymbol
from .expr import Expr, FnRegistry, SideCondition, free_var_names, to_text
from .linear import LinearSystem2, _COEF_NAMES
from .parser import parse_expr
from .systems import DiffSystem, OdeSystem, make_system

ParsedSystem = Union[DiffSystem, OdeSystem, LinearSystem2]

_KINDS = {
    "difference": "recursive",
    "recursive": "recursive",
    "delta": "delta",
    "ode": "ode",
    "linear": "linear",
}


def _parse_fraction(text: str, lineno: int) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise SystemFileError(f"bad numeric value {text!r}: {exc}", lineno)


def _parse_list(text: str, lineno: int) -> list[Fraction]:
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise SystemFileError(f"expected [v0, v1, ...], got {text!r}", lineno)
    items = [s for s in body[1:-1].split(",") if s.strip()]
    if not items:
        raise SystemFileError("empty coefficient list", lineno)
    return [_parse_fraction(s, lineno) for s in items]


def _parse_fn_line(rest: str, registry: FnRegistry, lineno: int):
    parts = rest.split()
    if not parts:
        raise SystemFileError("fn line needs a symbol name", lineno)
    name = parts[0]
    kwargs: dict = {}
    for item in parts[1:]:
        if item == "nonvanishing":
            kwargs["nonvanishing"] = True
            continue
        if "=" not in item:
            raise SystemFileError(f"bad fn attribute {item!r}", lineno)
        key, value = item.split("=", 1)
        if key == "inverse":
            kwargs["inverse"] = value
        elif key in ("deriv", "def"):
            try:
                expr = parse_expr(value, registry)
            except ExprSyntaxError as exc:
                raise SystemFileError(f"in fn {key}: {exc}", lineno)
            names = free_var_names(expr)
            if len(names) > 1:
                raise SystemFileError(
                    f"fn {key} must use a single formal variable", lineno)
            kwargs["defn" if key == "def" else "deriv"] = expr
            if names:
                kwargs.setdefault("formal", names.pop())
        else:
            raise SystemFileError(f"unknown fn attribute {key!r}", lineno)
    registry.declare(name, kwargs.get("inverse"), kwargs.get("deriv"),
                     kwargs.get("defn"), kwargs.get("formal", "u"),
                     kwargs.get("nonvanishing", False))


def parse_system_file(text: str) -> ParsedSystem:
    registry = FnRegistry()
    kind: Optional[str] = None
    var_names: list[str] = []
    params: dict[str, Optional[Fraction]] = {}
    eq_lines: list[tuple[int, str, str]] = []
    guard_lines: list[tuple[int, str]] = []
    coef_lines: dict[str, tuple[int, str]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("kind:"):
            value = line.split(":", 1)[1].strip()
            if value not in _KINDS:
                raise SystemFileError(f"unknown kind {value!r}", lineno)
            kind = _KINDS[value]
        elif line.startswith("vars:"):
            var_names = line.split(":", 1)[1].split()
        elif line.startswith("param "):
            body = line[len("param "):]
            if "=" in body:
                name, value = body.split("=", 1)
                params[name.strip()] = _parse_fraction(value, lineno)
            else:
                params[body.strip()] = None
        elif line.startswith("fn "):
            _parse_fn_line(line[len("fn "):], registry, lineno)
        elif line.startswith("eq "):
            body = line[len("eq "):]
            if "=" not in body:
                raise SystemFileError("eq line needs `eq var = expr`", lineno)
            name, expr_text = body.split("=", 1)
            eq_lines.append((lineno, name.strip(), expr_text.strip()))
        elif line.startswith("guard "):
            body = line[len("guard "):]
            if body.endswith("!= 0"):
                body = body[: -len("!= 0")]
            elif body.endswith("!=0"):
                body = body[: -len("!=0")]
            guard_lines.append((lineno, body.strip()))
        elif "=" in line and line.split("=", 1)[0].strip() in _COEF_NAMES:
            name, value = line.split("=", 1)
            coef_lines[name.strip()] = (lineno, value.strip())
        else:
            raise SystemFileError(f"unrecognized line {raw.strip()!r}", lineno)

    if kind is None:
        raise SystemFileError("missing `kind:` line", 0)

    if kind == "linear":
        coefs = {}
        for name in _COEF_NAMES:
            if name not in coef_lines:
                coefs[name] = parse_expr("0")
                continue
            lineno, value = coef_lines[name]
            if value.lstrip().startswith("["):
                coefs[name] = tuple(_parse_list(value, lineno))
            else:
                try:
                    coefs[name] = parse_expr(value, registry)
                except (ExprSyntaxError, UnknownSymbol) as exc:
                    raise SystemFileError(str(exc), lineno)
        return LinearSystem2(coefs["a"], coefs["b"], coefs["c"], coefs["d"],
                             coefs["alpha"], coefs["beta"], params, registry)

    if not var_names:
        raise SystemFileError("missing `vars:` line", 0)
    rhs_by_name: dict[str, Expr] = {}
    for lineno, name, expr_text in eq_lines:
        if name not in var_names:
            raise SystemFileError(f"eq for undeclared variable {name!r}", lineno)
        if name in rhs_by_name:
            raise SystemFileError(f"duplicate equation for {name!r}", lineno)
        try:
            rhs_by_name[name] = parse_expr(expr_text, registry)
        except (ExprSyntaxError, UnknownSymbol) as exc:
            raise SystemFileError(str(exc), lineno)
    missing = [v for v in var_names if v not in rhs_by_name]
    if missing:
        raise SystemFileError(f"missing equations for {missing}", 0)
    guards = []
    for lineno, body in guard_lines:
        try:
            guards.append(SideCondition(parse_expr(body, registry)))
        except (ExprSyntaxError, UnknownSymbol) as exc:
            raise SystemFileError(str(exc), lineno)
    try:
        return make_system(var_names, [rhs_by_name[v] for v in var_names],
                           kind, params, guards, registry)
    except Exception as exc:
        raise SystemFileError(str(exc), 0)


def load_system_file(path: str) -> ParsedSystem:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_system_file(fh.read())


def emit_system_file(sys: Union[DiffSystem, OdeSystem],
                     header: Optional[str] = None) -> str:
    """Render a system back to spec-file text (round-trips through the
    parser)."""
    lines: list[str] = []
    if header:
        for h in header.splitlines():
            lines.append(f"# {h}")
    kind = {"recursive": "difference", "delta": "delta", "ode": "ode"}[sys.kind]
    lines.append(f"kind: {kind}")
    lines.append(f"vars: {' '.join(sys.vars)}")
    for name in sorted(sys.params):
        value = sys.params[name]
        if value is None:
            lines.append(f"param {name}")
        else:
            lines.append(f"param {name} = {value}")
    for sym in sys.registry.symbols():
        parts = [f"fn {sym.name}"]
        if sym.inverse_name:
            parts.append(f"inverse={sym.inverse_name}")
        # attribute values may not contain spaces; expression text is
        # compacted (the grammar is whitespace-insensitive)
        if sym.deriv is not None:
            parts.append(f"deriv={to_text(sym.deriv).replace(' ', '')}")
        if sym.defn is not None:
            parts.append(f"def={to_text(sym.defn).replace(' ', '')}")
        if sym.nonvanishing:
            parts.append("nonvanishing")
        lines.append(" ".join(parts))
    for v, r in zip(sys.vars, sys.rhs):
        lines.append(f"eq {v} = {to_text(r)}")
    auto = set()
    from .expr import side_conditions_of

    for r in sys.rhs:
        auto |= side_conditions_of(r, sys.registry)
    for g in sys.guards:
        if g not in auto:
            lines.append(f"guard {to_text(g.expr)} != 0")
    return "\n".join(lines) + "\n"
