"""Exception hierarchy shared by all foldeq modules."""

from __future__ import annotations


class FoldeqError(Exception):
    """Base class for every error raised by this package."""


class ExprError(FoldeqError):
    """Malformed expression or unsupported symbolic operation."""


class ExprSyntaxError(ExprError):
    """Parse failure; carries the byte offset of the offending token."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


class UnknownSymbol(ExprError):
    """A function symbol was applied before being declared."""

    def __init__(self, name: str, pos: int = -1):
        super().__init__(f"unknown function symbol '{name}'")
        self.name = name
        self.pos = pos


class NonIntegerExponent(ExprError):
    """Exponents must canonicalize to integers."""


class DivisionByZero(FoldeqError):
    """Evaluation or construction divided by an exactly-zero denominator."""

    def __init__(self, denominator):
        super().__init__(f"division by zero denominator: {denominator}")
        self.denominator = denominator


class UnboundVariable(FoldeqError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable '{name}'")
        self.name = name


class MissingDefinition(FoldeqError):
    """A declared function symbol has no definition usable for evaluation."""

    def __init__(self, name: str):
        super().__init__(f"function symbol '{name}' has no definition")
        self.name = name


class MissingDerivative(FoldeqError):
    """A function symbol cannot supply the derivative order requested."""

    def __init__(self, name: str, order: int = 1):
        super().__init__(f"no derivative of order {order} for symbol '{name}'")
        self.name = name
        self.order = order


class NotIsolatable(FoldeqError):
    """solve_for could not isolate the target variable."""

    def __init__(self, target, reason: str = ""):
        msg = f"cannot isolate {target}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.target = target
        self.reason = reason


class ZeroPartial(FoldeqError):
    """The partial derivative needed for an inverse construction vanishes."""


class NotFoldable(FoldeqError):
    """The folding algorithm failed to invert at some level."""

    def __init__(self, level: int, variables):
        vs = ", ".join(variables)
        super().__init__(f"no partial inversion at level {level} (tried: {vs})")
        self.level = level
        self.variables = tuple(variables)


class UnfoldableSystem(FoldeqError):
    """Folding cannot initiate (interdependence degree 0)."""


class UndefinedInterdependence(FoldeqError):
    """The system splinters into variable-disjoint blocks."""

    def __init__(self, blocks):
        pretty = "; ".join("{" + ", ".join(b) + "}" for b in blocks)
        super().__init__(f"system splinters into blocks {pretty}")
        self.blocks = tuple(tuple(b) for b in blocks)


class ShapeMismatch(FoldeqError):
    """System does not match the triangular no-inversion shape."""


class ComplexRoots(FoldeqError):
    """The eigensequence quadratic has no real roots."""


class ZeroEigenvalue(FoldeqError):
    """An eigensequence entry is numerically zero (not a unit)."""

    def __init__(self, index: int, value: float):
        super().__init__(f"eigensequence entry r_{index} = {value} is not a unit")
        self.index = index
        self.value = value


class NonPeriodicEigensequence(FoldeqError):
    """The computed eigensequence fails the period-p wraparound check."""


class SystemFileError(FoldeqError):
    """Malformed system spec file."""

    def __init__(self, message: str, line: int = 0):
        if line:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
