"""Folding difference and differential systems into higher order equations.

A system of k first-order difference or differential equations is
compressed into one scalar equation of order kappa <= k plus passive
recovery equations; every folding can be verified against brute-force
orbit or flow iteration of the original system.
"""

from .calculus import differentiate, partial_derivative, total_derivative
from .errors import (
    ComplexRoots,
    DivisionByZero,
    ExprError,
    ExprSyntaxError,
    FoldeqError,
    MissingDerivative,
    NonPeriodicEigensequence,
    NotFoldable,
    NotIsolatable,
    ShapeMismatch,
    SystemFileError,
    UnboundVariable,
    UndefinedInterdependence,
    UnfoldableSystem,
    UnknownSymbol,
    ZeroEigenvalue,
    ZeroPartial,
)
from .expr import (
    Expr,
    FnRegistry,
    FnSymbol,
    SideCondition,
    canonicalize,
    eval_numeric,
    rat,
    shift_index,
    substitute,
    to_text,
)
from .folding import (
    FoldTrace,
    KappaReport,
    fold,
    fold_no_inversion,
    interdependence_degree,
    matches_ske_shape,
)
from .inverse import Unfolding, assemble_system, unfold_difference, unfold_ode
from .linear import (
    EigenFactorization,
    LinearFoldResult,
    LinearSystem2,
    PeriodicLinearEq,
    eigenseq_tables,
    eigensequence,
    fold_linear_2d,
    fold_linear_ode_2d,
    iterate_factor_pair,
    iterate_periodic,
)
from .odefold import (
    OdeFolding,
    Trajectory,
    fold_ode,
    fold_ode_2d,
    integrate_rk4,
)
from .parser import parse_expr
from .solve import solve_for
from .sysfile import emit_system_file, load_system_file, parse_system_file
from .systems import (
    DiffSystem,
    Folding,
    HigherOrderEq,
    OdeSystem,
    Orbit,
    PassiveEq,
    iterate_equation,
    iterate_orbit,
    make_system,
    recover_components,
)
from .verify import (
    VerifyReport,
    decimation_check,
    verify_folding,
    verify_ode_folding,
)

__version__ = "0.1.0"
