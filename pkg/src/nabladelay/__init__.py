"""Nabla fractional calculus and delayed fractional difference solvers.

The package has three layers:

- :mod:`nabladelay.grid_calculus`: fractional Taylor monomials and the
  nabla sum / Riemann-Liouville difference operators on integer grids.
- :mod:`nabladelay.dpml`: word sums over a matrix pair and the delayed
  perturbation Mittag-Leffler matrix function, including its classical
  closed-form reductions.
- :mod:`nabladelay.solver`: stepping and closed-form solution routes for
  linear fractional difference systems with one constant delay, plus a
  cross-checking verifier.

A command-line interface (``nabladelay``) exposes solving, verification,
word-sum tables and diagnostic figures; see :mod:`nabladelay.cli`.
"""

from .dpml import (
    CommutativityError,
    DivergenceError,
    DpmlFunction,
    DpmlParams,
    REDUCTION_PATTERNS,
    ReductionPatternError,
    TruncationPolicy,
    WordSumTable,
    dpml_eval,
    ml_eval,
    ml_partial_sum,
    special_reductions,
    word_sum,
    word_sum_commutative,
)
from .grid_calculus import (
    GridRangeError,
    GridSeries,
    monomial,
    monomial_run,
    nabla_sum,
    rl_difference,
)
from .solver import (
    DelaySystem,
    SingularityError,
    SolutionTrace,
    VerifyReport,
    closed_form_solve,
    commutative_solve,
    delta_solve,
    forced_part,
    homogeneous_part,
    step_solve,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "CommutativityError",
    "DelaySystem",
    "DivergenceError",
    "DpmlFunction",
    "DpmlParams",
    "GridRangeError",
    "GridSeries",
    "REDUCTION_PATTERNS",
    "ReductionPatternError",
    "SingularityError",
    "SolutionTrace",
    "TruncationPolicy",
    "VerifyReport",
    "WordSumTable",
    "closed_form_solve",
    "commutative_solve",
    "delta_solve",
    "dpml_eval",
    "forced_part",
    "homogeneous_part",
    "ml_eval",
    "ml_partial_sum",
    "monomial",
    "monomial_run",
    "nabla_sum",
    "rl_difference",
    "special_reductions",
    "step_solve",
    "verify",
    "word_sum",
    "word_sum_commutative",
]
