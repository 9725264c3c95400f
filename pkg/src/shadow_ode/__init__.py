"""Global solutions of ODE initial value problems from perturbed Euler grids.

Euler recursions with per-step perturbations are run on a ladder of dyadic
grids; a Cauchy test across the ladder extracts the limiting solution,
its blow-up point, and (via superequations) maximal and minimal solutions.
"""
from .errors import *  # noqa: F401,F403
from .expr import VectorField, evaluate, parse, parse_expression
from .grid import (
    ConstantRule,
    EulerTrajectory,
    GridSpec,
    Perturbation,
    SampledRule,
    StopReason,
    ZeroRule,
    check_bound,
    integrate,
    parse_rule,
    replay,
)
from .osgood import domination_check, maximal, minimal, solve_sub, solve_super
from .peano import SolveOptions, residual_check, solve_global
from .perturb import KnownSolution, funnel, recover, verify_roundtrip
from .quad import RiemannSpec, integrate_certified, riemann_sum
from .shadow import Solution, Status, build_ladder, close, estimate_order, extract

__version__ = "0.1.0"
