"""Monte Carlo toolkit for SDEs with rough drifts: Euler-Maruyama ensembles,
Jacobian and Malliavin derivative flows, Bismut-Elworthy-Li gradients, the
Zvonkin transform and a stochastic-Lagrangian Navier-Stokes solver."""

from .errors import FieldEvaluationError, HorizonTooLongError, IntervalTooLongError, NumericalError
from .fields import DiffusionSpec, DriftSpec, MollifierSpec, lq_lp_norm, mollify
from .grids import GridField
from .paths import BrownianEnsemble, PathEnsemble, TimeGrid, generate
from .solver import euler_maruyama

__version__ = "0.1.0"

__all__ = [
    "BrownianEnsemble", "DiffusionSpec", "DriftSpec", "FieldEvaluationError", "GridField",
    "HorizonTooLongError", "IntervalTooLongError", "MollifierSpec", "NumericalError",
    "PathEnsemble", "TimeGrid", "euler_maruyama", "generate", "lq_lp_norm", "mollify",
]
