"""Full conformal prediction sets for convex regularized regression,
computed from certified approximate solution paths over the candidate label."""

from .conformal import (
    AbsoluteResidual,
    GradientBased,
    TypicalnessReport,
    assemble_absolute_residual_set,
    assemble_generic_set,
    conformity_scores,
    exact_ridge_set,
    make_measure,
    oracle_set,
    quantile,
    split_conformal,
    typicalness,
    wrap_sets,
)
from .homotopy import HomotopyPath, build_path, covering_point, step_size
from .intervals import IntervalUnion
from .losses import (
    LinexLoss,
    LogCoshLoss,
    Loss,
    PowerLoss,
    QuadraticLoss,
    Regularity,
    make_loss,
)
from .optim import (
    Dataset,
    PrimalDualPair,
    SolverConfig,
    dual_distance_bound,
    dual_feasible,
    dual_objective,
    duality_gap,
    extend_dual,
    gap_variation,
    primal_objective,
    solve_to_tol,
)
from .regularizers import L1Penalty, Regularizer, RidgePenalty, make_regularizer

__version__ = "0.1.0"
