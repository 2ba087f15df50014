"""Projected stochastic optimization of Lipschitz losses under a weighted
group l0-norm constraint intersected with a box."""

from .constraint import (
    BoxParams,
    GroupPartition,
    IndexSets,
    frechet_cone_contains,
    index_sets,
    is_feasible,
    maximal_active_sets,
    project,
    stationarity_distance,
)
from .datasets import Dataset, load_idx, load_idx_dataset, make_blobs
from .estimation import LipschitzEstimate, delta_bound, estimate_delta, estimate_l0_q
from .knapsack import (
    KnapsackInstance,
    KnapsackSolution,
    solve_bnb,
    solve_dp,
    solve_exhaustive,
)
from .oracles import (
    AbsSum,
    MaxAffine,
    Quadratic,
    StochasticProblem,
    TinyNetProblem,
    builtin_problem,
)
from .smoothing import (
    GradientEstimate,
    SmoothingParams,
    StreamTree,
    estimate_f_alpha,
    first_order_estimate,
    minibatch_estimate,
    sample_u,
    substream,
    zeroth_order_estimate,
)
from .spa import (
    HPResult,
    ProblemMeta,
    RunResult,
    SPAConfig,
    StageResult,
    Targets,
    constants_c1_c2,
    derive_params,
    evaluate_stationarity,
    geometric_schedule,
    hp_parameters,
    initialize_feasible,
    meta_from_problem,
    run_asymptotic,
    run_high_probability,
    run_spa,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
