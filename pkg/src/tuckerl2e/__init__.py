"""Robust Tucker decomposition by minimizing the L2 criterion."""
from .baseline import HooiConfig, hooi, hosvd, truncated_svd
from .l2e import (FitConfig, L2EModel, MaskedTensor, TuckerL2EObjective, fit, l2e_gradient,
                  l2e_objective, mean_absolute_deviation, pack, predict, univariate_l2e, unpack)
from .optim import BoxBounds, SolveResult, SolverConfig, minimize
from .rank_select import CvPlan, CvResult, cross_validate, make_plan
from .sim import (Condition, CorruptionSpec, GroundTruth, corrupt, generate_low_rank,
                  relative_error, replicate_data, run_grid, run_misspec_sweep, run_phase_grid, run_rank_sweep)
from .tensor import (KruskalTensor, TuckerTensor, fold, kruskal_to_full, mode_product,
                     multi_mode_product, tucker_to_full, unfold)

__version__ = "0.1.0"
