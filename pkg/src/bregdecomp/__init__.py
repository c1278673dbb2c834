"""Two-component signal/image decomposition with nested Bregman iterations.

The library solves ill-posed decomposition problems

    A(u + v) = f_delta,   ||noise|| <= delta

by pairing two convex penalties (one per component) inside constrained or
penalized variational solves, and improving the split iteratively by
replacing the first penalty with its Bregman distance at the previous
iterate.  A normalized-cross-correlation stopping rule picks the outer
iteration index.
"""

from .config import DEFAULT_CONFIG, SolverConfig
from .errors import (BracketFailure, BregdecompError, CertificateFailure,
                     ConfigError, DegenerateReference, DiscrepancyNeverMet,
                     Infeasible, NonConverged, ZeroSignal)
from .fields import (Field, Grid, Identity, PeriodicGaussianBlur, TensorField,
                     VectorField, divergence_fd, gradient_fd, inner,
                     make_operator, operator_norm_estimate, sym_divergence,
                     sym_gradient)
from .regularizers import (Regularizer, bregman_distance_decomposition_check,
                           bregman_shift, h1_sq, huber_tv, inf_conv_eval, l1,
                           sq_l2, tgv2, tgv_osci, tv_iso, value)
from .solvers import (DecompositionProblem, SolveResult, solve_morozov,
                      solve_tikhonov)
from .bregman import BregmanState, bregman_run, discrepancy_index
from .nested import (NestedState, Trajectory, nested_bregman_step,
                     nested_morozov_step, nested_noisefree_run, run_nested,
                     subgradient_update)
from .diagnostics import (CorrelationMap, bound_tracker, first_local_min, ncc,
                          psnr, scalar_correlation, subgradient_certificate)
from .experiments import (GroundTruth, add_gaussian_noise, gen_exp1, gen_exp2,
                          gen_exp3)

__version__ = "0.1.0"
