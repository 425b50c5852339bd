"""Capacity-achieving transmit covariance for frequency-selective MIMO channels.

The ergodic mutual information of a Kronecker-correlated multipath channel is
replaced by its large-system approximation, which is maximized over the
normalized-trace covariances by iterative waterfilling; Monte-Carlo estimates
of the true ergodic mutual information validate the result.
"""

from .canonical import (CanonicalSolverError, DeltaSolution, IllConditionedResolvent,
                        MaxIterationsExceeded, NonFiniteIterate, f_maps, resolvent_T,
                        resolvent_T_tilde, solve_canonical, uniqueness_certificate)
from .channel import (FIVE_CLUSTER_PATHS, ChannelStats, PathAngularSpec, build_channel_stats,
                      build_ula_correlation, draw_channel, draw_channels, iid_stats)
from .emi import (EmiEstimate, directional_derivative, emi, emi_approx, emi_monte_carlo,
                  random_covariance, stationarity_defect, v_function, v_gradient)
from .kernels import BACKEND
from .optimizer import (OptimizationResult, WaterfillSolution, optimality_check,
                        optimize_covariance, waterfill)

__version__ = "0.1.0"
