"""flowchain: chaining tail bounds, rate functions and dispersion
constants for stochastic flows, verified by Monte Carlo and analytic
oracles."""

__version__ = "0.1.0"

from .params import DiffFlowParams, DispersionParams, HParams
from .bounds import (ChainNetSpec, EntropySpec, GrrInstance, KolmogorovParams,
                     basic_chaining_bound, cube_entropy_J, cube_entropy_spec,
                     default_net_spec, entropy_integral_J, grr_functional,
                     grr_modulus_bound, hp_pairwise_tail, kolmogorov_bounds,
                     lt_tail_bound, optimized_exponent, orlicz_power_norm,
                     small_ball_tail_bound, small_ball_tail_log_bound)
from .rates import (bm_range_density, bm_range_tail, bump_field_rate,
                    diff_flow_finite_bound, diff_flow_rate, gamma0,
                    growth_constant_K, growth_constant_homeo, hitting_laplace,
                    negative_drift_growth_bound, one_point_rate,
                    schilder_infimum, small_ball_rate, small_ball_rate_homeo)
from .flows import (BumpFieldModel, LinearFlowModel, PathEnsemble,
                    SdeFlowModel, crossing_prob, lipschitz_to_H_params,
                    order_preserving, simulate_bump_field, simulate_linear,
                    simulate_sde_flow)
from .experiments import (CompactSet, ExperimentSpec, RateFit, TailEstimate,
                          clopper_pearson, compare_bounds,
                          dispersion_experiment, estimate_tail, fit_rate,
                          fit_rate_values, grr_pathwise_audit,
                          moment_hypothesis_check)

__all__ = [name for name in dir() if not name.startswith("_")]
