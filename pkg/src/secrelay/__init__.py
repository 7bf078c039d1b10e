"""Secrecy-rate bounds and power allocation for parallel Gaussian
relay-eavesdropper channels."""

from .channel import (Allocation, ChannelError, DeterministicSubchannel,
                      FadingDraw, GaussianSubchannel, Geometry, LinkGains, Mode,
                      ModeAssignment, ParallelChannel, PowerBudget,
                      channel_from_dict, channel_to_dict, load_instance,
                      make_channel, uniform_allocation, validate_channel)
from .optim import (DeafCapacity, KinkProximityError, OracleSizeError,
                    SolverOptions, detect_deaf_capacity, finite_diff_check,
                    grid_oracle, maximize_deaf, maximize_lower, maximize_upper,
                    project_budget)
from .rates import (BoundResult, RateTerms, cap, deaf_bound_value,
                    deaf_condition_holds, deterministic_across,
                    deterministic_separate, df_terms, interference_upper_value,
                    lower_bound_value, nf_terms, upper_bound_value)

__version__ = "0.1.0"
