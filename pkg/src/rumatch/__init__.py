"""Demand inversion for random utility models through matching markets."""

from .auction import (Allocation, AuctionResult, EpsilonSchedule, auction_assign, delta_from_prices,
                      invert_auction, propagate_lower_bounds, propagate_upper_bounds)
from .blp import SmoothingParams, blp_contraction, smoothed_demand
from .exceptions import (ConfigurationError, NonConvergenceError, PreconditionError,
                         UnsupportedOperationError)
from .lp import LpDocument, export_bounds_lp, export_combined_lp, export_dual_lp, parse_lp, write_lp
from .market import DiscreteMarket, StabilityReport, check_stability, discretize_shares
from .models import (LogitModel, MultiSegmentModel, PureCharModel, UtilityModel, VerticalModel,
                     draw_sample, precompute_arum_shocks, simulate_demand, transferable_shocks)
from .msa import MsaParams, MsaResult, implied_allocation, msa_lower, msa_upper
from .oracles import brute_force_oracle, grid_search_identified_set

__version__ = "0.1.0"
