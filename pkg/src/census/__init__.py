"""Biased random-walk token circulation for counting and aggregation in mobile ad hoc networks."""
from .aggregation import (Average, Count, Histogram, Max, Min, Sum, dedup_and_total,
                          flood_exfiltrate, merge)
from .analysis import (gradient_cover_series, gradient_overhead_series, lemma1_threshold,
                       local_bias_cover_series, loglog_slope, nn_cdf, nn_pdf, theta,
                       union_coverage_theory)
from .engine import Trial, TrialConfig, run_trial
from .metrics import TrialMetrics, exploration_ratio, summarize, union_coverage
from .mobility import GaussMarkov, RandomWalk2D, RandomWaypoint, make_mobility, step_mobility
from .protocol import ProtocolConfig, Token, Variant
from .world import Channel, InvalidParameter, WorldConfig, derive_world, neighbors, rng_stream

__version__ = "0.1.0"
