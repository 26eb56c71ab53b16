"""Circuit selection from edge attribution scores.

Bootstrapped score filtering, positive-negative-ratio selection, a greedy
backward baseline, an exact integer program, and CPR/CMD curve metrics.
"""

from .graph import ComputationGraph, Edge, Node, edge_count_on_paths, prune_to_connected, validate_graph
from .ilp import SolveLimits, brute_force_oracle, build_model, solve_exact
from .metrics import FaithfulnessCurve, cmd, cpr, sweep_sizes
from .scoring import (
    BootstrapSummary,
    EdgeScores,
    ScoreMatrix,
    bootstrap_resample,
    collapse_to_scores,
    confidence_filter,
    sign_instability,
)
from .selection import CircuitSelection, SelectionConfig, select_greedy, select_pnr, select_topk
from .synth import SynthSpec, generate

__version__ = "0.1.0"
