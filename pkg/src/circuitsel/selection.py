"""Heuristic circuit construction: top-k, positive-negative ratio, and the greedy backward pass."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .graph import ComputationGraph, prune_to_connected
from .scoring import EdgeScores

SIGNED = "signed"
ABSOLUTE = "absolute"
RANK_MODES = (SIGNED, ABSOLUTE)
STRATEGIES = ("greedy", "topk", "pnr", "ilp")

NO_PATH_WARNING = "no complete source-target path fits within the budget"


@dataclass(frozen=True)
class SelectionConfig:
    budget_k: int
    rank_mode: str = SIGNED
    pnr: Optional[float] = None
    prune_after: bool = True

    def __post_init__(self):
        if isinstance(self.budget_k, bool) or not isinstance(self.budget_k, int) or self.budget_k < 0:
            raise ValueError(f"budget_k must be a non-negative integer, got {self.budget_k!r}")
        if self.rank_mode not in RANK_MODES:
            raise ValueError(f"rank_mode must be one of {RANK_MODES}, got {self.rank_mode!r}")
        if self.pnr is not None and not 0.0 <= self.pnr <= 1.0:
            raise ValueError(f"pnr must lie in [0, 1], got {self.pnr!r}")

    def coefficient(self, score: float) -> float:
        return abs(score) if self.rank_mode == ABSOLUTE else score


@dataclass(frozen=True)
class CircuitSelection:
    graph_ref: str
    selected_edges: frozenset
    budget_k: int
    strategy: str
    objective_value: float
    pre_prune: frozenset = field(default=frozenset(), compare=False)
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.selected_edges) > self.budget_k:
            raise ValueError("selection exceeds its budget")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def __len__(self) -> int:
        return len(self.selected_edges)


def objective(scores: EdgeScores, cfg: SelectionConfig, edges: Iterable[str]) -> float:
    """Sum of the edges' coefficients under ``cfg.rank_mode``, exactly rounded."""
    return math.fsum(cfg.coefficient(scores[k]) for k in edges)


def rank(scores: EdgeScores, keys: Iterable[str], rank_mode: str) -> list[str]:
    """Order by rank value descending, edge_key ascending on ties."""
    if rank_mode == ABSOLUTE:
        return sorted(keys, key=lambda k: (-abs(scores[k]), k))
    return sorted(keys, key=lambda k: (-scores[k], k))


def _finish(graph, scores, cfg, chosen, strategy, warnings=()):
    chosen = frozenset(chosen)
    final = chosen
    if cfg.prune_after:
        if graph is None:
            raise ValueError("pruning requested but no graph was supplied")
        final = prune_to_connected(graph, chosen)
    ref = graph.fingerprint if graph is not None else ""
    return CircuitSelection(ref, final, cfg.budget_k, strategy, objective(scores, cfg, final), chosen, tuple(warnings))


def select_topk(scores: EdgeScores, cfg: SelectionConfig, graph: ComputationGraph | None = None) -> CircuitSelection:
    ranked = rank(scores, scores.candidates(), cfg.rank_mode)
    return _finish(graph, scores, cfg, ranked[: cfg.budget_k], "topk")


def pnr_quota(pnr: float, k: int) -> int:
    # guard against 0.1*10 style products landing a hair above an integer
    return math.ceil(round(pnr * k, 9))


def select_pnr(scores: EdgeScores, cfg: SelectionConfig, graph: ComputationGraph | None = None) -> CircuitSelection:
    """Reserve ``ceil(pnr*k)`` slots for the top positive edges, fill the rest by absolute score.

    Unused positive quota (too few positive edges) rolls into the absolute phase.
    """
    if cfg.pnr is None:
        raise ValueError("select_pnr requires cfg.pnr")
    k = cfg.budget_k
    candidates = scores.candidates()
    positives = rank(scores, (e for e in candidates if scores[e] > 0), SIGNED)
    phase1 = positives[: min(pnr_quota(cfg.pnr, k), k)]
    taken = set(phase1)
    rest = rank(scores, (e for e in candidates if e not in taken), ABSOLUTE)
    phase2 = rest[: k - len(phase1)]
    return _finish(graph, scores, cfg, phase1 + phase2, "pnr")


def select_greedy(graph: ComputationGraph, scores: EdgeScores, cfg: SelectionConfig) -> CircuitSelection:
    """Backward pass from the target admitting the best edge feeding the selected set.

    The frontier holds every unselected edge whose head is already connected to
    the target; the top-ranked frontier edge is admitted, its tail joins the
    connected set, and the frontier is re-ranked, until ``k`` edges are chosen.
    The result is pruned to source-target connectivity.
    """
    if cfg.budget_k < 1:
        raise ValueError("greedy selection needs budget_k >= 1")
    excluded = scores.excluded

    def key(e):
        value = abs(scores[e.key]) if cfg.rank_mode == ABSOLUTE else scores[e.key]
        return (-value, e.key)

    connected = {graph.target}
    heap = [(*key(e), e) for e in graph.in_edges(graph.target) if e.key not in excluded]
    heapq.heapify(heap)
    chosen: list[str] = []
    while heap and len(chosen) < cfg.budget_k:
        *_, e = heapq.heappop(heap)
        chosen.append(e.key)
        if e.tail not in connected:
            connected.add(e.tail)
            for f in graph.in_edges(e.tail):
                if f.key not in excluded:
                    heapq.heappush(heap, (*key(f), f))

    chosen_set = frozenset(chosen)
    final = prune_to_connected(graph, chosen_set)
    warnings = [] if final else [NO_PATH_WARNING]
    return CircuitSelection(
        graph.fingerprint, final, cfg.budget_k, "greedy", objective(scores, cfg, final), chosen_set, tuple(warnings)
    )
