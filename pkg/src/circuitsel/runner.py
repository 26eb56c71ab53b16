"""Dispatch a selection method and render the circuit output document."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .graph import ComputationGraph
from .ilp import SolveLimits, build_model, solve_exact
from .scoring import EdgeScores
from .selection import SelectionConfig, objective, select_greedy, select_pnr, select_topk

METHODS = ("topk", "pnr", "greedy", "ilp")


@dataclass
class SelectionResult:
    method: str
    selected: frozenset
    objective: Optional[float]
    status: str = "ok"
    explored: Optional[int] = None
    warnings: list[str] = field(default_factory=list)


def run_selection(graph: ComputationGraph, scores: EdgeScores, method: str, cfg: SelectionConfig,
                  limits: SolveLimits | None = None) -> SelectionResult:
    unknown = [k for k in graph.edge_keys if k not in scores.scores]
    extra = [k for k in scores.scores if not graph.has_edge(k)]
    if unknown or extra:
        raise ValueError(f"scores do not match graph edges ({len(unknown)} missing, {len(extra)} unknown)")
    if method == "ilp":
        sol = solve_exact(build_model(graph, scores, cfg), limits)
        return SelectionResult(method, sol.selected_edges, sol.objective_value, sol.status,
                               sol.node_count_explored, list(sol.warnings))
    if method == "topk":
        sel = select_topk(scores, cfg, graph)
    elif method == "pnr":
        sel = select_pnr(scores, cfg, graph)
    elif method == "greedy":
        sel = select_greedy(graph, scores, cfg)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SelectionResult(method, sel.selected_edges, objective(scores, cfg, sel.selected_edges),
                           warnings=list(sel.warnings))


def circuit_document(graph: ComputationGraph, scores: EdgeScores, result: SelectionResult,
                     cfg: SelectionConfig, config: dict) -> dict:
    doc = {
        "graph_ref": graph.fingerprint,
        "strategy": result.method,
        "k": cfg.budget_k,
        "edges": {
            k: {"score": float(scores[k]), "in_circuit": k in result.selected} for k in graph.edge_keys
        },
        "objective": result.objective,
        "warnings": list(result.warnings),
    }
    if result.method == "ilp":
        doc["status"] = result.status
        doc["explored_nodes"] = result.explored
    doc["config"] = config
    return doc
