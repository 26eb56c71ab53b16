"""Integer-program circuit selection with an in-repo branch-and-bound solver.

Variables are one binary ``x`` per edge and one binary ``y`` per node. The
model maximizes the summed coefficients of selected edges subject to an edge
budget, forced source/target usage, edge-node consistency, in/out
connectivity for used nodes, and an optional minimum count of
positively-scored edges.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional

from .graph import ComputationGraph, prune_to_connected, validate_graph
from .scoring import EdgeScores
from .selection import SelectionConfig, pnr_quota

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
BUDGET_EXHAUSTED = "budget_exhausted"

ORACLE_MAX_EDGES = 20


class InvalidModelError(ValueError):
    pass


class AuditError(RuntimeError):
    """A returned assignment violated a constraint row; always a solver bug."""


def xvar(key: str) -> str:
    return f"x:{key}"


def yvar(node: str) -> str:
    return f"y:{node}"


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[str, int], ...]
    sense: str  # "<=", ">=", "=="
    rhs: float

    def satisfied(self, values: dict[str, int]) -> bool:
        lhs = sum(c * values[v] for v, c in self.terms)
        if self.sense == "<=":
            return lhs <= self.rhs
        if self.sense == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass(frozen=True)
class SolveLimits:
    max_nodes: int = 10_000_000
    max_seconds: float = 300.0


@dataclass
class IlpModel:
    graph: ComputationGraph
    edge_keys: tuple[str, ...]
    node_ids: tuple[str, ...]
    coefficients: tuple[float, ...]
    positive: tuple[bool, ...]
    budget_k: int
    pnr: Optional[float]
    excluded: frozenset
    rows: list[Row]

    @property
    def positive_quota(self) -> int:
        return pnr_quota(self.pnr, self.budget_k) if self.pnr is not None else 0

    def rows_named(self, prefix: str) -> list[Row]:
        return [r for r in self.rows if r.name.split(":", 1)[0] == prefix]

    def objective(self, edges) -> float:
        idx = {k: i for i, k in enumerate(self.edge_keys)}
        return math.fsum(self.coefficients[idx[k]] for k in edges)


@dataclass
class IlpSolution:
    status: str
    selected_edges: frozenset
    objective_value: Optional[float]
    nodes_used: frozenset
    node_count_explored: int
    warnings: list[str] = field(default_factory=list)


def build_model(g: ComputationGraph, scores: EdgeScores, cfg: SelectionConfig) -> IlpModel:
    problems = validate_graph(g)
    if problems:
        raise InvalidModelError("graph failed validation: " + "; ".join(problems))
    if cfg.budget_k < 1:
        raise InvalidModelError("ILP needs budget_k >= 1")
    missing = [k for k in g.edge_keys if k not in scores.scores]
    if missing:
        raise InvalidModelError(f"no score for {len(missing)} edge(s), e.g. {missing[0]!r}")

    keys = g.edge_keys
    rows: list[Row] = [Row("budget", tuple((xvar(k), 1) for k in keys), "<=", cfg.budget_k)]
    rows.append(Row("fix:source", ((yvar(g.source), 1),), "==", 1))
    rows.append(Row("fix:target", ((yvar(g.target), 1),), "==", 1))
    for e in g.edges:
        rows.append(Row(f"consistency:{e.key}:tail", ((xvar(e.key), 1), (yvar(e.tail), -1)), "<=", 0))
        rows.append(Row(f"consistency:{e.key}:head", ((xvar(e.key), 1), (yvar(e.head), -1)), "<=", 0))
    # target exempt from the outgoing row, source from the incoming row
    for n in g.node_ids:
        if n != g.target:
            terms = tuple((xvar(e.key), 1) for e in g.out_edges(n)) + ((yvar(n), -1),)
            rows.append(Row(f"out:{n}", terms, ">=", 0))
    for n in g.node_ids:
        if n != g.source:
            terms = tuple((xvar(e.key), 1) for e in g.in_edges(n)) + ((yvar(n), -1),)
            rows.append(Row(f"in:{n}", terms, ">=", 0))
    positive = tuple(scores[k] > 0 for k in keys)
    if cfg.pnr is not None:
        terms = tuple((xvar(k), 1) for k, p in zip(keys, positive) if p)
        rows.append(Row("pnr", terms, ">=", pnr_quota(cfg.pnr, cfg.budget_k)))
    excluded = frozenset(k for k in keys if k in scores.excluded)
    for k in keys:
        if k in excluded:
            rows.append(Row(f"excluded:{k}", ((xvar(k), 1),), "==", 0))

    return IlpModel(
        graph=g,
        edge_keys=keys,
        node_ids=g.node_ids,
        coefficients=tuple(cfg.coefficient(scores[k]) for k in keys),
        positive=positive,
        budget_k=cfg.budget_k,
        pnr=cfg.pnr,
        excluded=excluded,
        rows=rows,
    )


def assignment(model: IlpModel, edges) -> dict[str, int]:
    """The x/y assignment induced by an edge set (nodes used iff touched, plus source/target)."""
    g = model.graph
    chosen = set(edges)
    used = {g.source, g.target}
    for k in chosen:
        e = g.edge(k)
        used.update((e.tail, e.head))
    values = {xvar(k): int(k in chosen) for k in model.edge_keys}
    values.update({yvar(n): int(n in used) for n in model.node_ids})
    return values


def audit(model: IlpModel, edges) -> list[str]:
    """Names of constraint rows violated by the assignment induced by ``edges``."""
    values = assignment(model, edges)
    return [r.name for r in model.rows if not r.satisfied(values)]


class _Search:
    """Depth-first branch and bound over edge variables.

    Node variables are implied: a node is used iff a selected edge touches it
    (source and target always). Each search node propagates by fixing to 0
    every undecided edge that can no longer lie on a source-target path, then
    bounds by the current value plus the best ``k - |selected|`` positive
    coefficients still available.
    """

    def __init__(self, model: IlpModel, limits: SolveLimits):
        g = model.graph
        self.model = model
        self.limits = limits
        self.n_edges = len(model.edge_keys)
        node_index = {n: i for i, n in enumerate(model.node_ids)}
        self.n_nodes = len(node_index)
        self.s = node_index[g.source]
        self.t = node_index[g.target]
        self.tail = [node_index[g.edge(k).tail] for k in model.edge_keys]
        self.head = [node_index[g.edge(k).head] for k in model.edge_keys]
        self.out = [[] for _ in range(self.n_nodes)]
        self.inc = [[] for _ in range(self.n_nodes)]
        for i in range(self.n_edges):
            self.out[self.tail[i]].append(i)
            self.inc[self.head[i]].append(i)
        self.coef = model.coefficients
        self.pos = model.positive
        self.quota = model.positive_quota
        self.k = model.budget_k
        # branching priority: largest |coefficient|, then edge_key
        self.priority = sorted(range(self.n_edges), key=lambda i: (-abs(self.coef[i]), model.edge_keys[i]))
        self.by_coef = sorted(range(self.n_edges), key=lambda i: (-self.coef[i], model.edge_keys[i]))

        # excluded edges are pinned outside the trail so undo never frees them
        self.state = [0 if k in model.excluded else -1 for k in model.edge_keys]
        self.trail: list[int] = []
        self.best: Optional[float] = None
        self.best_set: Optional[list[int]] = None
        self.explored = 0
        self.exhausted = False

    def assign(self, i: int, v: int) -> None:
        self.state[i] = v
        self.trail.append(i)

    def undo(self, mark: int) -> None:
        while len(self.trail) > mark:
            self.state[self.trail.pop()] = -1

    def _reach(self, start, adj, far_end) -> list[bool]:
        seen = [False] * self.n_nodes
        seen[start] = True
        stack = [start]
        state = self.state
        while stack:
            u = stack.pop()
            for i in adj[u]:
                if state[i] != 0:
                    w = far_end[i]
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
        return seen

    def process(self):
        """Evaluate the current node; return the branching edge or None if closed."""
        self.explored += 1
        state = self.state
        fwd = self._reach(self.s, self.out, self.head)
        bwd = self._reach(self.t, self.inc, self.tail)
        for i in range(self.n_edges):
            if not (fwd[self.tail[i]] and bwd[self.head[i]]):
                if state[i] == 1:
                    return None
                if state[i] == -1:
                    self.assign(i, 0)

        selected = [i for i in range(self.n_edges) if state[i] == 1]
        nsel = len(selected)
        if nsel > self.k:
            return None
        has_in = [False] * self.n_nodes
        has_out = [False] * self.n_nodes
        can_in = [False] * self.n_nodes
        can_out = [False] * self.n_nodes
        used = [False] * self.n_nodes
        used[self.s] = used[self.t] = True
        free_pos = 0
        for i in range(self.n_edges):
            if state[i] == 1:
                has_out[self.tail[i]] = has_in[self.head[i]] = True
                used[self.tail[i]] = used[self.head[i]] = True
            elif state[i] == -1:
                can_out[self.tail[i]] = can_in[self.head[i]] = True
                free_pos += self.pos[i]
        def_in = def_out = 0
        for v in range(self.n_nodes):
            if not used[v]:
                continue
            if v != self.s and not has_in[v]:
                if not can_in[v]:
                    return None
                def_in += 1
            if v != self.t and not has_out[v]:
                if not can_out[v]:
                    return None
                def_out += 1
        npos = sum(self.pos[i] for i in selected)
        pos_short = max(0, self.quota - npos)
        if pos_short > free_pos:
            return None
        if nsel + max(def_in, def_out, pos_short) > self.k:
            return None

        current = [self.coef[i] for i in selected]
        if def_in == 0 and def_out == 0 and pos_short == 0:
            value = math.fsum(current)
            if self.best is None or value > self.best:
                self.best, self.best_set = value, selected

        room = self.k - nsel
        if room == 0:
            return None
        extra = []
        for i in self.by_coef:
            if len(extra) == room or self.coef[i] <= 0:
                break
            if state[i] == -1:
                extra.append(self.coef[i])
        if self.best is not None and math.fsum(current + extra) <= self.best:
            return None
        for i in self.priority:
            if state[i] == -1:
                return i
        return None

    def run(self) -> None:
        deadline = time.monotonic() + self.limits.max_seconds
        stack = []
        branch = self.process()
        while True:
            if branch is not None:
                mark = len(self.trail)
                first = 1 if self.coef[branch] > 0 else 0
                stack.append((mark, branch, 1 - first))
                stack.append((mark, branch, first))
            if not stack:
                return
            if self.explored >= self.limits.max_nodes or (
                self.explored % 256 == 0 and time.monotonic() > deadline
            ):
                self.exhausted = True
                return
            mark, i, v = stack.pop()
            self.undo(mark)
            self.assign(i, v)
            branch = self.process()


def solve_exact(model: IlpModel, limits: SolveLimits | None = None) -> IlpSolution:
    """Solve the model to proven optimality (or report infeasibility / exhausted limits).

    Every returned assignment is re-checked against the raw constraint rows;
    a violation raises :class:`AuditError`.
    """
    limits = limits or SolveLimits()
    search = _Search(model, limits)
    search.run()

    if search.best_set is None:
        status = BUDGET_EXHAUSTED if search.exhausted else INFEASIBLE
        return IlpSolution(status, frozenset(), None, frozenset(), search.explored)

    chosen = frozenset(model.edge_keys[i] for i in search.best_set)
    violated = audit(model, chosen)
    if violated:
        raise AuditError(f"solver returned an assignment violating rows {violated}")
    g = model.graph
    warnings = []
    pruned = prune_to_connected(g, chosen)
    if pruned != chosen:
        warnings.append(f"{len(chosen - pruned)} selected edge(s) lie on no source-target path")
    values = assignment(model, chosen)
    nodes_used = frozenset(n for n in model.node_ids if values[yvar(n)])
    status = BUDGET_EXHAUSTED if search.exhausted else OPTIMAL
    return IlpSolution(status, chosen, model.objective(chosen), nodes_used, search.explored, warnings)


def brute_force_oracle(g: ComputationGraph, scores: EdgeScores, cfg: SelectionConfig) -> IlpSolution:
    """Enumerate every edge subset and check each constraint directly from the graph.

    Independent of :func:`build_model`; ties go to the lexicographically
    smallest sorted tuple of edge keys.
    """
    keys = g.edge_keys
    if len(keys) > ORACLE_MAX_EDGES:
        raise ValueError(f"oracle enumerates at most {ORACLE_MAX_EDGES} edges, got {len(keys)}")
    bit = {k: 1 << i for i, k in enumerate(keys)}
    in_mask: dict[str, int] = {n: 0 for n in g.node_ids}
    out_mask: dict[str, int] = {n: 0 for n in g.node_ids}
    for e in g.edges:
        out_mask[e.tail] |= bit[e.key]
        in_mask[e.head] |= bit[e.key]
    banned = sum(bit[k] for k in keys if k in scores.excluded)
    pos_mask = sum(bit[k] for k in keys if scores[k] > 0)
    need_pos = math.ceil(round(cfg.pnr * cfg.budget_k, 9)) if cfg.pnr is not None else 0
    coef = {k: abs(scores[k]) if cfg.rank_mode == "absolute" else scores[k] for k in keys}

    best_value = None
    best_keys: Optional[tuple[str, ...]] = None
    checked = 0
    for size in range(0, min(cfg.budget_k, len(keys)) + 1):
        for combo in itertools.combinations(range(len(keys)), size):
            checked += 1
            mask = sum(1 << i for i in combo)
            if mask & banned:
                continue
            if bin(mask & pos_mask).count("1") < need_pos:
                continue
            ok = True
            for n in g.node_ids:
                touched = (mask & (in_mask[n] | out_mask[n])) or n in (g.source, g.target)
                if not touched:
                    continue
                if n != g.source and not mask & in_mask[n]:
                    ok = False
                    break
                if n != g.target and not mask & out_mask[n]:
                    ok = False
                    break
            if not ok:
                continue
            chosen = tuple(sorted(keys[i] for i in combo))
            value = math.fsum(coef[k] for k in chosen)
            if best_value is None or value > best_value or (value == best_value and chosen < best_keys):
                best_value, best_keys = value, chosen

    if best_keys is None:
        return IlpSolution(INFEASIBLE, frozenset(), None, frozenset(), checked)
    used = {g.source, g.target}
    for k in best_keys:
        e = g.edge(k)
        used.update((e.tail, e.head))
    return IlpSolution(OPTIMAL, frozenset(best_keys), best_value, frozenset(used), checked)
