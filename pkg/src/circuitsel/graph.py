"""Computation-graph data model, structural validation and connectivity pruning."""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

KEY_SEP = "|"


class GraphFormatError(ValueError):
    """Raised when graph JSON is malformed (as opposed to structurally invalid)."""


@dataclass(frozen=True, order=True)
class Node:
    id: str
    layer: int


@dataclass(frozen=True)
class Edge:
    tail: str
    head: str
    qualifier: str = ""

    @property
    def key(self) -> str:
        return edge_key(self.tail, self.head, self.qualifier)


def edge_key(tail: str, head: str, qualifier: str = "") -> str:
    return f"{tail}{KEY_SEP}{head}{KEY_SEP}{qualifier}"


def parse_edge_key(key: str) -> Edge:
    parts = key.split(KEY_SEP)
    if len(parts) != 3:
        raise ValueError(f"malformed edge key {key!r}")
    return Edge(*parts)


def _check_ident(value, what: str) -> str:
    if not isinstance(value, str):
        raise GraphFormatError(f"{what} must be a string, got {value!r}")
    if KEY_SEP in value:
        raise GraphFormatError(f"{what} {value!r} contains reserved character {KEY_SEP!r}")
    return value


@dataclass(frozen=True)
class ComputationGraph:
    """Layered multi-edge DAG with a single source and a single target.

    Construction only checks identifier syntax; structural problems are
    reported by :func:`validate_graph` so that broken inputs can be diagnosed.
    Edge order is significant: it is the canonical order used in every output.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    source: str
    target: str
    _layer: dict = field(init=False, repr=False, compare=False)
    _index: dict = field(init=False, repr=False, compare=False)
    _out: dict = field(init=False, repr=False, compare=False)
    _in: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for n in self.nodes:
            _check_ident(n.id, "node id")
        for e in self.edges:
            _check_ident(e.tail, "edge tail")
            _check_ident(e.head, "edge head")
            _check_ident(e.qualifier, "edge qualifier")
        _check_ident(self.source, "source")
        _check_ident(self.target, "target")

        layer = {n.id: n.layer for n in self.nodes}
        index: dict[str, int] = {}
        out_edges: dict[str, list[int]] = defaultdict(list)
        in_edges: dict[str, list[int]] = defaultdict(list)
        for i, e in enumerate(self.edges):
            index.setdefault(e.key, i)
            out_edges[e.tail].append(i)
            in_edges[e.head].append(i)
        object.__setattr__(self, "_layer", layer)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_out", dict(out_edges))
        object.__setattr__(self, "_in", dict(in_edges))

    # lookups

    @property
    def edge_keys(self) -> tuple[str, ...]:
        return tuple(e.key for e in self.edges)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    def layer(self, node_id: str) -> int:
        return self._layer[node_id]

    def edge(self, key: str) -> Edge:
        return self.edges[self._index[key]]

    def edge_index(self, key: str) -> int:
        return self._index[key]

    def has_edge(self, key: str) -> bool:
        return key in self._index

    def out_edges(self, node_id: str) -> list[Edge]:
        return [self.edges[i] for i in self._out.get(node_id, ())]

    def in_edges(self, node_id: str) -> list[Edge]:
        return [self.edges[i] for i in self._in.get(node_id, ())]

    # serialization

    @classmethod
    def from_dict(cls, data: Mapping) -> "ComputationGraph":
        if not isinstance(data, Mapping):
            raise GraphFormatError("graph document must be a JSON object")
        try:
            nodes = tuple(Node(_check_ident(n["id"], "node id"), _as_int(n["layer"])) for n in data["nodes"])
            edges = tuple(Edge(e["tail"], e["head"], e["qualifier"]) for e in data["edges"])
            source, target = data["source"], data["target"]
        except (KeyError, TypeError) as exc:
            raise GraphFormatError(f"graph document missing or malformed field: {exc}") from exc
        return cls(nodes, edges, source, target)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "layer": n.layer} for n in self.nodes],
            "edges": [{"tail": e.tail, "head": e.head, "qualifier": e.qualifier} for e in self.edges],
            "source": self.source,
            "target": self.target,
        }

    @property
    def fingerprint(self) -> str:
        """Content hash used as ``graph_ref`` by files derived from this graph."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(blob.encode()).hexdigest()[:16]


def _as_int(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise GraphFormatError(f"layer must be an integer, got {value!r}")
    return value


def validate_graph(g: ComputationGraph) -> list[str]:
    """Return every structural violation found in ``g``; empty means valid."""
    report: list[str] = []
    ids = [n.id for n in g.nodes]
    seen: set[str] = set()
    for node_id in ids:
        if node_id in seen:
            report.append(f"duplicate node id {node_id!r}")
        seen.add(node_id)
    for n in g.nodes:
        if n.layer < 0:
            report.append(f"node {n.id!r} has negative layer {n.layer}")

    for role, node_id in (("source", g.source), ("target", g.target)):
        if node_id not in seen:
            report.append(f"{role} {node_id!r} is not a declared node")

    keys: set[str] = set()
    for e in g.edges:
        if e.key in keys:
            report.append(f"duplicate edge {e.key!r}")
        keys.add(e.key)
        missing = [x for x in (e.tail, e.head) if x not in seen]
        if missing:
            report.append(f"edge {e.key!r} references unknown node(s) {missing}")
            continue
        if e.tail == e.head:
            report.append(f"edge {e.key!r} is a self-loop")
        elif g.layer(e.tail) >= g.layer(e.head):
            report.append(
                f"edge {e.key!r} violates layer order ({g.layer(e.tail)} >= {g.layer(e.head)})"
            )

    if g.in_edges(g.source):
        report.append("source has incoming edge")
    if g.out_edges(g.target):
        report.append("target has outgoing edge")

    no_in = [i for i in dict.fromkeys(ids) if not g.in_edges(i)]
    no_out = [i for i in dict.fromkeys(ids) if not g.out_edges(i)]
    if len(no_in) != 1:
        report.append(f"expected exactly one node with in-degree 0, found {len(no_in)}: {no_in}")
    if len(no_out) != 1:
        report.append(f"expected exactly one node with out-degree 0, found {len(no_out)}: {no_out}")

    if g.source in seen and g.target in seen:
        lo, hi = g.layer(g.source), g.layer(g.target)
        for n in g.nodes:
            if n.id in (g.source, g.target):
                continue
            if not lo < n.layer < hi:
                report.append(f"node {n.id!r} layer {n.layer} not strictly between source and target layers")

    if topological_order(g) is None:
        report.append("graph contains a cycle")
    return report


def topological_order(g: ComputationGraph) -> list[str] | None:
    """Kahn's algorithm over declared nodes; None if a cycle exists."""
    ids = list(dict.fromkeys(n.id for n in g.nodes))
    known = set(ids)
    indeg = {i: 0 for i in ids}
    for e in g.edges:
        if e.tail in known and e.head in known:
            indeg[e.head] += 1
    queue = deque(i for i in ids if indeg[i] == 0)
    order = []
    while queue:
        u = queue.popleft()
        order.append(u)
        for e in g.out_edges(u):
            if e.head in known:
                indeg[e.head] -= 1
                if indeg[e.head] == 0:
                    queue.append(e.head)
    return order if len(order) == len(ids) else None


def _reach(start: str, adjacency: dict[str, list[str]]) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adjacency.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def prune_to_connected(g: ComputationGraph, edges: Iterable[str]) -> frozenset[str]:
    """Keep the edges of ``edges`` that lie on a source-to-target path inside ``edges``.

    An edge survives iff its tail is reachable from the source and the target
    is reachable from its head, both using only edges of the subset.
    """
    subset = [g.edge(k) for k in set(edges)]
    fwd: dict[str, list[str]] = defaultdict(list)
    bwd: dict[str, list[str]] = defaultdict(list)
    for e in subset:
        fwd[e.tail].append(e.head)
        bwd[e.head].append(e.tail)
    from_source = _reach(g.source, fwd)
    to_target = _reach(g.target, bwd)
    return frozenset(e.key for e in subset if e.tail in from_source and e.head in to_target)


def edge_count_on_paths(g: ComputationGraph) -> int:
    return len(prune_to_connected(g, g.edge_keys))


def degree_violations(g: ComputationGraph, edges: Iterable[str]) -> list[str]:
    """Nodes touched by ``edges`` lacking an incoming (non-source) or outgoing (non-target) edge."""
    has_in: set[str] = set()
    has_out: set[str] = set()
    touched: set[str] = set()
    for k in edges:
        e = g.edge(k)
        has_out.add(e.tail)
        has_in.add(e.head)
        touched.update((e.tail, e.head))
    problems = []
    for v in sorted(touched):
        if v != g.source and v not in has_in:
            problems.append(f"node {v!r} has no incoming selected edge")
        if v != g.target and v not in has_out:
            problems.append(f"node {v!r} has no outgoing selected edge")
    return problems


def load_graph(path) -> ComputationGraph:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{path}: invalid JSON ({exc})") from exc
    return ComputationGraph.from_dict(data)
