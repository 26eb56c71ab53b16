"""Synthetic layered graphs and score matrices with a planted circuit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ComputationGraph, Edge, Node, prune_to_connected
from .scoring import PER_EXAMPLE, ScoreMatrix

SOURCE = "input"
TARGET = "logits"


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters.

    ``layers`` counts every stratum including the source (first) and the
    target (last); interior strata hold ``nodes_per_layer`` nodes each and
    adjacent strata are joined completely, with ``qualifiers_per_pair``
    parallel edges per node pair.

    Planted edges score ``m_e + noise`` with ``m_e ~ U[1, 2]``. Every other
    edge carries a decoy of magnitude ``d_e ~ U[0.5, 1.5]`` that is negative
    per example, flipped positive with ``flip_probability``, plus the same
    Gaussian noise (so at flip 0.5 the decoys are zero-mean).
    """

    layers: int = 4
    nodes_per_layer: int = 3
    qualifiers_per_pair: int = 1
    planted_fraction: float = 0.3
    noise_sigma: float = 0.0
    flip_probability: float = 0.0
    examples_n: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.layers < 2:
            raise ValueError("layers must be >= 2")
        if self.nodes_per_layer < 1 or self.qualifiers_per_pair < 1 or self.examples_n < 1:
            raise ValueError("nodes_per_layer, qualifiers_per_pair and examples_n must be >= 1")
        if not 0 < self.planted_fraction <= 1:
            raise ValueError("planted_fraction must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.flip_probability <= 1:
            raise ValueError("flip_probability must lie in [0, 1]")


def layered_graph(layers: int, width: int, qualifiers: int) -> ComputationGraph:
    strata = [[SOURCE]]
    strata += [[f"n{layer}.{i}" for i in range(width)] for layer in range(1, layers - 1)]
    strata.append([TARGET])
    nodes = tuple(Node(n, layer) for layer, names in enumerate(strata) for n in names)
    edges = tuple(
        Edge(u, v, f"q{q}")
        for lower, upper in zip(strata, strata[1:])
        for u in lower
        for v in upper
        for q in range(qualifiers)
    )
    return ComputationGraph(nodes, edges, SOURCE, TARGET)


def _plant(g: ComputationGraph, fraction: float, rng: np.random.Generator) -> frozenset:
    """Union of random source-target paths until ``fraction`` of the edges are covered."""
    goal = max(1, int(np.ceil(fraction * len(g.edges))))
    planted: set[str] = set()
    while len(planted) < goal:
        node = g.source
        while node != g.target:
            options = g.out_edges(node)
            e = options[rng.integers(len(options))]
            planted.add(e.key)
            node = e.head
    return frozenset(planted)


def generate(spec: SynthSpec) -> tuple[ComputationGraph, ScoreMatrix, frozenset]:
    rng = np.random.default_rng(spec.seed)
    g = layered_graph(spec.layers, spec.nodes_per_layer, spec.qualifiers_per_pair)
    planted = _plant(g, spec.planted_fraction, rng)
    n_edges, n = len(g.edges), spec.examples_n

    is_planted = np.array([k in planted for k in g.edge_keys])
    base = np.where(is_planted, rng.uniform(1.0, 2.0, n_edges), -rng.uniform(0.5, 1.5, n_edges))
    flips = rng.random((n_edges, n)) < spec.flip_probability
    signs = np.where(flips & ~is_planted[:, None], -1.0, 1.0)
    noise = rng.standard_normal((n_edges, n)) * spec.noise_sigma
    values = base[:, None] * signs + noise

    assert prune_to_connected(g, planted) == planted
    return g, ScoreMatrix(g.fingerprint, PER_EXAMPLE, g.edge_keys, values), planted
