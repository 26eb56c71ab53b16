import json

import pytest

from circuitsel.graph import ComputationGraph, Edge, Node

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(name, passed, detail)``."""

    def record(name: str, passed: bool, detail: str = "") -> bool:
        _CRITERIA.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def make_graph(edges, layers=None, source="s", target="t"):
    """Graph from ``(tail, head[, qualifier])`` tuples; layers default to longest-path depth."""
    es = tuple(Edge(*e) if len(e) == 3 else Edge(e[0], e[1], "") for e in edges)
    names = list(dict.fromkeys([source] + [x for e in es for x in (e.tail, e.head)] + [target]))
    if layers is None:
        layers = {n: 0 for n in names}
        for _ in names:
            for e in es:
                layers[e.head] = max(layers[e.head], layers[e.tail] + 1)
        top = max(layers.values())
        layers[target] = max(layers[target], top)
    return ComputationGraph(tuple(Node(n, layers[n]) for n in names), es, source, target)


@pytest.fixture
def chain():
    return make_graph([("s", "a"), ("a", "t")])


@pytest.fixture
def diamond():
    return make_graph([("s", "a"), ("a", "t"), ("s", "b"), ("b", "t")])


def write_json(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path
