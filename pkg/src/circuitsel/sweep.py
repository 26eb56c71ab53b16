"""Hyper-parameter sweeps over method, PNR, bootstrap runs and budget."""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import _io
from .graph import ComputationGraph
from .ilp import SolveLimits
from .runner import circuit_document, run_selection
from .scoring import EdgeScores, PER_EXAMPLE, bootstrap_resample, confidence_filter, collapse_to_scores
from .selection import SelectionConfig

CSV_COLUMNS = (
    "cell", "method", "rank", "k", "pnr", "tau", "status", "objective", "n_selected", "explored_nodes", "warnings",
    "circuit_file",
)

PNR_METHODS = ("pnr", "ilp")


@dataclass(frozen=True)
class Cell:
    index: int
    method: str
    rank: str
    k: int
    pnr: Optional[float]
    tau: Optional[int]

    @property
    def name(self) -> str:
        pnr = "none" if self.pnr is None else f"{self.pnr:g}"
        tau = "none" if self.tau is None else str(self.tau)
        return f"{self.index:04d}_{self.method}_{self.rank}_k{self.k}_pnr{pnr}_tau{tau}"


def expand_grid(methods: Sequence[str], ranks: Sequence[str], ks: Sequence[int],
                pnr_grid: Sequence[Optional[float]], tau_grid: Sequence[Optional[int]]) -> list[Cell]:
    """Cartesian product; PNR values only multiply the methods that use them."""
    cells = []
    tau_values = list(tau_grid) or [None]
    for tau, method, rank in itertools.product(tau_values, methods, ranks):
        if method in PNR_METHODS:
            pnrs = list(pnr_grid) or [None]
            if method == "pnr" and None in pnrs:
                raise ValueError("method 'pnr' needs numeric PNR values")
        else:
            pnrs = [None]
        for pnr, k in itertools.product(pnrs, ks):
            cells.append(Cell(len(cells), method, rank, k, pnr, tau))
    return cells


def scores_for_tau(source, tau: Optional[int], z: float, threshold: float, seed: int) -> EdgeScores:
    if isinstance(source, EdgeScores):
        if tau is not None:
            raise ValueError("a tau grid needs a per_example score matrix, not pre-filtered scores")
        return source
    if tau is None:
        return collapse_to_scores(source)
    if source.column_kind != PER_EXAMPLE:
        raise ValueError("a tau grid needs a per_example score matrix")
    return confidence_filter(bootstrap_resample(source, tau, seed), z, threshold).edge_scores()


def _run_cell(args):
    graph, scores, cell, prune, limits, out_dir, base_config = args
    row = {"cell": cell.index, "method": cell.method, "rank": cell.rank, "k": cell.k,
           "pnr": "" if cell.pnr is None else cell.pnr, "tau": "" if cell.tau is None else cell.tau,
           "status": "", "objective": "", "n_selected": "", "explored_nodes": "", "warnings": "",
           "circuit_file": ""}
    try:
        if isinstance(scores, Exception):
            raise scores
        cfg = SelectionConfig(cell.k, cell.rank, cell.pnr, prune)
        result = run_selection(graph, scores, cell.method, cfg, limits)
        config = dict(base_config, method=cell.method, k=cell.k, rank=cell.rank, pnr=cell.pnr, tau=cell.tau)
        doc = circuit_document(graph, scores, result, cfg, config)
        rel = Path("circuits") / f"{cell.name}.json"
        _io.write_json(Path(out_dir) / rel, doc)
        row.update(status=result.status, objective="" if result.objective is None else repr(result.objective),
                   n_selected=len(result.selected), warnings="; ".join(result.warnings),
                   explored_nodes="" if result.explored is None else result.explored, circuit_file=rel.as_posix())
    except Exception as exc:  # a failed cell is reported in its row, the sweep goes on
        row.update(status="error", warnings=f"{type(exc).__name__}: {exc}")
    return row


@dataclass
class SweepReport:
    rows: list[dict]
    csv_path: Path

    @property
    def failed(self) -> int:
        return sum(r["status"] == "error" for r in self.rows)


def run_sweep(graph: ComputationGraph, source, cells: Sequence[Cell], out_dir, *, prune: bool = True,
              z: float = 1.96, threshold: float = 0.0, seed: int = 0, limits: SolveLimits | None = None,
              jobs: int = 1, base_config: dict | None = None) -> SweepReport:
    """Run every cell, write one circuit file per cell plus ``sweep.csv``.

    ``source`` is a :class:`ScoreMatrix` (optionally bootstrapped per tau) or
    ready :class:`EdgeScores`.
    """
    limits = limits or SolveLimits()
    out_dir = Path(out_dir)
    base_config = dict(base_config or {})
    by_tau = {}
    for tau in dict.fromkeys(c.tau for c in cells):
        try:
            by_tau[tau] = scores_for_tau(source, tau, z, threshold, seed)
        except Exception as exc:
            by_tau[tau] = exc
    tasks = [(graph, by_tau[c.tau], c, prune, limits, str(out_dir), base_config) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    csv_path = out_dir / "sweep.csv"
    _io.atomic_write_text(csv_path, buf.getvalue())
    return SweepReport(rows, csv_path)

