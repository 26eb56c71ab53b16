"""Command-line entry point.

Every subcommand accepts ``--config FILE``, a YAML mapping whose keys are the
flag names (dashes or underscores); flags given on the command line override
file values. Output documents embed the resolved configuration.

Exit codes: 0 success, 1 invalid input or config, 2 solver limit hit
(incumbent returned when one exists), 3 infeasible model.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import _io
from .graph import GraphFormatError, edge_count_on_paths, load_graph, validate_graph
from .ilp import BUDGET_EXHAUSTED, INFEASIBLE, SolveLimits
from .metrics import FaithfulnessCurve, cmd, cpr, sweep_sizes
from .runner import METHODS, circuit_document, run_selection
from .scoring import (
    PER_EXAMPLE,
    BootstrapSummary,
    ScoreFormatError,
    ScoreMatrix,
    bootstrap_resample,
    confidence_filter,
    load_edge_scores,
    sign_instability,
)
from .selection import RANK_MODES, SelectionConfig
from .sweep import expand_grid, run_sweep
from .synth import SynthSpec, generate

log = logging.getLogger("circuitsel")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_LIMIT = 2
EXIT_INFEASIBLE = 3

DEFAULTS = {
    "validate": {"graph": None, "scores": None},
    "bootstrap-filter": {"scores": None, "tau": 10, "z": 1.96, "threshold": 0.0, "seed": 0, "out": None},
    "select": {
        "graph": None, "scores": None, "out": None, "method": "topk", "k": None, "rank": "signed", "pnr": None,
        "prune": True, "max_nodes": 10_000_000, "max_seconds": 300.0,
    },
    "sweep": {
        "graph": None, "scores": None, "out_dir": None, "methods": ["greedy", "ilp"], "ranks": ["signed"],
        "k": None, "fractions": None, "pnr_grid": [], "tau_grid": [], "z": 1.96, "threshold": 0.0, "seed": 0,
        "prune": True, "max_nodes": 10_000_000, "max_seconds": 300.0, "jobs": 1,
    },
    "metrics": {"metric": None, "curve": None},
    "stats": {"scores": None, "mu_floor": 1e-6, "out": None},
    "synth": {
        "layers": 4, "width": 3, "qualifiers": 1, "planted": 0.3, "noise": 0.0, "flip": 0.0, "n": 32, "seed": 0,
        "out_prefix": None,
    },
}
REQUIRED = {
    "validate": ["graph"],
    "bootstrap-filter": ["scores", "out"],
    "select": ["graph", "scores", "out", "k"],
    "sweep": ["graph", "scores", "out_dir"],
    "metrics": ["metric", "curve"],
    "stats": ["scores"],
    "synth": ["out_prefix"],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    return [None if t.strip().lower() in ("none", "null") else float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list:
    return [None if t.strip().lower() in ("none", "null") else int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="circuitsel", description="Select circuits from edge attribution scores.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=S)
        p.add_argument("--config", help="YAML file with default values for this command's flags")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        return p

    p = add("validate", "check a graph (and optionally a score file) for structural problems")
    p.add_argument("--graph", help="graph JSON")
    p.add_argument("--scores", help="score matrix or bootstrap summary JSON to check against the graph")

    p = add("bootstrap-filter", "bootstrap score runs and keep edges whose interval excludes the threshold")
    p.add_argument("--scores", help="score matrix JSON (per_example or per_bootstrap_run)")
    p.add_argument("--tau", type=int, help="bootstrap runs drawn from a per_example matrix (default 10)")
    p.add_argument("--z", type=float, help="normal quantile of the interval (default 1.96)")
    p.add_argument("--threshold", type=float, help="significance threshold, >= 0 (default 0)")
    p.add_argument("--seed", type=int, help="resampling seed (default 0)")
    p.add_argument("--out", help="summary JSON to write")

    p = add("select", "build one circuit")
    p.add_argument("--graph", help="graph JSON")
    p.add_argument("--scores", help="score matrix or bootstrap summary JSON")
    p.add_argument("--out", help="circuit JSON to write")
    p.add_argument("--method", choices=METHODS, help="selection strategy (default topk)")
    p.add_argument("--k", type=int, help="edge budget")
    p.add_argument("--rank", choices=RANK_MODES, help="rank by signed or absolute score (default signed)")
    p.add_argument("--pnr", type=float, help="minimum fraction of the budget given to positive edges")
    p.add_argument("--no-prune", dest="prune", action="store_false", help="skip connectivity pruning (topk/pnr)")
    p.add_argument("--max-nodes", type=int, help="ILP branch-and-bound node limit (default 1e7)")
    p.add_argument("--max-seconds", type=float, help="ILP wall-clock limit (default 300)")

    p = add("sweep", "run a grid of selections and write a CSV summary")
    p.add_argument("--graph", help="graph JSON")
    p.add_argument("--scores", help="score matrix or bootstrap summary JSON")
    p.add_argument("--out-dir", help="directory for sweep.csv and circuits/")
    p.add_argument("--methods", type=lambda s: s.split(","), help="comma list of methods (default greedy,ilp)")
    p.add_argument("--ranks", type=lambda s: s.split(","), help="comma list of rank modes (default signed)")
    p.add_argument("--k", type=_ints, help="comma list of budgets")
    p.add_argument("--fractions", type=_floats, help="comma list of budget fractions of the on-path edges")
    p.add_argument("--pnr-grid", type=_floats, help="comma list of PNR values; 'none' adds a no-PNR ILP cell")
    p.add_argument("--tau-grid", type=_ints, help="comma list of bootstrap run counts")
    p.add_argument("--z", type=float, help="normal quantile for bootstrap cells (default 1.96)")
    p.add_argument("--threshold", type=float, help="significance threshold for bootstrap cells (default 0)")
    p.add_argument("--seed", type=int, help="resampling seed (default 0)")
    p.add_argument("--no-prune", dest="prune", action="store_false", help="skip pruning for topk/pnr cells")
    p.add_argument("--max-nodes", type=int, help="ILP node limit per cell")
    p.add_argument("--max-seconds", type=float, help="ILP wall-clock limit per cell")
    p.add_argument("--jobs", type=int, help="cells run concurrently (default 1)")

    p = add("metrics", "area metrics of a faithfulness curve")
    p.add_argument("metric", choices=("cpr", "cmd"))
    p.add_argument("--curve", help='curve JSON: {"points": [[fraction, faithfulness], ...]}')

    p = add("stats", "sign-instability statistics of a score matrix")
    p.add_argument("--scores", help="score matrix JSON")
    p.add_argument("--mu-floor", type=float, help="ignore edges with |mean| <= this (default 1e-6)")
    p.add_argument("--out", help="also write the report to this JSON file")

    p = add("synth", "generate a synthetic graph, score matrix and planted circuit")
    p.add_argument("--layers", type=int, help="strata including source and target (default 4)")
    p.add_argument("--width", type=int, help="nodes per interior stratum (default 3)")
    p.add_argument("--qualifiers", type=int, help="parallel edges per node pair (default 1)")
    p.add_argument("--planted", type=float, help="fraction of edges in the planted circuit (default 0.3)")
    p.add_argument("--noise", type=float, help="Gaussian noise sigma (default 0)")
    p.add_argument("--flip", type=float, help="per-example sign flip probability of decoy edges (default 0)")
    p.add_argument("--n", type=int, help="examples (columns) in the score matrix (default 32)")
    p.add_argument("--seed", type=int, help="generator seed (default 0)")
    p.add_argument("--out-prefix", help="writes PREFIX.graph.json, PREFIX.scores.json, PREFIX.planted.json")
    return parser


def resolve(command: str, ns: argparse.Namespace) -> dict:
    cli = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose", "config")}
    file_cfg = {}
    if getattr(ns, "config", None):
        try:
            with open(ns.config, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must be a key-value mapping")
        file_cfg = {str(k).replace("-", "_"): v for k, v in loaded.items()}
    unknown = set(file_cfg) - set(DEFAULTS[command])
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    cfg = {**DEFAULTS[command], **file_cfg, **cli}
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required setting(s) {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def _load_scores_doc(path):
    try:
        return _io.read_json(path)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def _check_ref(graph, doc, path):
    ref = doc.get("graph_ref") if isinstance(doc, dict) else None
    if ref and ref != graph.fingerprint:
        log.warning("%s: graph_ref %s does not match graph fingerprint %s", path, ref, graph.fingerprint)


def _load_graph_checked(path):
    graph = load_graph(path)
    problems = validate_graph(graph)
    if problems:
        raise UsageError(f"{path}: invalid graph: " + "; ".join(problems))
    return graph


def cmd_validate(cfg):
    graph = load_graph(cfg["graph"])
    report = validate_graph(graph)
    if cfg["scores"]:
        doc = _load_scores_doc(cfg["scores"])
        scores = load_edge_scores(doc)
        missing = [k for k in graph.edge_keys if k not in scores.scores]
        extra = [k for k in scores.scores if not graph.has_edge(k)]
        report += [f"no score for edge {k!r}" for k in missing]
        report += [f"score for unknown edge {k!r}" for k in extra]
    out = {"valid": not report, "violations": report, "edges": len(graph.edges), "nodes": len(graph.nodes)}
    if not report:
        out["edges_on_paths"] = edge_count_on_paths(graph)
    sys.stdout.write(_io.dumps(out))
    return EXIT_OK if not report else EXIT_INVALID


def cmd_bootstrap_filter(cfg):
    matrix = ScoreMatrix.from_dict(_load_scores_doc(cfg["scores"]))
    if matrix.column_kind == PER_EXAMPLE:
        runs = bootstrap_resample(matrix, cfg["tau"], cfg["seed"])
    else:
        if cfg["tau"] != matrix.columns:
            log.info("input already holds %d bootstrap runs; tau=%s ignored", matrix.columns, cfg["tau"])
        runs = matrix
    summary = confidence_filter(runs, cfg["z"], cfg["threshold"])
    doc = summary.to_dict()
    doc["input_column_kind"] = matrix.column_kind
    doc["config"] = cfg
    _io.write_json(cfg["out"], doc)
    kept = sum(s.retained for s in summary.edges.values())
    log.info("retained %d of %d edges", kept, len(summary.edges))
    return EXIT_OK


def _limits(cfg):
    return SolveLimits(max_nodes=int(cfg["max_nodes"]), max_seconds=float(cfg["max_seconds"]))


def cmd_select(cfg):
    graph = _load_graph_checked(cfg["graph"])
    doc = _load_scores_doc(cfg["scores"])
    _check_ref(graph, doc, cfg["scores"])
    scores = load_edge_scores(doc)
    sel_cfg = SelectionConfig(int(cfg["k"]), cfg["rank"], cfg["pnr"], bool(cfg["prune"]))
    if cfg["method"] == "pnr" and sel_cfg.pnr is None:
        raise UsageError("--method pnr needs --pnr")
    result = run_selection(graph, scores, cfg["method"], sel_cfg, _limits(cfg))
    _io.write_json(cfg["out"], circuit_document(graph, scores, result, sel_cfg, cfg))
    if result.status == INFEASIBLE:
        log.error("model is infeasible")
        return EXIT_INFEASIBLE
    if result.status == BUDGET_EXHAUSTED:
        log.warning("solver limit reached; best incumbent written")
        return EXIT_LIMIT
    return EXIT_OK


def cmd_sweep(cfg):
    graph = _load_graph_checked(cfg["graph"])
    doc = _load_scores_doc(cfg["scores"])
    _check_ref(graph, doc, cfg["scores"])
    if isinstance(doc, dict) and "scores" in doc:
        source = ScoreMatrix.from_dict(doc)
    else:
        source = BootstrapSummary.from_dict(doc).edge_scores()
    if cfg["k"] is not None:
        ks = [int(k) for k in cfg["k"]]
    else:
        ks = sweep_sizes(edge_count_on_paths(graph), cfg["fractions"])
    for m in cfg["methods"]:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    for r in cfg["ranks"]:
        if r not in RANK_MODES:
            raise UsageError(f"unknown rank mode {r!r}")
    cells = expand_grid(cfg["methods"], cfg["ranks"], ks, cfg["pnr_grid"] or [], cfg["tau_grid"] or [])
    report = run_sweep(graph, source, cells, cfg["out_dir"], prune=bool(cfg["prune"]), z=cfg["z"],
                       threshold=cfg["threshold"], seed=cfg["seed"], limits=_limits(cfg), jobs=int(cfg["jobs"]),
                       base_config={k: v for k, v in cfg.items() if k not in ("methods", "ranks", "pnr_grid", "tau_grid")})
    _io.write_json(Path(cfg["out_dir"]) / "sweep_config.json", cfg)
    log.info("%d cells, %d failed", len(report.rows), report.failed)
    return EXIT_OK


def cmd_metrics(cfg):
    curve = FaithfulnessCurve.from_dict(_load_scores_doc(cfg["curve"]))
    value = cpr(curve) if cfg["metric"] == "cpr" else cmd(curve)
    sys.stdout.write(_io.dumps({"metric": cfg["metric"], "value": value, "config": cfg}))
    return EXIT_OK


def cmd_stats(cfg):
    matrix = ScoreMatrix.from_dict(_load_scores_doc(cfg["scores"]))
    doc = sign_instability(matrix, cfg["mu_floor"]).to_dict()
    doc["column_kind"] = matrix.column_kind
    doc["config"] = cfg
    text = _io.dumps(doc)
    if cfg["out"]:
        _io.atomic_write_text(cfg["out"], text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(cfg):
    spec = SynthSpec(
        layers=cfg["layers"], nodes_per_layer=cfg["width"], qualifiers_per_pair=cfg["qualifiers"],
        planted_fraction=cfg["planted"], noise_sigma=cfg["noise"], flip_probability=cfg["flip"],
        examples_n=cfg["n"], seed=cfg["seed"],
    )
    graph, matrix, planted = generate(spec)
    prefix = cfg["out_prefix"]
    _io.write_json(f"{prefix}.graph.json", graph.to_dict())
    _io.write_json(f"{prefix}.scores.json", matrix.to_dict())
    _io.write_json(f"{prefix}.planted.json", {
        "graph_ref": graph.fingerprint,
        "planted": [k for k in graph.edge_keys if k in planted],
        "config": cfg,
    })
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "bootstrap-filter": cmd_bootstrap_filter,
    "select": cmd_select,
    "sweep": cmd_sweep,
    "metrics": cmd_metrics,
    "stats": cmd_stats,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = resolve(ns.command, ns)
        return COMMANDS[ns.command](cfg)
    except (UsageError, GraphFormatError, ScoreFormatError, ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
