"""Acceptance criteria, one test each; results are listed in the terminal summary."""

import io
import math
import random
import statistics
import time
from contextlib import redirect_stdout
from decimal import Decimal, localcontext
from fractions import Fraction
from pathlib import Path

import numpy as np

from circuitsel.cli import main
from circuitsel.graph import degree_violations, prune_to_connected
from circuitsel.ilp import INFEASIBLE, OPTIMAL, audit, brute_force_oracle, build_model, solve_exact
from circuitsel.metrics import FaithfulnessCurve, cmd, cpr
from circuitsel.scoring import EdgeScores, PER_BOOTSTRAP_RUN, ScoreMatrix, bootstrap_resample, collapse_to_scores
from circuitsel.scoring import confidence_filter
from circuitsel.selection import SelectionConfig, pnr_quota, select_greedy, select_pnr, select_topk
from circuitsel.synth import SynthSpec, generate

from _instances import random_config, random_dag, random_scores


def ulps(a, b):
    if a == b:
        return 0.0
    return abs(a - b) / math.ulp(max(abs(a), abs(b)))


def oracle_interval(xs, z):
    """Independent statistics: rational deviations, 80-digit roots."""
    fr = [Fraction(x) for x in xs]
    n = len(fr)
    mean = sum(fr, Fraction(0)) / n
    var = sum(((f - mean) ** 2 for f in fr), Fraction(0)) / (n - 1)
    with localcontext() as ctx:
        ctx.prec = 80
        dm = Decimal(mean.numerator) / Decimal(mean.denominator)
        sd = (Decimal(var.numerator) / Decimal(var.denominator)).sqrt()
        half = Decimal(z) * sd / Decimal(n).sqrt()
        return float(mean), float(sd), float(dm - half), float(dm + half)


def test_criterion_1_ilp_matches_oracle(criterion):
    rng = random.Random(2024)
    start = time.perf_counter()
    mismatches, audit_failures, statuses = 0, 0, {OPTIMAL: 0, INFEASIBLE: 0}
    n = 600
    for _ in range(n):
        g = random_dag(rng, max_edges=12)
        scores = random_scores(rng, g, exclude_p=0.05)
        cfg = random_config(rng, g)
        model = build_model(g, scores, cfg)
        sol = solve_exact(model)
        ref = brute_force_oracle(g, scores, cfg)
        statuses[ref.status] += 1
        if sol.status != ref.status or sol.objective_value != ref.objective_value:
            mismatches += 1
        if sol.status == OPTIMAL and (audit(model, sol.selected_edges) or audit(model, ref.selected_edges)):
            audit_failures += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and audit_failures == 0 and elapsed < 60
    criterion("criterion 1: ILP-oracle equivalence", ok,
              f"{n} instances ({statuses[OPTIMAL]} optimal, {statuses[INFEASIBLE]} infeasible), "
              f"{mismatches} mismatches, {audit_failures} audit failures, {elapsed:.1f}s")
    assert ok


def test_criterion_2_greedy_dominance(criterion):
    rng = random.Random(7)
    violations, both_empty, compared = [], 0, 0
    for seed in range(240):
        spec = SynthSpec(layers=rng.randint(3, 5), nodes_per_layer=rng.randint(2, 3),
                         qualifiers_per_pair=rng.randint(1, 2), planted_fraction=rng.choice([0.2, 0.3, 0.5]),
                         noise_sigma=rng.choice([0.0, 0.5, 1.0]), flip_probability=rng.choice([0.0, 0.2, 0.5]),
                         examples_n=8, seed=seed)
        g, m, _ = generate(spec)
        scores = collapse_to_scores(m)
        cfg = SelectionConfig(rng.randint(1, len(g.edges)), rng.choice(["signed", "absolute"]))
        greedy = select_greedy(g, scores, cfg)
        sol = solve_exact(build_model(g, scores, cfg))
        compared += 1
        if sol.status == INFEASIBLE and not greedy.selected_edges:
            # no circuit fits the budget for either method
            both_empty += 1
        elif sol.status != OPTIMAL or sol.objective_value < greedy.objective_value:
            violations.append((seed, sol.status, sol.objective_value, greedy.objective_value))
    ok = compared >= 200 and not violations
    criterion("criterion 2: greedy dominance", ok,
              f"{compared} synthetic instances, {len(violations)} violations, "
              f"{both_empty} with no circuit inside the budget for either method")
    assert ok, violations[:5]


def test_criterion_3_interval_numerics(criterion):
    rng = np.random.default_rng(3)
    worst = {"mu": 0.0, "sigma": 0.0, "ci_lo": 0.0, "ci_hi": 0.0}
    for _ in range(1000):
        tau = int(rng.integers(2, 51))
        scale = 10 ** rng.uniform(-8, 3)
        xs = (rng.normal(rng.uniform(-2, 2), 1, size=tau) * scale).tolist()
        z = float(rng.choice([1.645, 1.96, 2.576]))
        s = confidence_filter(ScoreMatrix("g", PER_BOOTSTRAP_RUN, ("a|b|",), np.array([xs])), z=z).edges["a|b|"]
        ref = oracle_interval(xs, z)
        for name, got, want in zip(worst, (s.mu, s.sigma, s.ci_lo, s.ci_hi), ref):
            worst[name] = max(worst[name], ulps(got, want))

    runs = [2.0, 4.0, 6.0, 8.0, 10.0]
    s = confidence_filter(ScoreMatrix("g", PER_BOOTSTRAP_RUN, ("a|b|",), np.array([runs])), z=1.96).edges["a|b|"]
    # textbook recomputation with the standard library
    half = 1.96 * statistics.stdev(runs) / math.sqrt(len(runs))
    book = (statistics.mean(runs) - half, statistics.mean(runs) + half)
    example_ok = s.mu == 6.0 and round(s.ci_lo, 5) == round(book[0], 5) and round(s.ci_hi, 5) == round(book[1], 5)

    ok = max(worst.values()) <= 1 and example_ok
    criterion("criterion 3: interval numerics", ok,
              "max ulp error " + ", ".join(f"{k}={v:g}" for k, v in worst.items())
              + f"; worked example CI [{s.ci_lo:.5f}, {s.ci_hi:.5f}] vs recomputed [{book[0]:.5f}, {book[1]:.5f}]")
    assert ok


def test_criterion_4_pnr_contract(criterion):
    rng = random.Random(11)
    failures, cases, full_ratio_cases = [], 0, 0
    for _ in range(2000):
        n = rng.randint(1, 15)
        scores = EdgeScores({f"e{i:02d}|t|": rng.choice([-1, 1]) * rng.randint(0, 8) / 2 for i in range(n)})
        k = rng.randint(0, n)
        pnr = rng.choice([0.0, 0.1, 0.25, 0.3, 0.34, 0.45, 0.5, 0.55, 0.7, 0.9, 1.0])
        cfg = SelectionConfig(k, pnr=pnr, prune_after=False)
        chosen = select_pnr(scores, cfg).selected_edges
        n_pos = sum(v > 0 for v in scores.scores.values())
        cases += 1
        if sum(scores[e] > 0 for e in chosen) < min(pnr_quota(pnr, k), n_pos) or len(chosen) != k:
            failures.append(("quota/size", n, k, pnr))
        zero = select_pnr(scores, SelectionConfig(k, pnr=0.0, prune_after=False)).selected_edges
        if zero != select_topk(scores, SelectionConfig(k, "absolute", prune_after=False)).selected_edges:
            failures.append(("pnr=0", n, k))
        one = select_pnr(scores, SelectionConfig(k, pnr=1.0, prune_after=False)).selected_edges
        positive_only = EdgeScores({e: v for e, v in scores.scores.items() if v > 0})
        top_positive = select_topk(positive_only, SelectionConfig(min(k, n_pos), prune_after=False)).selected_edges
        if n_pos >= k:
            full_ratio_cases += 1
            if one != top_positive:
                failures.append(("pnr=1", n, k))
        elif not top_positive <= one:
            # too few positives: all of them are kept and the shortfall is filled by absolute score
            failures.append(("pnr=1 shortfall", n, k))
    ok = not failures
    criterion("criterion 4: PNR contract", ok,
              f"{cases} cases ({full_ratio_cases} with enough positives for the PNR=1 equality), "
              f"{len(failures)} failures")
    assert ok, failures[:5]


def test_criterion_5_connectivity(criterion):
    rng = random.Random(5)
    bad_circuits, circuits = 0, 0
    for _ in range(300):
        g = random_dag(rng)
        scores = random_scores(rng, g, exclude_p=0.1)
        cfg = SelectionConfig(rng.randint(1, len(g.edges)), rng.choice(["signed", "absolute"]),
                              rng.choice([None, 0.3, 0.7]))
        found = [select_topk(scores, cfg, g).selected_edges, select_greedy(g, scores, cfg).selected_edges]
        if cfg.pnr is not None:
            found.append(select_pnr(scores, cfg, g).selected_edges)
        sol = solve_exact(build_model(g, scores, cfg))
        if sol.status == OPTIMAL:
            found.append(sol.selected_edges)
        for edges in found:
            circuits += 1
            bad_circuits += bool(degree_violations(g, edges))

    not_idempotent = 0
    for _ in range(1000):
        g = random_dag(rng)
        subset = {k for k in g.edge_keys if rng.random() < rng.random()}
        once = prune_to_connected(g, subset)
        not_idempotent += prune_to_connected(g, once) != once or bool(degree_violations(g, once))
    ok = bad_circuits == 0 and not_idempotent == 0
    criterion("criterion 5: connectivity invariants", ok,
              f"{circuits} circuits with {bad_circuits} degree violations; "
              f"1000 pruned subsets, {not_idempotent} not idempotent")
    assert ok


def test_criterion_6_metric_identities(criterion):
    rng = random.Random(6)
    worst_sum, exact_hits, n_curves = 0.0, 0, 2000
    for _ in range(n_curves):
        xs = sorted(rng.sample(range(0, 1001), rng.randint(2, 10)))
        ys = [min(1.0, rng.uniform(-1.0, 1.5)) for _ in xs]
        c = FaithfulnessCurve(tuple((x / 1000, y) for x, y in zip(xs, ys)))
        total = cpr(c) + cmd(c)
        worst_sum = max(worst_sum, abs(total - 1.0))
        exact_hits += total == 1.0
    # the identity is exact in real arithmetic; each metric is rounded once on its own
    identity_ok = worst_sum <= 1e-12

    hand = [
        (cpr(FaithfulnessCurve(((0.0, 2.0), (1.0, 2.0)))), 2.0),
        (cmd(FaithfulnessCurve(((0.0, 1.0), (1.0, 1.0)))), 0.0),
        (cmd(FaithfulnessCurve(((0.0, 0.5), (1.0, 0.5)))), 0.5),
        (cpr(FaithfulnessCurve(((0.0, 0.0), (1.0, 1.0)))), 0.5),
        (cpr(FaithfulnessCurve(((0.0, 0.0), (0.5, 1.0), (1.0, 1.0)))), 0.75),
        (cmd(FaithfulnessCurve(((0.0, 0.0), (1.0, 2.0)))), 0.5),
    ]
    hand_ok = all(abs(got - want) <= 1e-12 for got, want in hand)

    worst_insert = 0.0
    for _ in range(1000):
        xs = sorted(rng.sample(range(0, 1001), rng.randint(2, 8)))
        pts = [(x / 1000, rng.uniform(-1.0, 2.0)) for x in xs]
        i = rng.randrange(len(pts) - 1)
        (x0, y0), (x1, y1) = pts[i], pts[i + 1]
        t = rng.uniform(0.05, 0.95)
        x = x0 + t * (x1 - x0)
        y = y0 + (x - x0) / (x1 - x0) * (y1 - y0)
        a, b = FaithfulnessCurve(tuple(pts)), FaithfulnessCurve(tuple(pts[: i + 1] + [(x, y)] + pts[i + 1:]))
        worst_insert = max(worst_insert, abs(cpr(a) - cpr(b)), abs(cmd(a) - cmd(b)))
    insert_ok = worst_insert <= 1e-12

    ok = identity_ok and hand_ok and insert_ok
    criterion("criterion 6: metric identities", ok,
              f"cpr+cmd=1 on {n_curves} curves: max deviation {worst_sum:.1e}, bit-exact on {exact_hits}; "
              f"hand values {'ok' if hand_ok else 'off'}; collinear insertion max change {worst_insert:.1e}")
    assert ok


def test_criterion_7_planted_recovery(criterion):
    recovered = 0
    for seed in range(100):
        g, m, planted = generate(SynthSpec(layers=5, nodes_per_layer=3, qualifiers_per_pair=2,
                                           planted_fraction=0.2, seed=seed))
        sol = solve_exact(build_model(g, collapse_to_scores(m), SelectionConfig(len(planted))))
        recovered += sol.selected_edges == planted

    planted_kept = planted_total = decoys_rejected = decoys_total = 0
    for seed in range(100):
        g, m, planted = generate(SynthSpec(layers=5, nodes_per_layer=3, qualifiers_per_pair=2, planted_fraction=0.2,
                                           flip_probability=0.5, seed=seed))
        summary = confidence_filter(bootstrap_resample(m, 10, seed), z=1.96, threshold=0.0)
        for key, s in summary.edges.items():
            if key in planted:
                planted_total += 1
                planted_kept += s.retained
            else:
                decoys_total += 1
                decoys_rejected += not s.retained
    rejection = decoys_rejected / decoys_total
    ok = recovered == 100 and planted_kept == planted_total and rejection >= 0.9
    criterion("criterion 7: planted recovery", ok,
              f"ILP exact recovery {recovered}/100; planted retained {planted_kept}/{planted_total}; "
              f"flip-0.5 decoys rejected {rejection:.1%} (needs >= 90%)")
    assert ok


def _run_cli(args):
    out = io.StringIO()
    with redirect_stdout(out):
        code = main(args)
    return code, out.getvalue()


def _snapshot(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_determinism(criterion, tmp_path):
    w = tmp_path
    p = str(w / "toy")
    (w / "curve.json").write_text('{"points": [[0.0, 0.2], [0.5, 1.3], [1.0, 0.9]]}', encoding="utf-8")
    commands = [
        ["synth", "--layers", "4", "--width", "3", "--qualifiers", "2", "--noise", "0.5", "--flip", "0.3",
         "--n", "16", "--seed", "9", "--out-prefix", p],
        ["validate", "--graph", f"{p}.graph.json", "--scores", f"{p}.scores.json"],
        ["stats", "--scores", f"{p}.scores.json", "--out", str(w / "stats.json")],
        ["bootstrap-filter", "--scores", f"{p}.scores.json", "--tau", "10", "--seed", "5",
         "--out", str(w / "summary.json")],
        ["select", "--method", "ilp", "--k", "8", "--graph", f"{p}.graph.json", "--scores", str(w / "summary.json"),
         "--out", str(w / "ilp.json")],
        ["select", "--method", "greedy", "--k", "8", "--rank", "absolute", "--graph", f"{p}.graph.json",
         "--scores", f"{p}.scores.json", "--out", str(w / "greedy.json")],
        ["select", "--method", "pnr", "--pnr", "0.5", "--k", "8", "--graph", f"{p}.graph.json",
         "--scores", f"{p}.scores.json", "--out", str(w / "pnr.json")],
        ["sweep", "--graph", f"{p}.graph.json", "--scores", f"{p}.scores.json", "--methods", "greedy,ilp,pnr",
         "--pnr-grid", "0.3,0.5", "--tau-grid", "5,10", "--jobs", "2", "--out-dir", str(w / "sweep")],
        ["metrics", "cpr", "--curve", str(w / "curve.json")],
        ["metrics", "cmd", "--curve", str(w / "curve.json")],
    ]
    runs = []
    for _ in range(2):
        outputs = [_run_cli(c) for c in commands]
        runs.append((outputs, _snapshot(w)))
    codes = [code for code, _ in runs[0][0]]
    same_stdout = runs[0][0] == runs[1][0]
    same_files = runs[0][1] == runs[1][1]
    n_files = len(runs[0][1])
    ok = same_stdout and same_files and all(c == 0 for c in codes)
    criterion("criterion 8: determinism", ok,
              f"{len(commands)} commands run twice, exit codes {sorted(set(codes))}, "
              f"{n_files} output files {'identical' if same_files else 'DIFFER'}, "
              f"stdout {'identical' if same_stdout else 'DIFFERS'}")
    assert ok
