"""Edge score ingestion, bootstrap resampling and confidence-interval filtering."""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Mapping

import numpy as np

PER_EXAMPLE = "per_example"
PER_BOOTSTRAP_RUN = "per_bootstrap_run"
COLUMN_KINDS = (PER_EXAMPLE, PER_BOOTSTRAP_RUN)

SINGLE_RUN = "single_run"
BOOTSTRAP_MEAN = "bootstrap_mean"

DEFAULT_Z = 1.96
DEFAULT_MU_FLOOR = 1e-6


class ScoreFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-edge raw attribution scores, one row per edge and one column per sample."""

    graph_ref: str
    column_kind: str
    edge_keys: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != len(self.edge_keys):
            raise ScoreFormatError(
                f"values must be (edges={len(self.edge_keys)}, columns) shaped, got {values.shape}"
            )
        if values.shape[1] < 1:
            raise ScoreFormatError("score matrix needs at least one column")
        if not np.all(np.isfinite(values)):
            raise ScoreFormatError("score matrix contains non-finite values")
        if self.column_kind not in COLUMN_KINDS:
            raise ScoreFormatError(f"unknown column_kind {self.column_kind!r}")
        if len(set(self.edge_keys)) != len(self.edge_keys):
            raise ScoreFormatError("duplicate edge keys in score matrix")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "edge_keys", tuple(self.edge_keys))

    @property
    def columns(self) -> int:
        return self.values.shape[1]

    def row(self, key: str) -> np.ndarray:
        return self.values[self.edge_keys.index(key)]

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScoreMatrix":
        try:
            scores = data["scores"]
            columns = data["columns"]
            kind = data["column_kind"]
            graph_ref = data.get("graph_ref", "")
        except (KeyError, TypeError, AttributeError) as exc:
            raise ScoreFormatError(f"score document missing field: {exc}") from exc
        if not isinstance(scores, Mapping):
            raise ScoreFormatError("`scores` must map edge_key to an array")
        keys = tuple(scores)
        rows = []
        for k in keys:
            row = scores[k]
            if not isinstance(row, list) or len(row) != columns:
                raise ScoreFormatError(f"edge {k!r} must have exactly {columns} values")
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in row):
                raise ScoreFormatError(f"edge {k!r} has non-numeric values")
            rows.append(row)
        values = np.array(rows, dtype=np.float64).reshape(len(keys), columns)
        return cls(str(graph_ref), kind, keys, values)

    def to_dict(self) -> dict:
        return {
            "graph_ref": self.graph_ref,
            "column_kind": self.column_kind,
            "columns": self.columns,
            "scores": {k: [float(v) for v in row] for k, row in zip(self.edge_keys, self.values)},
        }


@dataclass(frozen=True)
class EdgeScores:
    """A single real score per edge; excluded edges carry 0 and are never selected."""

    scores: Mapping[str, float]
    provenance: str = SINGLE_RUN
    excluded: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for k, v in self.scores.items():
            if not math.isfinite(v):
                raise ScoreFormatError(f"non-finite score for edge {k!r}")
        object.__setattr__(self, "excluded", frozenset(self.excluded))

    def __getitem__(self, key: str) -> float:
        return self.scores[key]

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(self.scores)

    def candidates(self) -> list[str]:
        return [k for k in self.scores if k not in self.excluded]


@dataclass(frozen=True)
class EdgeSummary:
    mu: float
    sigma: float
    ci_lo: float
    ci_hi: float
    retained: bool


@dataclass(frozen=True)
class BootstrapSummary:
    graph_ref: str
    tau: int
    z: float
    threshold: float
    edges: Mapping[str, EdgeSummary]

    def edge_scores(self) -> EdgeScores:
        """Retained edges score their bootstrap mean; the rest are excluded with score 0."""
        scores = {k: (s.mu if s.retained else 0.0) for k, s in self.edges.items()}
        excluded = frozenset(k for k, s in self.edges.items() if not s.retained)
        return EdgeScores(scores, BOOTSTRAP_MEAN, excluded)

    @property
    def retained_fraction(self) -> float:
        if not self.edges:
            return 0.0
        return sum(s.retained for s in self.edges.values()) / len(self.edges)

    def to_dict(self) -> dict:
        return {
            "kind": "bootstrap_summary",
            "graph_ref": self.graph_ref,
            "tau": self.tau,
            "z": self.z,
            "threshold": self.threshold,
            "edges": {
                k: {"mu": s.mu, "sigma": s.sigma, "ci_lo": s.ci_lo, "ci_hi": s.ci_hi, "retained": s.retained}
                for k, s in self.edges.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BootstrapSummary":
        try:
            edges = {
                k: EdgeSummary(float(r["mu"]), float(r["sigma"]), float(r["ci_lo"]), float(r["ci_hi"]), bool(r["retained"]))
                for k, r in data["edges"].items()
            }
            return cls(str(data.get("graph_ref", "")), int(data["tau"]), float(data["z"]), float(data["threshold"]), edges)
        except (KeyError, TypeError, AttributeError) as exc:
            raise ScoreFormatError(f"summary document missing field: {exc}") from exc


@dataclass(frozen=True)
class InstabilityReport:
    mu_floor: float
    qualifying: int
    unstable: int
    flags: Mapping[str, bool]

    @property
    def fraction(self) -> float:
        return self.unstable / self.qualifying if self.qualifying else 0.0

    def to_dict(self) -> dict:
        return {
            "mu_floor": self.mu_floor,
            "qualifying_edges": self.qualifying,
            "unstable_edges": self.unstable,
            "fraction": self.fraction,
            "flags": dict(self.flags),
        }


def bootstrap_resample(m: ScoreMatrix, tau: int, seed: int) -> ScoreMatrix:
    """Draw ``tau`` with-replacement resamples of the example columns and average each.

    Indices come from numpy's PCG64 generator (``default_rng(seed)``): a
    ``(tau, N)`` block of independent uniform integers in ``[0, N)``.
    """
    if m.column_kind != PER_EXAMPLE:
        raise ValueError("bootstrap_resample expects a per_example matrix")
    if tau < 2:
        raise ValueError(f"tau must be >= 2, got {tau}")
    n = m.columns
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(tau, n))
    runs = np.empty((len(m.edge_keys), tau))
    for j in range(tau):
        runs[:, j] = m.values[:, idx[j]].mean(axis=1)
    return ScoreMatrix(m.graph_ref, PER_BOOTSTRAP_RUN, m.edge_keys, runs)


def _scaled(xs: list[float]) -> tuple[list[int], int]:
    """Integers ``X`` and a power of two ``D`` with ``xs[i] == X[i] / D`` exactly."""
    ratios = [x.as_integer_ratio() for x in xs]
    d = max(q for _, q in ratios)
    return [p * (d // q) for p, q in ratios], d


def _mean(xs: list[float]) -> float:
    """Correctly rounded mean (int / int true division rounds once)."""
    xi, d = _scaled(xs)
    return sum(xi) / (len(xs) * d)


def interval_stats(xs: list[float], z: float) -> tuple[float, float, float, float]:
    """``(mu, sigma, mu - z*sigma/sqrt(n), mu + z*sigma/sqrt(n))`` with n-1 sample sigma.

    Sums are exact integers, the square roots run at 60 digits, and each value
    is rounded to a float once, so endpoints stay accurate under cancellation.
    """
    n = len(xs)
    xi, d = _scaled(xs)
    s = sum(xi)
    num = n * sum(v * v for v in xi) - s * s  # n(n-1) d^2 times the sample variance
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        mean = Decimal(s) / Decimal(n * d)
        sd = (Decimal(num) / Decimal(n * (n - 1))).sqrt() / Decimal(d)
        half = Decimal(z) * sd / Decimal(n).sqrt()
        return s / (n * d), float(sd), float(mean - half), float(mean + half)


def is_retained(mu: float, ci_lo: float, ci_hi: float, threshold: float) -> bool:
    return (mu > 0 and ci_lo > threshold) or (mu < 0 and ci_hi < -threshold)


def confidence_filter(m: ScoreMatrix, z: float = DEFAULT_Z, threshold: float = 0.0) -> BootstrapSummary:
    """Keep edges whose run-mean interval ``mu ± z·sigma/sqrt(tau)`` clears ``threshold``.

    Positive-mean edges need ``ci_lo > threshold``; negative-mean edges need
    ``ci_hi < -threshold``. ``sigma`` is the n-1 sample standard deviation.
    """
    if m.column_kind != PER_BOOTSTRAP_RUN:
        raise ValueError("confidence_filter expects a per_bootstrap_run matrix")
    tau = m.columns
    if tau < 2:
        raise ValueError(f"need at least 2 bootstrap runs, got {tau}")
    if not z > 0:
        raise ValueError("z must be positive")
    if not threshold >= 0:
        raise ValueError("threshold must be non-negative")

    edges = {}
    for key, row in zip(m.edge_keys, m.values):
        xs = row.tolist()
        mu, sigma, lo, hi = interval_stats(xs, z)
        edges[key] = EdgeSummary(mu, sigma, lo, hi, is_retained(mu, lo, hi, threshold))
    return BootstrapSummary(m.graph_ref, tau, float(z), float(threshold), edges)


def sign_instability(m: ScoreMatrix, mu_floor: float = DEFAULT_MU_FLOOR) -> InstabilityReport:
    """Fraction of edges with ``|mean| > mu_floor`` that take both signs across columns."""
    if m.columns < 2:
        raise ValueError("sign instability needs at least 2 columns")
    means = m.values.mean(axis=1)
    flags = {}
    for key, row, mu in zip(m.edge_keys, m.values, means):
        if abs(mu) > mu_floor:
            flags[key] = bool((row > 0).any() and (row < 0).any())
    return InstabilityReport(mu_floor, len(flags), sum(flags.values()), flags)


def collapse_to_scores(m: ScoreMatrix) -> EdgeScores:
    provenance = SINGLE_RUN if m.columns == 1 else BOOTSTRAP_MEAN
    return EdgeScores({k: _mean(row.tolist()) for k, row in zip(m.edge_keys, m.values)}, provenance)


def load_edge_scores(data: Mapping) -> EdgeScores:
    """Build edge scores from either a score-matrix or a bootstrap-summary document."""
    if isinstance(data, Mapping) and "edges" in data and "scores" not in data:
        return BootstrapSummary.from_dict(data).edge_scores()
    return collapse_to_scores(ScoreMatrix.from_dict(data))
