"""Area metrics over faithfulness-vs-size curves.

Both metrics integrate the piecewise-linear interpolant of the curve points and
normalize by the width of the size span, so a constant curve ``f`` has
``cpr == f``. ``cmd`` integrates ``|f - 1|``, splitting segments that cross 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class FaithfulnessCurve:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if len(pts) < 2:
            raise ValueError("a faithfulness curve needs at least two points")
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError("curve points must be finite")
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"size fraction {x} outside [0, 1]")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("size fractions must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def span(self) -> float:
        return self.points[-1][0] - self.points[0][0]

    @classmethod
    def from_dict(cls, data) -> "FaithfulnessCurve":
        try:
            return cls(tuple((p[0], p[1]) for p in data["points"]))
        except (KeyError, TypeError, IndexError) as exc:
            raise ValueError(f"malformed curve document: {exc}") from exc

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points]}


def _segments(curve: FaithfulnessCurve):
    if curve.span <= 0:
        raise ValueError("curve span has zero width")
    return zip(curve.points, curve.points[1:])


def cpr(curve: FaithfulnessCurve) -> float:
    """Normalized area under the curve."""
    parts = [(x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in _segments(curve)]
    return math.fsum(parts) / curve.span


def _abs_area(w: float, d0: float, d1: float) -> float:
    """Integral of |d| over a segment of width w where d is linear from d0 to d1."""
    if d0 * d1 >= 0:
        return w * (abs(d0) + abs(d1)) / 2
    # zero crossing at fraction d0/(d0-d1) of the segment: two triangles
    return w * (d0 * d0 + d1 * d1) / (2 * (abs(d0) + abs(d1)))


def cmd(curve: FaithfulnessCurve) -> float:
    """Normalized area between the curve and the constant 1."""
    parts = [_abs_area(x1 - x0, y0 - 1.0, y1 - 1.0) for (x0, y0), (x1, y1) in _segments(curve)]
    return math.fsum(parts) / curve.span


DEFAULT_FRACTIONS = tuple(np.logspace(-3, 0, 10).tolist())


def sweep_sizes(total_edges: int, fractions: Iterable[float] | None = None) -> list[int]:
    """Budgets ``round(f * total_edges)`` clipped to ``[1, total_edges]``, sorted and deduplicated."""
    if total_edges < 1:
        raise ValueError("total_edges must be >= 1")
    fractions = DEFAULT_FRACTIONS if fractions is None else fractions
    ks = set()
    for f in fractions:
        if not 0 <= f <= 1:
            raise ValueError(f"fraction {f} outside [0, 1]")
        k = math.floor(f * total_edges + 0.5)
        ks.add(min(max(k, 1), total_edges))
    return sorted(ks)


def curve_from_pairs(sizes: Sequence[float], values: Sequence[float]) -> FaithfulnessCurve:
    return FaithfulnessCurve(tuple(zip(sizes, values)))
