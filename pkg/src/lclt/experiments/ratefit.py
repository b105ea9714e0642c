"""Least-squares slopes of log-log rate curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points_used: int
    noise_floor_excluded: int
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.reason is None


def fit_rate(points, floor: float = 0.0) -> RateFit:
    """Ordinary least squares on (log x, log value).

    Points with value <= floor (or nonpositive x) are excluded; a slope is
    only reported when at least three points survive.
    """
    pts = [(float(x), float(v)) for x, v in points]
    kept = [(x, v) for x, v in pts if v > floor and x > 0.0]
    excluded = len(pts) - len(kept)
    if len(kept) < 3:
        return RateFit(
            slope=math.nan, intercept=math.nan, r_squared=math.nan,
            points_used=len(kept), noise_floor_excluded=excluded,
            reason=f"need >= 3 points above the floor, have {len(kept)}",
        )
    lx = np.log([x for x, _ in kept])
    ly = np.log([v for _, v in kept])
    if lx.max() - lx.min() <= 1e-12:
        return RateFit(
            slope=math.nan, intercept=math.nan, r_squared=math.nan,
            points_used=len(kept), noise_floor_excluded=excluded,
            reason="degenerate abscissa: all x equal",
        )
    slope, intercept = np.polyfit(lx, ly, 1)
    fit = slope * lx + intercept
    ss_res = float(((ly - fit) ** 2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r_squared = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return RateFit(
        slope=float(slope), intercept=float(intercept), r_squared=r_squared,
        points_used=len(kept), noise_floor_excluded=excluded,
    )
