"""
Schwarzschild exterior geometry.

Conventions
-----------
- Geometric units, metric -(1-mu) dt^2 + (1-mu)^{-1} dr^2 + r^2 dOmega^2 with
  mu = 2m/r.
- Tortoise coordinate r* = r + 2m log(r - 2m). This differs from the more
  common r + 2m log(r/2m - 1) by the constant 2m log(2m); only null labels
  shift, never a physical quantity.
- Null coordinates w = t - r*, v = t + r*, so g = -(1-mu) dw dv + r^2 dOmega^2.
- m = 0 is a flat verification mode: lapse is 1 and r* = r.

Every function accepts floats or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

NEWTON_MAX_ITER = 100


class DomainError(ValueError):
    """Raised when a radius lies on or inside the horizon."""


@dataclass(frozen=True)
class BackgroundParams:
    m: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.m) or self.m < 0:
            raise ValueError(f"mass must be finite and >= 0, got {self.m}")

    @property
    def horizon(self) -> float:
        return 2.0 * self.m

    @property
    def photon_sphere(self) -> float:
        return 3.0 * self.m

    @property
    def flat(self) -> bool:
        return self.m == 0.0


@dataclass(frozen=True)
class ChartPoint:
    """A point in one of the charts: ``schwarzschild`` (t, r), ``tortoise``
    (t, r*) or ``null`` (w, v)."""

    chart: str
    coord1: float
    coord2: float

    def __post_init__(self):
        if self.chart not in ("schwarzschild", "tortoise", "null"):
            raise ValueError(f"unknown chart {self.chart!r}")

    def to_chart(self, bg: BackgroundParams, chart: str) -> "ChartPoint":
        if self.chart == "schwarzschild":
            t, rs = self.coord1, float(tortoise(bg, self.coord2))
        elif self.chart == "tortoise":
            t, rs = self.coord1, self.coord2
        else:
            t, rs = from_null(self.coord1, self.coord2)
        if chart == "tortoise":
            return ChartPoint("tortoise", t, rs)
        if chart == "null":
            return ChartPoint("null", *to_null(t, rs))
        if chart == "schwarzschild":
            return ChartPoint("schwarzschild", t, float(radius_from_tortoise(bg, rs)))
        raise ValueError(f"unknown chart {chart!r}")


def _check_exterior(bg: BackgroundParams, r) -> None:
    if bg.m > 0 and np.any(np.asarray(r) <= 2.0 * bg.m):
        raise DomainError(f"radius must exceed the horizon 2m = {2.0 * bg.m}")


def lapse(bg: BackgroundParams, r):
    """1 - 2m/r."""
    _check_exterior(bg, r)
    if bg.m == 0:
        return np.ones_like(np.asarray(r, dtype=float))[()] if np.ndim(r) else 1.0
    return 1.0 - 2.0 * bg.m / np.asarray(r, dtype=float)[()]


def tortoise(bg: BackgroundParams, r):
    """Literal r + 2m log(r - 2m)."""
    _check_exterior(bg, r)
    r = np.asarray(r, dtype=float)[()]
    if bg.m == 0:
        return r
    return r + 2.0 * bg.m * np.log(r - 2.0 * bg.m)


def horizon_offset(bg: BackgroundParams, rstar):
    """r - 2m as a function of r*, solved without cancellation near the horizon.

    Works in y = log(r - 2m), where the residual e^y + 2m y + 2m - r* is convex
    and increasing. The bracket [y_lo, y_hi] is valid by construction; Newton
    steps leaving it fall back to bisection.
    """
    rs = np.asarray(rstar, dtype=float)
    scalar = rs.ndim == 0
    rs = np.atleast_1d(rs)
    if not np.all(np.isfinite(rs)):
        raise ValueError("tortoise coordinate must be finite")
    if bg.m == 0:
        raise DomainError("horizon offset is undefined for m = 0")
    m2 = 2.0 * bg.m

    # starting guesses: log-asymptotics near the horizon, r ~ r* far out
    y = np.where(rs < m2, (rs - m2) / m2, 0.0)
    far = rs > 10.0 * bg.m
    y = np.where(far, np.log(np.where(far, rs - m2, 1.0)), y)
    mid = ~far & (rs >= m2)
    y = np.where(mid, np.log(np.maximum(rs - m2, 0.5 * bg.m)), y)

    y_hi = np.minimum((rs - m2) / m2, np.log(np.abs(rs) + m2 + 1.0))
    y_lo = np.minimum(0.0, (rs - m2 - 1.0) / m2 - 1.0)
    y = np.clip(y, y_lo, y_hi)
    tol = 1e-12 * np.maximum(1.0, np.abs(rs))
    for _ in range(NEWTON_MAX_ITER):
        ey = np.exp(y)
        g = ey + m2 * y + m2 - rs
        done = np.abs(g) <= tol
        if np.all(done):
            break
        y_lo = np.where(g < 0, y, y_lo)
        y_hi = np.where(g > 0, y, y_hi)
        cand = y - g / (ey + m2)
        bad = (cand <= y_lo) | (cand >= y_hi)
        y = np.where(done, y, np.where(bad, 0.5 * (y_lo + y_hi), cand))
    else:
        raise RuntimeError("tortoise inversion did not converge")
    # one polishing step: the residual test is relative to |r*|, the step is
    # quadratically convergent, so this recovers full precision in r
    ey = np.exp(y)
    polished = y - (ey + m2 * y + m2 - rs) / (ey + m2)
    y = np.where(np.isfinite(polished), polished, y)
    x = np.exp(y)
    return x[0] if scalar else x


def radius_from_tortoise(bg: BackgroundParams, rstar):
    """Radius r > 2m with tortoise(r) = r* (identity when m = 0)."""
    if bg.m == 0:
        return np.asarray(rstar, dtype=float)[()] * 1.0
    return horizon_offset(bg, rstar) + 2.0 * bg.m


def lapse_from_tortoise(bg: BackgroundParams, rstar):
    """1 - 2m/r evaluated from r* without forming r - 2m by subtraction."""
    if bg.m == 0:
        return np.ones_like(np.asarray(rstar, dtype=float))[()]
    x = horizon_offset(bg, rstar)
    return x / (x + 2.0 * bg.m)


def to_null(t, rstar) -> Tuple:
    return t - rstar, t + rstar


def from_null(w, v) -> Tuple:
    return 0.5 * (v + w), 0.5 * (v - w)
