"""
Field traces along curves of the (w, v) grid, power-law fits and envelope checks.

Curves: r = const (a diagonal j - i = k of the grid, or a linear blend of two
neighbouring diagonals at fixed v), w = const rows, v = const columns and the
last outgoing row as a horizon proxy.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import node_fields
from .evolution import DiagonalTraces, ModeHistory
from .geometry import tortoise

CURVE_KINDS = ("r_const", "w_const", "v_const", "horizon_proxy")
QUANTITIES = ("|phi|", "|D_phi|", "|F_vw|", "|A|", "mode amplitude")
BOUNDS = ("one_over_v", "one_over_w", "near_horizon_w_over_vplus_sq", "near_horizon_offset")
MIN_SAMPLES = 16


class InsufficientSamples(ValueError):
    pass


class DecayError(ValueError):
    pass


@dataclass(frozen=True)
class CurveSpec:
    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"curve kind must be one of {CURVE_KINDS}, got {self.kind!r}")


@dataclass
class TimeSeries:
    """Nonnegative samples along a curve; ``abscissa`` is v or w, increasing."""

    abscissa: np.ndarray
    values: np.ndarray
    w: np.ndarray
    v: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.abscissa)

    def scaled(self, factor: float) -> "TimeSeries":
        return TimeSeries(self.abscissa, self.values * factor, self.w, self.v, self.label, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["abscissa", "value"])
        for x, y in zip(self.abscissa, self.values):
            out.writerow([repr(float(x)), repr(float(y))])
        return buf.getvalue()


# --------------------------------------------------------------------------
# extraction


def _derivative_magnitude(Dw, Dv):
    return np.sqrt(np.abs(Dw) ** 2 + np.abs(Dv) ** 2)


def _grid_quantity(history, quantity: str) -> np.ndarray:
    """Quantity on every node of a fully stored history."""
    if isinstance(history, ModeHistory):
        if quantity != "mode amplitude":
            raise DecayError("mode histories only provide the mode amplitude")
        if history.psi is None:
            raise DecayError("this mode history kept only diagonal traces")
        return np.abs(history.psi)
    if quantity == "mode amplitude":
        raise DecayError("mode amplitude needs a mode-sector history")
    nf = node_fields(history)
    if quantity == "|phi|":
        return np.abs(nf.phi)
    if quantity == "|D_phi|":
        return _derivative_magnitude(nf.Dw, nf.Dv)
    if quantity == "|F_vw|":
        return np.abs(nf.F_vw)
    if quantity == "|A|":
        return np.hypot(nf.A_w, nf.A_v)
    raise DecayError(f"unknown quantity {quantity!r}")


def _trace_quantity(tr, offset: int, quantity: str) -> np.ndarray:
    """Quantity along diagonal ``offset`` of a traced history, indexed by row."""
    if isinstance(tr, ModeHistory):
        if quantity != "mode amplitude":
            raise DecayError("mode histories only provide the mode amplitude")
        if offset not in tr.traces:
            raise DecayError(f"diagonal {offset} was not traced")
        return np.abs(tr.traces[offset])
    if quantity == "mode amplitude":
        raise DecayError("mode amplitude needs a mode-sector history")
    need = {offset}
    if quantity == "|D_phi|":
        need |= {offset - 1, offset + 1}
    missing = need - set(tr.psi)
    if missing:
        raise DecayError(f"diagonals {sorted(missing)} were not traced")
    r, om = tr.radius(offset), tr.lapse(offset)
    if quantity == "|phi|":
        return np.abs(tr.psi[offset]) / r
    if quantity == "|F_vw|":
        return np.abs(om * tr.Q[offset] / (2.0 * r * r))
    if quantity == "|A|":
        return np.abs(tr.A_v[offset])
    if quantity == "|D_phi|":
        d = tr.grid.delta
        phi = {k: tr.psi[k] / tr.radius(k) for k in need}
        n = len(phi[offset])
        dv = np.full(n, np.nan + 0j)
        dw = np.full(n, np.nan + 0j)
        dv[:] = (phi[offset + 1] - phi[offset - 1]) / (2.0 * d)
        dw[1:-1] = (phi[offset - 1][2:] - phi[offset + 1][:-2]) / (2.0 * d)
        Dv = dv - 1j * tr.A_v[offset] * phi[offset]
        return _derivative_magnitude(dw, Dv)
    raise DecayError(f"unknown quantity {quantity!r}")


def _diagonal_blend(history, rstar: float, quantity: str):
    """Values at fixed r* by blending diagonals k and k+1 at equal v."""
    grid = history.grid
    d = grid.delta
    x = (rstar - grid.rstar_base) / (0.5 * d)
    k = int(math.floor(x + 1e-9))
    frac = x - k
    if abs(frac) < 1e-9:
        frac, pair = 0.0, (k,)
    else:
        pair = (k, k + 1)
    rows = np.arange(grid.nw)
    if isinstance(history, (DiagonalTraces,)) or (isinstance(history, ModeHistory) and history.psi is None):
        lower = _trace_quantity(history, k, quantity)
        upper = _trace_quantity(history, k + 1, quantity) if len(pair) == 2 else None
    else:
        full = _grid_quantity(history, quantity)
        lower = np.full(grid.nw, np.nan)
        upper = np.full(grid.nw, np.nan) if len(pair) == 2 else None
        for arr, off in ((lower, k), (upper, k + 1)):
            if arr is None:
                continue
            cols = rows + off
            ok = (cols >= 0) & (cols < grid.nv)
            arr[ok] = full[rows[ok], cols[ok]]
    # node (i, i+k) on diagonal k shares v with node (i-1, i+k) on diagonal k+1
    vals = lower.astype(float)
    if upper is not None:
        shifted = np.full(grid.nw, np.nan)
        shifted[1:] = upper[:-1]
        vals = (1.0 - frac) * vals + frac * shifted
    v = grid.v0 + (rows + k) * d
    w = v - 2.0 * rstar
    ok = np.isfinite(vals) & (v <= grid.v1 + 1e-9) & (v >= grid.v0 - 1e-9) & (w >= grid.w0 - 1e-9)
    return v[ok], w[ok], vals[ok]


def extract_series(history, curve: CurveSpec, quantity: str) -> TimeSeries:
    if quantity not in QUANTITIES:
        raise DecayError(f"quantity must be one of {QUANTITIES}")
    grid = history.grid
    if curve.kind == "r_const":
        rstar = float(tortoise(history.bg, curve.value))
        v, w, vals = _diagonal_blend(history, rstar, quantity)
        x = v
    else:
        traced = isinstance(history, DiagonalTraces) or (isinstance(history, ModeHistory) and history.psi is None)
        if traced:
            raise DecayError(f"{curve.kind} curves need a fully stored history")
        full = _grid_quantity(history, quantity)
        d = grid.delta
        if curve.kind in ("w_const", "horizon_proxy"):
            wv = grid.w1 if curve.kind == "horizon_proxy" else curve.value
            i = int(round((wv - grid.w0) / d))
            if not 0 <= i < grid.nw or abs(grid.w0 + i * d - wv) > 1e-9:
                raise DecayError(f"w = {wv} is not a grid row")
            vals, v = full[i, :], grid.v
            w = np.full_like(v, grid.w[i])
            x = v
        else:
            j = int(round((curve.value - grid.v0) / d))
            if not 0 <= j < grid.nv or abs(grid.v0 + j * d - curve.value) > 1e-9:
                raise DecayError(f"v = {curve.value} is not a grid column")
            vals, w = full[:, j], grid.w
            v = np.full_like(w, grid.v[j])
            x = w
    if len(x) < MIN_SAMPLES:
        raise InsufficientSamples(f"curve {curve} meets the grid in {len(x)} < {MIN_SAMPLES} samples")
    return TimeSeries(np.asarray(x, float), np.abs(np.asarray(vals, float)), np.asarray(w, float),
                      np.asarray(v, float), f"{quantity}@{curve.kind}={curve.value}")


# --------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    constant: float
    window: tuple
    residual_rms: float
    samples: int
    envelope: bool = False

    def as_dict(self):
        return {"exponent": self.exponent, "constant": self.constant, "window": list(self.window),
                "residual_rms": self.residual_rms, "samples": self.samples, "envelope": self.envelope}


def default_window(series: TimeSeries, tail_skip: int = 5) -> tuple:
    """Last half of the log-abscissa span, excluding the final ``tail_skip`` samples."""
    x = series.abscissa
    pos = x[x > 0]
    if len(pos) < tail_skip + 3:
        raise InsufficientSamples("too few positive abscissae for the default fit window")
    hi = pos[-(tail_skip + 1)]
    lo = math.exp(0.5 * (math.log(pos[0]) + math.log(hi)))
    return (lo, hi)


def local_maxima(x, y):
    inner = (y[1:-1] >= y[:-2]) & (y[1:-1] > y[2:])
    idx = np.flatnonzero(inner) + 1
    return x[idx], y[idx]


def fit_exponent(series: TimeSeries, window: tuple | None = None, *, envelope: bool = False) -> DecayFit:
    """Least squares of log f against log x; f ~ C x^(-p).

    C is the smallest constant with f <= C x^(-p) on the window. ``envelope``
    fits the local maxima instead of every sample (ringing tails).
    """
    window = window or default_window(series)
    lo, hi = window
    sel = (series.abscissa >= lo - 1e-12) & (series.abscissa <= hi + 1e-12)
    x, y = series.abscissa[sel], series.values[sel]
    if envelope:
        x, y = local_maxima(x, y)
    if len(x) < 3:
        raise InsufficientSamples(f"only {len(x)} samples in the fit window {window}")
    if np.any(y <= 0) or np.any(x <= 0):
        raise DecayError("fit window contains nonpositive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    p = -float(slope)
    rms = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    C = float(np.max(y * x**p))
    return DecayFit(p, C, (float(lo), float(hi)), rms, int(len(x)), envelope)


# --------------------------------------------------------------------------
# envelopes


@dataclass(frozen=True)
class EnvelopeCheck:
    bound: str
    C_min: float
    C_middle: float
    C_last: float
    stabilized: bool

    def as_dict(self):
        return {"bound": self.bound, "C_min": self.C_min, "C_middle": self.C_middle,
                "C_last": self.C_last, "stabilized": self.stabilized}


STABILITY_TOLERANCE = 0.10


def envelope_weights(series: TimeSeries, bound: str) -> np.ndarray:
    f = series.values
    v_plus = np.maximum(1.0, series.v)
    if bound == "one_over_v":
        return f * (1.0 + np.abs(series.v))
    if bound == "one_over_w":
        return f * (1.0 + np.abs(series.w))
    if bound == "near_horizon_w_over_vplus_sq":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = f**2 * (v_plus / series.w) ** 2
        return np.where(f == 0, 0.0, out)
    if bound == "near_horizon_offset":
        return f**2 / (1.0 + (series.w / v_plus) ** 2)
    raise DecayError(f"bound must be one of {BOUNDS}")


def stabilization(weighted, tolerance: float = STABILITY_TOLERANCE) -> tuple:
    """(sup, sup over middle third, sup over last third, stabilized) of a weighted series.

    The last-third constant may exceed the middle-third one by at most
    ``tolerance``; a constant that is still falling counts as stabilized.
    """
    weighted = np.asarray(weighted, dtype=float)
    n = len(weighted)
    third = max(1, n // 3)
    middle = weighted[third:2 * third] if n >= 3 else weighted
    last = weighted[2 * third:] if n >= 3 else weighted
    c_mid, c_last = float(np.max(middle)), float(np.max(last))
    stable = bool(c_last <= (1.0 + tolerance) * c_mid) if c_mid > 0 else c_last == 0.0
    return float(np.max(weighted)), c_mid, c_last, stable


def check_envelope(series: TimeSeries, bound: str, *, tolerance: float = STABILITY_TOLERANCE) -> EnvelopeCheck:
    """Smallest envelope constant for ``bound`` and whether it has stopped growing."""
    if len(series) == 0:
        raise DecayError("empty series")
    c_min, c_mid, c_last, stable = stabilization(envelope_weights(series, bound), tolerance)
    return EnvelopeCheck(bound, c_min, c_mid, c_last, stable)


def series_from_function(fn, x) -> TimeSeries:
    """Series with abscissa v = x (w = 0); handy for checks on closed forms."""
    x = np.asarray(x, dtype=float)
    return TimeSeries(x, np.abs(fn(x)), np.zeros_like(x), x, "analytic")
