"""
Multiplier currents, energies, fluxes and bulk terms on evolved histories.

Everything is written in the spherically symmetric null frame (w, v) with
Omega = 1 - 2m/r, g_wv = -Omega/2 and area element r^2 dsigma^2 (4 pi after
the angular integral). The stress-energy tensor is

    T_mn = F_ma F_n^a - g_mn F^2 / 4 + 2 Re(D_m phi conj(D_n phi)) - g_mn (|D phi|^2 + P),

whose null-frame components for spherical fields are

    T_ww = 2 |D_w phi|^2,  T_vv = 2 |D_v phi|^2,  T_wv = F_vw^2 / Omega + Omega P / 2,
    angular trace = 4 F_vw^2 / Omega^2 + 8 Re(D_w phi conj(D_v phi)) / Omega - 2 P.

For V = V^w d_w + V^v d_v the divergence identity on a rectangle
[wa, wb] x [va, vb] reads

    flux_w(wa) - flux_w(wb) + flux_v(va) - flux_v(vb) = bulk,

flux_w(w) = 4 pi int r^2 T(V, d_v) dv, flux_v(v) = 4 pi int r^2 T(V, d_w) dw and
bulk = 4 pi int (T . pi)(Omega / 2) r^2 dw dv.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .evolution import FieldHistory, GaugeView, GridSpec, ModeHistory, RadiusTable
from .fields import FieldSample, PotentialSpec, potential_value
from .geometry import BackgroundParams, lapse_from_tortoise, radius_from_tortoise, tortoise

FOUR_PI = 4.0 * math.pi
MULTIPLIER_KINDS = ("TimeT", "MorawetzK", "RadialG", "RedshiftH")
FUNCTIONALS = ("E_t", "E_t_reduced", "E_K", "E_G", "E_H", "E_sharp", "J_K", "J_G", "I_H",
               "E_MH", "E_MH_hat", "E1", "E2", "E3", "E4")


class DiagnosticsError(ValueError):
    pass


# --------------------------------------------------------------------------
# stress-energy


@dataclass(frozen=True)
class StressEnergy:
    T_ww: object
    T_vv: object
    T_wv: object
    angular_trace: object
    potential: object

    def contract(self, Vw, Vv, Xw, Xv):
        """T(V, X) for null-frame vectors V and X."""
        return (Vw * Xw * self.T_ww + Vv * Xv * self.T_vv
                + (Vw * Xv + Vv * Xw) * self.T_wv)


def stress_energy(sample: FieldSample, P, bg: BackgroundParams, r) -> StressEnergy:
    """Null-frame components at radius ``r``; works element-wise on arrays."""
    om = 1.0 - 2.0 * bg.m / np.asarray(r, dtype=float)
    F = np.asarray(sample.F_vw, dtype=float)
    Dw = np.asarray(sample.Dw_phi, dtype=complex)
    Dv = np.asarray(sample.Dv_phi, dtype=complex)
    P = np.asarray(P, dtype=float)
    T_ww = 2.0 * np.abs(Dw) ** 2
    T_vv = 2.0 * np.abs(Dv) ** 2
    T_wv = F**2 / om + 0.5 * om * P
    cross = np.real(Dw * np.conj(Dv))
    trace = 4.0 * F**2 / om**2 + 8.0 * cross / om - 2.0 * P
    return StressEnergy(T_ww[()], T_vv[()], T_wv[()], trace[()], P[()])


def stress_energy_tensor(sample: FieldSample, P: float, bg: BackgroundParams, r: float) -> np.ndarray:
    """Full 4x4 covariant T in coordinates (w, v, theta, phi) at theta = pi/2.

    Independent of :func:`stress_energy`: it builds the metric and contracts
    indices numerically, so it serves as a second evaluator.
    """
    om = 1.0 - 2.0 * bg.m / r
    g = np.zeros((4, 4))
    g[0, 1] = g[1, 0] = -0.5 * om
    g[2, 2] = r * r
    g[3, 3] = r * r
    ginv = np.linalg.inv(g)
    Fl = np.zeros((4, 4))
    Fl[1, 0] = sample.F_vw
    Fl[0, 1] = -sample.F_vw
    D = np.array([sample.Dw_phi, sample.Dv_phi, 0.0, 0.0], dtype=complex)
    F_mixed = Fl @ ginv  # F_m^a
    F_sq = np.einsum("ab,ac,bd,cd->", Fl, ginv, ginv, Fl)
    D_sq = np.real(np.einsum("a,ab,b->", D, ginv, np.conj(D)))
    T = (np.einsum("ma,na->mn", Fl, F_mixed)
         - 0.25 * g * F_sq
         + 2.0 * np.real(np.outer(D, np.conj(D)))
         - g * (D_sq + P))
    return T


def tensor_null_components(T: np.ndarray, r: float) -> dict:
    return {"T_ww": T[0, 0], "T_vv": T[1, 1], "T_wv": T[0, 1],
            "angular_trace": (T[2, 2] + T[3, 3]) / r**2}


def current(T: StressEnergy, Vw, Vv):
    """J = V^n T_mn as its null components (J_w, J_v)."""
    J_w = Vw * T.T_ww + Vv * T.T_wv
    J_v = Vw * T.T_wv + Vv * T.T_vv
    return J_w, J_v


# --------------------------------------------------------------------------
# profiles and multipliers


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def _smoothstep_slope(x):
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 30.0 * xc**2 * (1.0 - xc) ** 2, 0.0)


def _smoothstep_area(x):
    """Integral of the smoothstep from 0 to x (linear continuation past 1)."""
    xc = np.clip(x, 0.0, 1.0)
    base = xc**6 - 3.0 * xc**5 + 2.5 * xc**4
    return base + np.maximum(np.asarray(x, dtype=float) - 1.0, 0.0)


@dataclass(frozen=True)
class CutoffSpec:
    """Indicator of [lo, hi]; the smooth version ramps over ``width`` on each side."""

    kind: str = "smooth"
    lo: float = -1.0
    hi: float = 1.0
    width: float = 0.5

    def __post_init__(self):
        if self.kind not in ("sharp", "smooth"):
            raise ValueError(f"cut-off kind must be sharp or smooth, got {self.kind!r}")
        if not self.hi > self.lo:
            raise ValueError("cut-off needs hi > lo")
        if self.kind == "smooth" and not self.width > 0:
            raise ValueError("smooth cut-off needs a positive width")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sharp":
            return ((x >= self.lo) & (x <= self.hi)).astype(float)[()]
        up = _smoothstep((x - self.lo + self.width) / self.width)
        down = 1.0 - _smoothstep((x - self.hi) / self.width)
        return (up * down)[()]

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sharp":
            return np.zeros_like(x)[()]
        up = _smoothstep_slope((x - self.lo + self.width) / self.width) / self.width
        down = -_smoothstep_slope((x - self.hi) / self.width) / self.width
        return (up + down)[()]

    def antiderivative(self, x):
        """Integral of the cut-off from -infinity to x."""
        x = np.asarray(x, dtype=float)
        if self.kind == "sharp":
            return np.clip(x - self.lo, 0.0, self.hi - self.lo)[()]
        w = self.width
        rise = w * _smoothstep_area((x - self.lo + w) / w)
        fall = w * _smoothstep_area((x - self.hi) / w)
        return (rise - fall)[()]


@dataclass(frozen=True)
class Profile:
    """Radial profile of r*: value and first derivative."""

    value: Callable
    slope: Callable
    label: str = "custom"
    plateau: Optional[tuple] = None

    def __call__(self, rstar):
        return self.value(np.asarray(rstar, dtype=float))

    def derivative(self, rstar):
        return self.slope(np.asarray(rstar, dtype=float))


def zero_profile() -> Profile:
    return Profile(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x), "zero")


def linear_profile() -> Profile:
    return Profile(lambda x: x * 1.0, lambda x: np.ones_like(x), "linear")


def radial_cutoff_profile(bg: BackgroundParams, r1: float, kind: str = "smooth",
                          width: float = 0.5) -> Profile:
    """f(r*) = integral of the cut-off of [r*(r1), 1.2 r*(r1)] (endpoints ordered)."""
    a = float(tortoise(bg, r1))
    lo, hi = sorted((a, 1.2 * a))
    cut = CutoffSpec(kind, lo, hi, width)
    return Profile(cut.antiderivative, cut, f"cutoff-{kind}")


def redshift_profile(bg: BackgroundParams, r1: float, *, height: float = 1.0,
                     tilt: float = 0.5, rise_start: float = -12.0, rise_width: float = 2.0,
                     fall_fraction: float = 0.8) -> Profile:
    """Default h: C^2 bump that rises from 0, tilts gently upward and falls to 0.

    On the plateau h = height (1 + tilt Omega(r)), so h' = height tilt Omega mu / r,
    which keeps all four admissibility margins strictly positive there. The fall
    starts at r*(r1) and ends at ``fall_fraction`` of the way to r*(1.2 r1).
    """
    if not 0 <= tilt < 3:
        raise ValueError("tilt must lie in [0, 3) for the plateau margins to stay positive")
    fall_start = float(tortoise(bg, r1))
    fall_end = fall_start + fall_fraction * (float(tortoise(bg, 1.2 * r1)) - fall_start)
    plateau_end = fall_start
    if not rise_start + rise_width < plateau_end:
        raise ValueError("h rise must finish before r*(r1)")
    fall_len = fall_end - fall_start

    def core(x):
        om = lapse_from_tortoise(bg, x)
        return height * (1.0 + tilt * om)

    def core_slope(x):
        om = lapse_from_tortoise(bg, x)
        r = radius_from_tortoise(bg, x)
        return height * tilt * om * (2.0 * bg.m / r) / r

    def value(x):
        up = _smoothstep((x - rise_start) / rise_width)
        down = 1.0 - _smoothstep((x - fall_start) / fall_len)
        return core(x) * up * down

    def slope(x):
        up = _smoothstep((x - rise_start) / rise_width)
        dup = _smoothstep_slope((x - rise_start) / rise_width) / rise_width
        down = 1.0 - _smoothstep((x - fall_start) / fall_len)
        ddown = -_smoothstep_slope((x - fall_start) / fall_len) / fall_len
        return core_slope(x) * up * down + core(x) * (dup * down + up * ddown)

    return Profile(value, slope, "redshift-bump", plateau=(rise_start + rise_width, plateau_end))


@dataclass(frozen=True)
class MultiplierSpec:
    """One of the four multiplier vector fields, with its radial profile."""

    kind: str
    profile: Optional[Profile] = None

    def __post_init__(self):
        if self.kind not in MULTIPLIER_KINDS:
            raise ValueError(f"multiplier kind must be one of {MULTIPLIER_KINDS}")
        if self.kind in ("RadialG", "RedshiftH") and self.profile is None:
            raise ValueError(f"{self.kind} needs a radial profile")

    def scaled(self, factor: float) -> "ScaledMultiplier":
        return ScaledMultiplier(self, factor)

    def components(self, bg, w, v, rstar, r, om):
        if self.kind == "TimeT":
            return np.ones_like(rstar), np.ones_like(rstar)
        if self.kind == "MorawetzK":
            return -(w**2) * np.ones_like(rstar), -(v**2) * np.ones_like(rstar)
        p = self.profile(rstar)
        if self.kind == "RadialG":
            return -p, p
        return -p / om, -p

    def derivatives(self, bg, w, v, rstar, r, om):
        """(dVw/dw, dVw/dv, dVv/dw, dVv/dv)."""
        zero = np.zeros_like(rstar)
        if self.kind == "TimeT":
            return zero, zero, zero, zero
        if self.kind == "MorawetzK":
            return -2.0 * w * np.ones_like(rstar), zero, zero, -2.0 * v * np.ones_like(rstar)
        p = self.profile(rstar)
        dp = self.profile.derivative(rstar)  # d/dr*; d/dv = +1/2 d/dr*, d/dw = -1/2 d/dr*
        if self.kind == "RadialG":
            return 0.5 * dp, -0.5 * dp, -0.5 * dp, 0.5 * dp
        mu = 2.0 * bg.m / r
        dv_hw = -0.5 * dp / om + 0.5 * p * mu / (r * om)
        return -dv_hw, dv_hw, 0.5 * dp, -0.5 * dp


@dataclass(frozen=True)
class ScaledMultiplier:
    base: MultiplierSpec
    factor: float

    @property
    def kind(self):
        return self.base.kind

    def components(self, *args):
        a, b = self.base.components(*args)
        return self.factor * a, self.factor * b

    def derivatives(self, *args):
        return tuple(self.factor * d for d in self.base.derivatives(*args))


def deformation_contraction(T: StressEnergy, V, bg, w, v, rstar, r, om):
    """T^{ab} pi_ab for V on the spherical background (element-wise)."""
    Vw, Vv = V.components(bg, w, v, rstar, r, om)
    dww, dwv, dvw, dvv = V.derivatives(bg, w, v, rstar, r, om)
    mu = 2.0 * bg.m / r
    # d_w Omega = -mu Omega / (2 r), d_v Omega = +mu Omega / (2 r)
    d_om_w = -0.5 * mu * om / r
    d_om_v = 0.5 * mu * om / r
    div_like = (d_om_w * Vw + om * dww) + (d_om_v * Vv + om * dvv)
    radial_speed = 0.5 * om * (Vv - Vw)
    return (-(2.0 / om) * (T.T_vv * dvw + T.T_ww * dwv)
            - (2.0 / om**2) * T.T_wv * div_like
            + radial_speed / r * T.angular_trace)


# --------------------------------------------------------------------------
# gridded fields


@dataclass
class NodeFields:
    """Gauge-covariant fields at every node of a history, ready for quadrature."""

    grid: GridSpec
    bg: BackgroundParams
    r: np.ndarray
    lapse: np.ndarray
    phi: np.ndarray
    A_w: np.ndarray
    A_v: np.ndarray
    Dw: np.ndarray
    Dv: np.ndarray
    F_vw: np.ndarray
    P: np.ndarray
    excluded: np.ndarray
    label: str = "fields"

    @property
    def W(self):
        return np.broadcast_to(self.grid.w[:, None], self.r.shape)

    @property
    def V(self):
        return np.broadcast_to(self.grid.v[None, :], self.r.shape)

    @property
    def rstar(self):
        return 0.5 * (self.V - self.W)

    def stress(self) -> StressEnergy:
        sample = FieldSample(self.phi, 0.0, 0.0, self.F_vw, self.Dw, self.Dv)
        return stress_energy(sample, self.P, self.bg, self.r)


def _d(arr, delta, axis):
    return np.gradient(arr, delta, axis=axis, edge_order=2)


def node_fields(history) -> NodeFields:
    if isinstance(history, NodeFields):
        return history
    base = history.base if isinstance(history, GaugeView) else history
    if not isinstance(base, FieldHistory):
        raise DiagnosticsError("node_fields needs a nonlinear-sector history")
    d = base.grid.delta
    phi = history.phi
    A_w = np.asarray(history.A_w, dtype=float)
    A_v = np.asarray(history.A_v, dtype=float)
    Dw = _d(phi, d, 0) - 1j * A_w * phi
    Dv = _d(phi, d, 1) - 1j * A_v * phi
    P = potential_value(base.potential, phi)
    return NodeFields(base.grid, base.bg, base.r, base.lapse, phi, A_w, A_v, Dw, Dv,
                      base.F_vw, np.asarray(P, dtype=float), base.excluded)


def time_commuted(history) -> NodeFields:
    """Fields of the pair (L_t F, D_t phi), by centred differences in t.

    d_t at fixed r* is d_w + d_v. The potential slot carries |d_t P(phi)|.
    """
    nf = node_fields(history)
    d = nf.grid.delta
    phi_t = nf.Dw + nf.Dv
    F_t = _d(nf.F_vw, d, 0) + _d(nf.F_vw, d, 1)
    P_t = np.abs(_d(nf.P, d, 0) + _d(nf.P, d, 1))
    Dw = _d(phi_t, d, 0) - 1j * nf.A_w * phi_t
    Dv = _d(phi_t, d, 1) - 1j * nf.A_v * phi_t
    return NodeFields(nf.grid, nf.bg, nf.r, nf.lapse, phi_t, nf.A_w, nf.A_v, Dw, Dv,
                      F_t, P_t, nf.excluded, label="time-commuted")


def maxwell_part(nf: NodeFields) -> NodeFields:
    """The same fields with the scalar switched off (for Maxwell-only energies)."""
    zero = np.zeros_like(nf.phi)
    return NodeFields(nf.grid, nf.bg, nf.r, nf.lapse, zero, nf.A_w, nf.A_v, zero, zero,
                      nf.F_vw, np.zeros_like(nf.P), nf.excluded, label="maxwell")


def without_maxwell(nf: NodeFields) -> NodeFields:
    return NodeFields(nf.grid, nf.bg, nf.r, nf.lapse, nf.phi, nf.A_w, nf.A_v, nf.Dw, nf.Dv,
                      np.zeros_like(nf.F_vw), nf.P, nf.excluded, label="reduced")


# --------------------------------------------------------------------------
# slices


@dataclass
class SliceEnergy:
    value: float
    slice: tuple
    domain: tuple
    clipped: bool
    nodes: int
    excluded: int
    tail: float = 0.0

    def as_dict(self):
        return {"value": self.value, "slice": list(self.slice), "domain": list(self.domain),
                "clipped": self.clipped, "nodes": self.nodes, "excluded": self.excluded,
                "tail": self.tail}


def _trapezoid(y, x):
    if len(y) < 2:
        return 0.0
    return float(np.trapezoid(y, x)) if hasattr(np, "trapezoid") else float(np.trapz(y, x))


def slice_nodes(grid: GridSpec, kind: str, value: float):
    """Index arrays (i, j) of the nodes lying on a t, w or v slice."""
    d = grid.delta
    if kind == "t":
        n = (2.0 * value - grid.w0 - grid.v0) / d
        if abs(n - round(n)) > 1e-9:
            raise DiagnosticsError(f"t = {value} does not pass through grid nodes")
        n = int(round(n))
        i = np.arange(max(0, n - (grid.nv - 1)), min(grid.nw - 1, n) + 1)
        j = n - i
        return i[::-1], j[::-1]
    if kind == "w":
        k = (value - grid.w0) / d
        if abs(k - round(k)) > 1e-9 or not 0 <= round(k) < grid.nw:
            raise DiagnosticsError(f"w = {value} is not a grid row")
        j = np.arange(grid.nv)
        return np.full_like(j, int(round(k))), j
    if kind == "v":
        k = (value - grid.v0) / d
        if abs(k - round(k)) > 1e-9 or not 0 <= round(k) < grid.nv:
            raise DiagnosticsError(f"v = {value} is not a grid column")
        i = np.arange(grid.nw)
        return i, np.full_like(i, int(round(k)))
    raise DiagnosticsError(f"unknown slice kind {kind!r}")


def slice_energy(history, V, slice: tuple, domain: tuple | None = None, *,
                 coulomb_tail: bool = False) -> SliceEnergy:
    """Flux of V through a t, w or v slice restricted to an r* interval.

    t-slices integrate 4 pi r^2 T(V, d_t) dr*; w-slices 4 pi r^2 T(V, d_v) dv;
    v-slices 4 pi r^2 T(V, d_w) dw. With ``coulomb_tail`` a t-slice energy is
    completed by the static Coulomb energy 2 pi Q^2 (1/r_out) outside the grid
    and 2 pi Q^2 (1/2m - 1/r_in) between the horizon and the inner end.
    """
    nf = node_fields(history)
    kind, value = slice
    i, j = slice_nodes(nf.grid, kind, value)
    rstar = 0.5 * (nf.grid.v[j] - nf.grid.w[i])
    lo, hi = (-np.inf, np.inf) if domain is None else domain
    keep = (rstar >= lo - 1e-12) & (rstar <= hi + 1e-12)
    clipped = bool(domain is not None and (rstar.min() > lo or rstar.max() < hi))
    if domain is None:
        clipped = False
    i, j, rstar = i[keep], j[keep], rstar[keep]
    if len(i) < 2:
        raise DiagnosticsError(f"slice {slice} has fewer than two nodes in {domain}")
    sub = _pick(nf, i, j)
    T = sub.stress()
    w = nf.grid.w[i]
    v = nf.grid.v[j]
    Vw, Vv = V.components(nf.bg, w, v, rstar, sub.r, sub.lapse)
    if kind == "t":
        dens, x = T.contract(Vw, Vv, 1.0, 1.0), rstar
    elif kind == "w":
        dens, x = T.contract(Vw, Vv, 0.0, 1.0), v
    else:
        dens, x = T.contract(Vw, Vv, 1.0, 0.0), w
    integrand = FOUR_PI * sub.r**2 * np.where(sub.excluded, 0.0, dens)
    order = np.argsort(x)
    val = _trapezoid(integrand[order], x[order])
    tail = 0.0
    if coulomb_tail:
        if kind != "t" or V.kind != "TimeT":
            raise DiagnosticsError("the Coulomb completion applies to E_t on t-slices")
        Q = sub.F_vw * 2.0 * sub.r**2 / sub.lapse
        k_out, k_in = np.argmax(rstar), np.argmin(rstar)
        tail = 2.0 * math.pi * Q[k_out] ** 2 / sub.r[k_out]
        if nf.bg.m > 0:
            tail += 2.0 * math.pi * Q[k_in] ** 2 * (1.0 / (2.0 * nf.bg.m) - 1.0 / sub.r[k_in])
        val += tail
    return SliceEnergy(val, (kind, float(value)), (float(rstar.min()), float(rstar.max())),
                       clipped, int(len(i)), int(np.count_nonzero(sub.excluded)), tail)


def _pick(nf: NodeFields, i, j) -> NodeFields:
    return NodeFields(nf.grid, nf.bg, nf.r[i, j], nf.lapse[i, j], nf.phi[i, j], nf.A_w[i, j],
                      nf.A_v[i, j], nf.Dw[i, j], nf.Dv[i, j], nf.F_vw[i, j], nf.P[i, j],
                      nf.excluded[i, j], nf.label)


def slice_times(grid: GridSpec, t_lo: float, t_hi: float, stride: int = 1):
    """Node-aligned t values in [t_lo, t_hi]."""
    d = grid.delta
    base = 0.5 * (grid.w0 + grid.v0)
    n_lo = math.ceil((t_lo - base) / (0.5 * d) - 1e-9)
    n_hi = math.floor((t_hi - base) / (0.5 * d) + 1e-9)
    return [base + 0.5 * d * n for n in range(n_lo, n_hi + 1, stride)]


# --------------------------------------------------------------------------
# bulk terms and divergence identity


def _region_indices(grid: GridSpec, region):
    wa, wb, va, vb = region
    d = grid.delta

    def idx(x, x0, n):
        k = (x - x0) / d
        if abs(k - round(k)) > 1e-9 or not 0 <= round(k) < n:
            raise DiagnosticsError(f"region edge {x} is not inside the grid")
        return int(round(k))

    ia, ib = idx(wa, grid.w0, grid.nw), idx(wb, grid.w0, grid.nw)
    ja, jb = idx(va, grid.v0, grid.nv), idx(vb, grid.v0, grid.nv)
    if not (ib > ia and jb > ja):
        raise DiagnosticsError("region needs wb > wa and vb > va")
    return ia, ib, ja, jb


def _trapz2(f, d):
    wts_w = np.full(f.shape[0], d)
    wts_w[[0, -1]] *= 0.5
    wts_v = np.full(f.shape[1], d)
    wts_v[[0, -1]] *= 0.5
    return float(wts_w @ f @ wts_v)


def bulk_integral(history, V, region, *, route: str = "contraction") -> float:
    """Spacetime integral of div J over a (w, v) rectangle.

    ``contraction`` integrates T . pi(V) directly; ``divergence`` integrates
    -[d_w(r^2 J_v) + d_v(r^2 J_w)] with centred differences of the current.
    """
    nf = node_fields(history)
    ia, ib, ja, jb = _region_indices(nf.grid, region)
    d = nf.grid.delta
    if route == "contraction":
        sl = (slice(ia, ib + 1), slice(ja, jb + 1))
        sub = _pick(nf, *sl)
        T = sub.stress()
        W, Vv_ = nf.W[sl], nf.V[sl]
        rs = 0.5 * (Vv_ - W)
        tp = deformation_contraction(T, V, nf.bg, W, Vv_, rs, sub.r, sub.lapse)
        dens = FOUR_PI * 0.5 * sub.lapse * sub.r**2 * tp
        return _trapz2(np.where(sub.excluded, 0.0, dens), d)
    if route == "divergence":
        T = nf.stress()
        Vw, Vv = V.components(nf.bg, nf.W, nf.V, nf.rstar, nf.r, nf.lapse)
        J_w, J_v = current(T, Vw, Vv)
        dens = -FOUR_PI * (_d(nf.r**2 * J_v, d, 0) + _d(nf.r**2 * J_w, d, 1))
        sl = (slice(ia, ib + 1), slice(ja, jb + 1))
        return _trapz2(np.where(nf.excluded[sl], 0.0, dens[sl]), d)
    raise DiagnosticsError(f"unknown bulk route {route!r}")


def rectangle_fluxes(history, V, region) -> dict:
    nf = node_fields(history)
    wa, wb, va, vb = region
    ia, ib, ja, jb = _region_indices(nf.grid, region)
    dom_v = (0.5 * (nf.grid.v[ja] - wa), 0.5 * (nf.grid.v[jb] - wa))

    def seg(kind, value, lo_idx, hi_idx, along):
        i, j = slice_nodes(nf.grid, kind, value)
        i, j = i[lo_idx:hi_idx + 1], j[lo_idx:hi_idx + 1]
        sub = _pick(nf, i, j)
        T = sub.stress()
        w, v = nf.grid.w[i], nf.grid.v[j]
        rs = 0.5 * (v - w)
        Vw, Vv = V.components(nf.bg, w, v, rs, sub.r, sub.lapse)
        dens = T.contract(Vw, Vv, 0.0, 1.0) if kind == "w" else T.contract(Vw, Vv, 1.0, 0.0)
        integrand = FOUR_PI * sub.r**2 * np.where(sub.excluded, 0.0, dens)
        return _trapezoid(integrand, v if kind == "w" else w)

    del dom_v
    return {
        "w_a": seg("w", wa, ja, jb, "v"),
        "w_b": seg("w", wb, ja, jb, "v"),
        "v_a": seg("v", va, ia, ib, "w"),
        "v_b": seg("v", vb, ia, ib, "w"),
    }


def divergence_residual(history, V, region, *, route: str = "contraction") -> dict:
    """|bulk - (boundary flux sum)| on a (w, v) rectangle."""
    fl = rectangle_fluxes(history, V, region)
    bulk = bulk_integral(history, V, region, route=route)
    boundary = fl["w_a"] - fl["w_b"] + fl["v_a"] - fl["v_b"]
    return {"residual": abs(boundary - bulk), "bulk": bulk, "boundary": boundary, **fl}


def slab_bulk(history, V, t1: float, t2: float, domain: tuple | None = None) -> float:
    """Bulk of V between two t-slices: 4 pi int T.pi Omega r^2 dr* dt."""
    nf = node_fields(history)
    times = slice_times(nf.grid, t1, t2)
    vals = []
    for t in times:
        i, j = slice_nodes(nf.grid, "t", t)
        rs = 0.5 * (nf.grid.v[j] - nf.grid.w[i])
        keep = np.ones_like(rs, dtype=bool) if domain is None else (rs >= domain[0]) & (rs <= domain[1])
        i, j, rs = i[keep], j[keep], rs[keep]
        if len(i) < 2:
            vals.append(0.0)
            continue
        sub = _pick(nf, i, j)
        tp = deformation_contraction(sub.stress(), V, nf.bg, nf.grid.w[i], nf.grid.v[j], rs,
                                     sub.r, sub.lapse)
        dens = FOUR_PI * sub.lapse * sub.r**2 * np.where(sub.excluded, 0.0, tp)
        order = np.argsort(rs)
        vals.append(_trapezoid(dens[order], rs[order]))
    return _trapezoid(np.asarray(vals), np.asarray(times))


# --------------------------------------------------------------------------
# sign structure and admissibility


def jk_factor(bg: BackgroundParams, r, variant: str = "displayed"):
    """Morawetz bulk weight of the Maxwell term.

    ``displayed``: 4 + (3 mu - 2) r*/r. ``derived``: 2 + (3 mu - 2) r*/r, the
    value obtained by contracting K with the deformation tensor.
    """
    r = np.asarray(r, dtype=float)
    mu = 2.0 * bg.m / r
    lead = {"displayed": 4.0, "derived": 2.0}[variant]
    return (lead + (3.0 * mu - 2.0) * tortoise(bg, r) / r)[()]


def jk_sign_structure(bg: BackgroundParams, variant: str = "displayed",
                      r_max: float = 1e6, samples: int = 200001) -> dict:
    """Locate where the J^K factor is positive; report whether that set is bounded."""
    x = np.linspace(math.log(1e-9), math.log(r_max - 2 * bg.m), samples)
    r = 2 * bg.m + np.exp(x)
    f = jk_factor(bg, r, variant)
    pos = f > 0
    if not pos.any():
        return {"variant": variant, "interval": None, "bounded": False, "positive_inside": False,
                "negative_outside": True}
    k = np.flatnonzero(pos)
    lo_k, hi_k = k[0], k[-1]
    contiguous = bool(np.all(pos[lo_k:hi_k + 1]))
    r_lo = _bisect_root(lambda s: jk_factor(bg, s, variant), r[lo_k - 1], r[lo_k]) if lo_k > 0 else r[0]
    bounded_above = hi_k < len(r) - 1
    r_hi = (_bisect_root(lambda s: jk_factor(bg, s, variant), r[hi_k], r[hi_k + 1])
            if bounded_above else math.inf)
    return {
        "variant": variant,
        "interval": (float(r_lo), float(r_hi)),
        "bounded": bool(lo_k > 0 and bounded_above and contiguous),
        "positive_inside": contiguous,
        "negative_outside": bool(np.all(~pos[:lo_k]) and np.all(~pos[hi_k + 1:])),
        "min_outside": float(f[~pos].max()) if (~pos).any() else None,
    }


def _bisect_root(fn, a, b, iters=200):
    fa = fn(a)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        fm = fn(mid)
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
        if b - a < 1e-13 * max(1.0, abs(b)):
            break
    return 0.5 * (a + b)


def check_r1_window(bg: BackgroundParams, r1: float) -> None:
    if not (2.0 * bg.m < r1 and 1.2 * r1 < 3.0 * bg.m):
        raise DiagnosticsError(
            f"r1 = {r1} violates the red-shift support window 2m < r1, 1.2 r1 < 3m (m = {bg.m})")


def check_h_admissible(h: Profile, bg: BackgroundParams, r1: float, *, domain: tuple | None = None,
                       samples: int = 4001) -> dict:
    """Evaluate h >= 0, h' >= 0, mu h/r - h' >= 0 and 3h/r - h'/Omega >= 0 for r <= r1.

    The sample domain defaults to the profile plateau clipped at r*(r1) when the
    profile has one, otherwise to [r*(2m + 1e-3), r*(r1)].
    """
    check_r1_window(bg, r1)
    top = float(tortoise(bg, r1))
    if domain is None:
        if h.plateau is not None:
            domain = (h.plateau[0], min(h.plateau[1], top))
        else:
            domain = (float(tortoise(bg, 2 * bg.m + 1e-3)), top)
    x = np.linspace(domain[0], domain[1], samples)
    r = radius_from_tortoise(bg, x)
    om = lapse_from_tortoise(bg, x)
    mu = 2.0 * bg.m / r
    hv = h(x) * np.ones_like(x)
    dh = h.derivative(x) * np.ones_like(x)
    margins = {
        "h1": hv,
        "h2": dh,
        "h3": mu * hv / r - dh,
        "h4": 3.0 * hv / r - dh / om,
    }
    tol = 1e-13
    out = {name: {"holds": bool(np.all(m >= -tol)), "worst_margin": float(m.min())}
           for name, m in margins.items()}
    # support inside [2m, 1.2 r1]: probe beyond 1.2 r1
    xs = np.linspace(float(tortoise(bg, 1.2 * r1)), float(tortoise(bg, 1.2 * r1)) + 20.0, 2001)
    out["support"] = {"holds": bool(np.all(np.abs(h(xs) * np.ones_like(xs)) <= tol)),
                      "worst_margin": float(-np.abs(h(xs) * np.ones_like(xs)).max())}
    out["domain"] = (float(domain[0]), float(domain[1]))
    out["all_hold"] = all(out[k]["holds"] for k in ("h1", "h2", "h3", "h4", "support"))
    out["strict"] = all(out[k]["worst_margin"] > 0 for k in ("h1", "h2", "h3", "h4"))
    return out


# --------------------------------------------------------------------------
# energies and composites


TIME = MultiplierSpec("TimeT")
MORAWETZ = MultiplierSpec("MorawetzK")


def energy_time(history, t: float, domain=None, *, coulomb_tail: bool = False) -> float:
    return slice_energy(history, TIME, ("t", t), domain, coulomb_tail=coulomb_tail).value


def energy_reduced(history, t: float, domain=None) -> float:
    """E_t with the radial electric term dropped (scalar and potential parts only)."""
    return slice_energy(without_maxwell(node_fields(history)), TIME, ("t", t), domain).value


def energy_maxwell(history, t: float, domain=None) -> float:
    return slice_energy(maxwell_part(node_fields(history)), TIME, ("t", t), domain).value


def energy_morawetz(history, t: float, domain=None) -> float:
    """Flux of -K through a t-slice (nonnegative for admissible potentials)."""
    return slice_energy(history, MORAWETZ.scaled(-1.0), ("t", t), domain).value


def energy_sharp(history, t: float, domain=None) -> float:
    """4 pi int {F^2/Omega^2 + |D_v phi|^2 + |D_w phi|^2 + Omega P / 2} r^2 dr* on a t-slice."""
    nf = node_fields(history)
    i, j = slice_nodes(nf.grid, "t", t)
    rs = 0.5 * (nf.grid.v[j] - nf.grid.w[i])
    if domain is not None:
        keep = (rs >= domain[0]) & (rs <= domain[1])
        i, j, rs = i[keep], j[keep], rs[keep]
    s = _pick(nf, i, j)
    dens = (s.F_vw**2 / s.lapse**2 + np.abs(s.Dv) ** 2 + np.abs(s.Dw) ** 2 + 0.5 * s.lapse * s.P)
    dens = FOUR_PI * s.r**2 * np.where(s.excluded, 0.0, dens)
    order = np.argsort(rs)
    return _trapezoid(dens[order], rs[order])


def angular_weights(ell: int, orders) -> np.ndarray:
    """ell(ell+1)^j for each commutation order j (spherical sector gives 1, 0, 0, ...)."""
    lam = ell * (ell + 1)
    return np.array([1.0 if j == 0 else float(lam) ** j for j in orders])


def composite_energy(reports: dict, kind: str, *, potential: PotentialSpec | None = None,
                     w: float | None = None, v: float | None = None, ell: int = 0) -> float:
    """Weighted sums of constituent energies.

    ``reports`` maps constituent names to values: E_t, E_K, E_sharp, E_F, and
    the time-commuted E_t_Lt, E_K_Lt, E_sharp_Lt. Angular commutation enters
    through ell(ell+1)^j weights; every commuted term appears once.
    """

    def need(name):
        if name not in reports:
            raise DiagnosticsError(f"composite {kind} is missing constituent {name}")
        return float(reports[name])

    def wsum(name, orders):
        return float(angular_weights(ell, orders).sum()) * need(name)

    if kind == "E_MH":
        return wsum("E_t", range(4)) + wsum("E_K", range(3))
    if kind == "E_MH_hat":
        out = 0.0
        for suffix in ("", "_Lt"):
            out += wsum("E_t" + suffix, range(6)) + wsum("E_K" + suffix, range(5))
        lam = ell * (ell + 1)
        out += (lam**6) * need("E_t") + (lam**5) * need("E_K")
        return out
    if kind == "E1":
        total = wsum("E_t", range(7)) + wsum("E_K", range(6))
        lam = ell * (ell + 1)
        total += sum(lam**j for j in range(1, 4)) * need("E_sharp")
        return math.sqrt(max(total, 0.0))
    if kind == "E2":
        lam = ell * (ell + 1)
        total = need("E_F") ** 2
        total += sum(lam**j for j in (1, 2)) * (need("E_sharp") + need("E_sharp_Lt"))
        total += lam**3 * need("E_sharp")
        return math.sqrt(max(total, 0.0))
    if kind == "E3":
        e_mh = composite_energy(reports, "E_MH", ell=ell)
        total = abs(wsum("E_t", range(3))) + wsum("E_sharp", range(3)) + e_mh
        return math.sqrt(max(total, 0.0))
    if kind == "E4":
        if w is None or v is None:
            raise DiagnosticsError("E4 depends on the point (w, v)")
        e3 = composite_energy(reports, "E3", ell=ell)
        ratio = (w / max(1.0, v)) ** 2
        if potential is not None and potential.kind == "Quartic":
            return ratio * e3 + e3**7 + e3**4 + e3**3 + e3
        return ratio * e3 + e3 + 1.0
    raise DiagnosticsError(f"unknown composite {kind!r}")


def e4_from_e3(e3: float, w: float, v: float, potential_kind: str) -> float:
    ratio = (w / max(1.0, v)) ** 2
    if potential_kind == "Quartic":
        return ratio * e3 + e3**7 + e3**4 + e3**3 + e3
    return ratio * e3 + e3 + 1.0


# --------------------------------------------------------------------------
# mode sector


def mode_energy(mh: ModeHistory, t: float, *, angular_order: int = 0, commuted: bool = False) -> float:
    """Conserved energy of one multipole on a t-slice.

    int (|d_w psi|^2 + |d_v psi|^2 + Omega V |psi|^2 / 2) dr*, with V the
    master potential including the mass term. ``angular_order`` j multiplies
    by ell(ell+1)^j; ``commuted`` replaces psi by d_t psi.
    """
    if mh.psi is None:
        raise DiagnosticsError("mode energy needs a fully stored mode history")
    d = mh.grid.delta
    psi = mh.psi
    if commuted:
        psi = _d(psi, d, 0) + _d(psi, d, 1)
    pw, pv = _d(psi, d, 0), _d(psi, d, 1)
    r, om = mh.r, mh.lapse
    Vpot = mh.mode.potential_at(mh.bg, r) + mh.mode.mass_term()
    dens = np.abs(pw) ** 2 + np.abs(pv) ** 2 + 0.5 * om * Vpot * np.abs(psi) ** 2
    i, j = slice_nodes(mh.grid, "t", t)
    rs = 0.5 * (mh.grid.v[j] - mh.grid.w[i])
    order = np.argsort(rs)
    return float(angular_weights(mh.mode.ell, [angular_order])[0]) * _trapezoid(dens[i, j][order], rs[order])


def time_derivative_mode_rays(row_psi: np.ndarray, grid: GridSpec, bg: BackgroundParams, mode) -> tuple:
    """Initial rays of d_t psi for data on w = w0 that vanish near the corner.

    Along w = w0, d_w psi follows from integrating d_v(d_w psi) = -(Omega/4) V psi
    from the corner. On v = v0 both psi and its derivatives vanish, so d_t psi is
    the corner value throughout.
    """
    table = RadiusTable.build(grid, bg)
    d = grid.delta
    idx = 2 * np.arange(grid.nv) - table.s_min
    r_row, om_row = table.r[idx], table.lapse[idx]
    src = -0.25 * om_row * (mode.potential_at(bg, r_row) + mode.mass_term()) * row_psi
    dw_row = np.concatenate([[0.0], np.cumsum(0.5 * d * (src[1:] + src[:-1]))])
    row_t = dw_row + np.gradient(row_psi, d, edge_order=2)
    return row_t, np.full(grid.nw, row_t[0])


# --------------------------------------------------------------------------
# reports


@dataclass
class EnergyReport:
    entries: list = field(default_factory=list)

    def add(self, functional: str, value: float, *, where=None, domain=None, commutation=(0, 0),
            flags=None) -> None:
        if functional not in FUNCTIONALS and not functional.startswith(FUNCTIONALS):
            raise DiagnosticsError(f"unknown functional {functional!r}")
        self.entries.append({
            "functional": functional,
            "where": where,
            "commutation": list(commutation),
            "domain": None if domain is None else [float(x) for x in domain],
            "value": float(value),
            "flags": flags or {},
        })

    def values(self, functional: str) -> list:
        return [e["value"] for e in self.entries if e["functional"] == functional]

    def latest(self) -> dict:
        out = {}
        for e in self.entries:
            out[e["functional"]] = e["value"]
        return out

    def to_ndjson(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.entries)
