"""
Characteristic evolution on a uniform double-null (w, v) grid.

Two sectors are evolved on the fixed exterior background:

* the spherically symmetric nonlinear Maxwell-Higgs system, in the gauge
  A_w = 0 with A_v fixed on the initial outgoing ray; the state per node is
  psi = r phi, the charge function Q and A_v;
* linear fixed-multipole master equations
  d_w d_v psi = -(1 - mu)/4 (l(l+1)/r^2 + (1 - s^2) 2m/r^3 + k) psi,
  with k the linearised mass of the potential.

Both use the second-order null-diamond update with sources evaluated at the
cell centre. Boundary data live on the outgoing ray w = w0 (row 0) and on the
ingoing ray v = v0 (column 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .fields import (
    MAXWELL_SIGN,
    PotentialSpec,
    current_density,
    field_strength,
    potential_derivative,
    toda_flags,
)
from .geometry import BackgroundParams, lapse_from_tortoise, radius_from_tortoise

LAPSE_FLOOR = 1e-6
SUPPORT_TOL = 1e-14

_KIND_CODES = {
    "Mass": _kernels.KIND_MASS,
    "Quartic": _kernels.KIND_QUARTIC,
    "SineGordon": _kernels.KIND_SINE,
    "Toda": _kernels.KIND_TODA,
}


class EvolutionError(RuntimeError):
    """Raised when a diamond update produces a non-finite value."""

    def __init__(self, message: str, cell: tuple[int, int] | None = None):
        super().__init__(message)
        self.cell = cell


class SupportError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    w0: float
    w1: float
    v0: float
    v1: float
    delta: float

    def __post_init__(self):
        if not (self.w1 > self.w0 and self.v1 > self.v0 and self.delta > 0):
            raise ValueError("grid needs w1 > w0, v1 > v0 and delta > 0")
        for span in (self.w1 - self.w0, self.v1 - self.v0):
            n = span / self.delta
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise ValueError(f"span {span} is not a multiple of delta {self.delta}")

    @property
    def nw(self) -> int:
        return int(round((self.w1 - self.w0) / self.delta)) + 1

    @property
    def nv(self) -> int:
        return int(round((self.v1 - self.v0) / self.delta)) + 1

    @property
    def w(self) -> np.ndarray:
        return self.w0 + self.delta * np.arange(self.nw)

    @property
    def v(self) -> np.ndarray:
        return self.v0 + self.delta * np.arange(self.nv)

    @property
    def rstar_base(self) -> float:
        return 0.5 * (self.v0 - self.w0)

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.w0, self.w1, self.v0, self.v1, self.delta / factor)

    def as_dict(self) -> dict:
        return {"w0": self.w0, "w1": self.w1, "v0": self.v0, "v1": self.v1, "delta": self.delta}


@dataclass
class RadiusTable:
    """Radii and lapse on quarter-step r* offsets covering a grid."""

    s_min: int
    r: np.ndarray
    lapse: np.ndarray

    @classmethod
    def build(cls, grid: GridSpec, bg: BackgroundParams) -> "RadiusTable":
        s_min = -2 * (grid.nw - 1) - 2
        s_max = 2 * (grid.nv - 1) + 2
        s = np.arange(s_min, s_max + 1)
        rstar = grid.rstar_base + s * grid.delta / 4.0
        return cls(s_min, radius_from_tortoise(bg, rstar), lapse_from_tortoise(bg, rstar))

    def node_index(self, grid: GridSpec) -> np.ndarray:
        i = np.arange(grid.nw)[:, None]
        j = np.arange(grid.nv)[None, :]
        return 2 * (j - i) - self.s_min

    def nodes(self, grid: GridSpec):
        idx = self.node_index(grid)
        return self.r[idx], self.lapse[idx]


# --------------------------------------------------------------------------
# initial data


def _bump(x):
    out = np.zeros_like(x, dtype=float)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


@dataclass(frozen=True)
class InitialData:
    """Profile imposed on one generating ray, plus the charge at the corner.

    ``profile`` is ``gaussian``, ``compact-bump`` or ``zero``. The complex
    phase exp(i omega x) makes the pulse carry charge. ``gauge_amplitude`` and
    ``gauge_wavenumber`` apply the residual gauge transformation
    chi(v) = a sin(k v) to the outgoing-ray data (used for gauge twins).
    """

    profile: str = "zero"
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    omega: float = 0.0
    ray: str = "outgoing"
    Q0: float = 0.0
    gauge_amplitude: float = 0.0
    gauge_wavenumber: float = 0.0

    def __post_init__(self):
        if self.profile not in ("gaussian", "compact-bump", "zero"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.ray not in ("outgoing", "ingoing"):
            raise ValueError(f"unknown ray {self.ray!r}")
        if self.width <= 0:
            raise ValueError("profile width must be positive")

    def shape(self, x):
        x = np.asarray(x, dtype=float)
        if self.profile == "zero" or self.amplitude == 0.0:
            return np.zeros_like(x, dtype=complex)
        z = (x - self.center) / self.width
        env = np.exp(-(z**2)) if self.profile == "gaussian" else _bump(z)
        return self.amplitude * env * np.exp(1j * self.omega * x)

    def chi(self, v):
        return self.gauge_amplitude * np.sin(self.gauge_wavenumber * np.asarray(v, dtype=float))

    def dchi(self, v):
        k = self.gauge_wavenumber
        return self.gauge_amplitude * k * np.cos(k * np.asarray(v, dtype=float))

    def gauge_twin(self, amplitude: float, wavenumber: float) -> "InitialData":
        from dataclasses import replace

        return replace(self, gauge_amplitude=amplitude, gauge_wavenumber=wavenumber)


@dataclass
class InitialRays:
    psi_row: np.ndarray
    psi_col: np.ndarray
    Q_row: np.ndarray
    Q_col: np.ndarray
    A_row: np.ndarray
    A_col: np.ndarray


def _check_support(data: InitialData, coords: np.ndarray, values: np.ndarray) -> None:
    if data.profile == "zero" or data.amplitude == 0.0:
        return
    edge = max(abs(values[0]), abs(values[-1]))
    if edge > SUPPORT_TOL * abs(data.amplitude):
        raise SupportError(
            f"{data.profile} profile centred at {data.center} is not supported inside "
            f"[{coords[0]}, {coords[-1]}] (edge value {edge:.3e})"
        )


def initialize(grid: GridSpec, data: InitialData, bg: BackgroundParams,
               potential: PotentialSpec | None = None,
               table: RadiusTable | None = None) -> InitialRays:
    """Impose the profile on its ray and integrate Q and A_v along both rays.

    Along w = w0:  d_v Q = -2 Im(conj(psi) d_v psi) + 2 A_v |psi|^2.
    Along v = v0:  d_w Q = 2 Im(conj(psi) d_w psi),  d_w A_v = -F_vw.
    The discrete forms are the edge-midpoint rules used by the interior update,
    so the discrete Gauss residual vanishes on both rays.
    """
    table = table or RadiusTable.build(grid, bg)
    w, v = grid.w, grid.v
    psi_row = np.zeros(grid.nv, dtype=complex)
    psi_col = np.zeros(grid.nw, dtype=complex)
    if data.ray == "outgoing":
        psi_row = data.shape(v)
        _check_support(data, v, psi_row)
        psi_col[0] = psi_row[0]
    else:
        psi_col = data.shape(w)
        _check_support(data, w, psi_col)
        psi_row[0] = psi_col[0]
    psi_row = psi_row * np.exp(1j * data.chi(v))
    psi_col = psi_col * np.exp(1j * data.chi(grid.v0))
    A_row = data.dchi(v) * np.ones(grid.nv)
    return rays_from_values(grid, bg, psi_row, psi_col, A_row, data.Q0, table)


def rays_from_values(grid: GridSpec, bg: BackgroundParams, psi_row, psi_col, A_row, Q0: float = 0.0,
                     table: RadiusTable | None = None) -> InitialRays:
    """Complete given psi rays (and A_v on the outgoing ray) by the constraint integrals."""
    table = table or RadiusTable.build(grid, bg)
    psi_row = np.asarray(psi_row, dtype=complex)
    psi_col = np.asarray(psi_col, dtype=complex)
    A_row = np.asarray(A_row, dtype=float)
    if psi_row[0] != psi_col[0]:
        raise ValueError("initial rays disagree at the corner")
    d = grid.delta
    Q_row = np.empty(grid.nv)
    Q_row[0] = Q0
    cross = np.imag(np.conj(psi_row[:-1]) * psi_row[1:])
    amid = 0.5 * (A_row[:-1] + A_row[1:])
    pmid2 = np.abs(0.5 * (psi_row[:-1] + psi_row[1:])) ** 2
    Q_row[1:] = Q0 + np.cumsum(-2.0 * cross + 2.0 * d * amid * pmid2)

    Q_col = np.empty(grid.nw)
    Q_col[0] = Q0
    Q_col[1:] = Q0 + np.cumsum(2.0 * np.imag(np.conj(psi_col[:-1]) * psi_col[1:]))
    idx = 2 * (0 - np.arange(grid.nw)) - table.s_min
    r_col, om_col = table.r[idx], table.lapse[idx]
    F_col = om_col * Q_col / (2.0 * r_col**2)
    A_col = np.empty(grid.nw)
    A_col[0] = A_row[0]
    A_col[1:] = A_row[0] - np.cumsum(0.5 * d * (F_col[:-1] + F_col[1:]))
    for arr in (Q_row, Q_col, A_col):
        if not np.all(np.isfinite(arr)):
            raise EvolutionError("constraint integration along the initial rays failed")
    return InitialRays(psi_row, psi_col, Q_row, Q_col, A_row, A_col)


# --------------------------------------------------------------------------
# nonlinear sector


@dataclass
class FieldHistory:
    """Evolved nonlinear-sector fields on the full grid (read-only after evolve)."""

    grid: GridSpec
    bg: BackgroundParams
    potential: PotentialSpec
    psi: np.ndarray
    Q: np.ndarray
    A_v: np.ndarray
    table: RadiusTable
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.psi, self.Q, self.A_v):
            arr.setflags(write=False)
        self._r, self._lapse = self.table.nodes(self.grid)

    @property
    def r(self) -> np.ndarray:
        return self._r

    @property
    def lapse(self) -> np.ndarray:
        return self._lapse

    @property
    def rstar(self) -> np.ndarray:
        return 0.5 * (self.grid.v[None, :] - self.grid.w[:, None])

    @property
    def phi(self) -> np.ndarray:
        return self.psi / self.r

    @property
    def A_w(self) -> np.ndarray:
        return np.zeros_like(self.Q)

    @property
    def F_vw(self) -> np.ndarray:
        return self.lapse * self.Q / (2.0 * self.r**2)

    @property
    def excluded(self) -> np.ndarray:
        """Nodes too close to the horizon for the diagnostics (lapse < 1e-6)."""
        return self.lapse < LAPSE_FLOOR

    def covariant_derivatives(self):
        """(D_w phi, D_v phi) at every node, second-order finite differences."""
        phi = self.phi
        d = self.grid.delta
        dw = np.gradient(phi, d, axis=0, edge_order=2)
        dv = np.gradient(phi, d, axis=1, edge_order=2)
        return dw, dv - 1j * self.A_v * phi

    def gauge_transformed(self, chi: Callable, dchi_w: Callable, dchi_v: Callable) -> "GaugeView":
        """Analytic gauge transform phi -> e^{i chi} phi, A -> A + d chi."""
        W, V = np.meshgrid(self.grid.w, self.grid.v, indexing="ij")
        return GaugeView(self, chi(W, V), dchi_w(W, V), dchi_v(W, V))


@dataclass
class GaugeView:
    """A FieldHistory viewed in another gauge; derivatives transform exactly."""

    base: FieldHistory
    chi: np.ndarray
    dchi_w: np.ndarray
    dchi_v: np.ndarray

    @property
    def grid(self) -> GridSpec:
        return self.base.grid

    @property
    def bg(self) -> BackgroundParams:
        return self.base.bg

    @property
    def phi(self):
        return self.base.phi * np.exp(1j * self.chi)

    @property
    def A_w(self):
        return self.base.A_w + self.dchi_w

    @property
    def A_v(self):
        return self.base.A_v + self.dchi_v

    def covariant_derivatives(self):
        dw, dv = self.base.covariant_derivatives()
        rot = np.exp(1j * self.chi)
        return dw * rot, dv * rot


@dataclass
class Forcing:
    """Manufactured-solution source terms.

    ``psi`` is sampled at cell centres (shape (nw-1, nv-1)); ``Q`` and ``A`` at
    the midpoints of the east-north cell edges (same shape).
    """

    psi: np.ndarray
    Q: np.ndarray
    A: np.ndarray


def _potential_args(potential: PotentialSpec):
    kind = _KIND_CODES[potential.kind]
    coef = {"Mass": potential.c1, "Quartic": potential.c2,
            "SineGordon": potential.c3, "Toda": potential.c4}[potential.kind]
    return kind, float(coef), float(potential.eta), float(potential.lam)


def step_diamond(sw, se, nw, bg: BackgroundParams, potential: PotentialSpec, delta: float,
                 r_center: float, r_east: float, n_iter: int = 2):
    """One diamond update: corners are (psi, Q, A_v) triples, returns the NE triple.

    ``sw`` is (w, v), ``se`` is (w, v + delta), ``nw`` is (w + delta, v);
    ``r_center`` is the radius at the cell centre (equal to that of sw and ne)
    and ``r_east`` the radius at se.
    """
    om_c = 1.0 - 2.0 * bg.m / r_center
    om_e = 1.0 - 2.0 * bg.m / r_east
    kind, c, eta, lam = _potential_args(potential)
    out = _kernels.nonlinear_cell(
        complex(sw[0]), complex(se[0]), complex(nw[0]),
        float(sw[1]), float(se[1]), float(nw[1]),
        float(sw[2]), float(se[2]), float(nw[2]),
        r_center, om_c, r_east, om_e, bg.m, delta, kind, c, eta, lam,
        0j, 0.0, 0.0, n_iter)
    if not all(np.isfinite(np.asarray([out[0].real, out[0].imag, out[1], out[2]]))):
        raise EvolutionError("non-finite diamond update")
    return out


def evolve(grid: GridSpec, data: InitialData, bg: BackgroundParams,
           potential: PotentialSpec | None = None, *, n_iter: int = 2,
           forcing: Forcing | None = None, first_order: bool = False,
           rays: InitialRays | None = None) -> FieldHistory:
    """Sweep the diamond update over the whole rectangle."""
    potential = potential or PotentialSpec.massless()
    table = RadiusTable.build(grid, bg)
    rays = rays or initialize(grid, data, bg, potential, table)
    psi = np.zeros((grid.nw, grid.nv), dtype=complex)
    Q = np.zeros((grid.nw, grid.nv))
    A = np.zeros((grid.nw, grid.nv))
    psi[0, :], psi[:, 0] = rays.psi_row, rays.psi_col
    Q[0, :], Q[:, 0] = rays.Q_row, rays.Q_col
    A[0, :], A[:, 0] = rays.A_row, rays.A_col
    if forcing is None:
        fpsi = np.zeros((0, 0), dtype=complex)
        fq = fa = np.zeros((0, 0))
    else:
        fpsi = np.ascontiguousarray(forcing.psi, dtype=complex)
        fq = np.ascontiguousarray(forcing.Q, dtype=float)
        fa = np.ascontiguousarray(forcing.A, dtype=float)
    kind, c, eta, lam = _potential_args(potential)
    bad = _kernels.sweep_nonlinear(psi, Q, A, table.r, table.lapse, table.s_min, bg.m,
                                   grid.delta, kind, c, eta, lam, fpsi, fq, fa,
                                   n_iter, first_order)
    if bad[0] >= 0:
        raise EvolutionError(f"non-finite value produced in cell {tuple(bad)}", tuple(bad))
    hist = FieldHistory(grid, bg, potential, psi, Q, A, table)
    hist.meta["excluded_nodes"] = int(np.count_nonzero(hist.excluded))
    hist.meta["toda_flags"] = int(np.count_nonzero(toda_flags(potential, hist.phi)))
    return hist


@dataclass
class DiagonalTraces:
    """Nonlinear fields recorded along diagonals j - i = const of a streamed run.

    ``psi[d]``, ``Q[d]`` and ``A_v[d]`` are indexed by the row i; entries whose
    node lies outside the grid are NaN.
    """

    grid: GridSpec
    bg: BackgroundParams
    potential: PotentialSpec
    table: RadiusTable
    psi: dict
    Q: dict
    A_v: dict
    meta: dict = field(default_factory=dict)

    def rstar(self, offset: int) -> float:
        return self.grid.rstar_base + 0.5 * offset * self.grid.delta

    def radius(self, offset: int) -> float:
        return float(self.table.r[2 * offset - self.table.s_min])

    def lapse(self, offset: int) -> float:
        return float(self.table.lapse[2 * offset - self.table.s_min])


def evolve_traced(grid: GridSpec, data: InitialData, bg: BackgroundParams,
                  potential: PotentialSpec | None = None, *, diagonals: Sequence[int],
                  n_iter: int = 2) -> DiagonalTraces:
    """Streamed nonlinear evolution that keeps only the requested diagonals."""
    potential = potential or PotentialSpec.massless()
    table = RadiusTable.build(grid, bg)
    rays = initialize(grid, data, bg, potential, table)
    offsets = np.asarray(sorted(set(int(d) for d in diagonals)), dtype=np.int64)
    shape = (len(offsets), grid.nw)
    tp = np.full(shape, np.nan + 0j)
    tq = np.full(shape, np.nan)
    ta = np.full(shape, np.nan)
    kind, c, eta, lam = _potential_args(potential)
    bad = _kernels.sweep_nonlinear_stream(
        rays.psi_row, rays.Q_row, rays.A_row, rays.psi_col, rays.Q_col, rays.A_col,
        table.r, table.lapse, table.s_min, bg.m, grid.delta, kind, c, eta, lam, n_iter,
        offsets, tp, tq, ta)
    if bad[0] >= 0:
        raise EvolutionError(f"non-finite value produced in cell {tuple(bad)}", tuple(bad))
    keys = [int(d) for d in offsets]
    return DiagonalTraces(grid, bg, potential, table,
                          {d: tp[n] for n, d in enumerate(keys)},
                          {d: tq[n] for n, d in enumerate(keys)},
                          {d: ta[n] for n, d in enumerate(keys)})


def gauss_residual(history: FieldHistory):
    """Violation of d_v Q = -r^2 j_v on every v-edge of the grid.

    Returns (max residual, per-row max residual array). The residual is
    evaluated with the same midpoint rule the initial-ray integration uses.
    """
    psi, Q, A = history.psi, history.Q, history.A_v
    d = history.grid.delta
    psi_m = 0.5 * (psi[:, 1:] + psi[:, :-1])
    A_m = 0.5 * (A[:, 1:] + A[:, :-1])
    dv_psi = (psi[:, 1:] - psi[:, :-1]) / d
    r2jv = 2.0 * np.imag(np.conj(psi_m) * (dv_psi - 1j * A_m * psi_m))
    res = np.abs((Q[:, 1:] - Q[:, :-1]) / d + r2jv)
    per_row = res.max(axis=1)
    return float(per_row.max()), per_row


def covariant_residual(history, interior: int = 2) -> dict:
    """Residuals of the field equations evaluated directly in (w, v) components.

    The evaluator does not reuse any reduced equation: it works from
    phi = psi / r and the gauge potential (A_w, A_v), forms F_vw by
    differencing A, and evaluates

        scalar:  -[D_w(r^2 D_v phi) + D_v(r^2 D_w phi)] - (Omega r^2/2) dP/dconj(phi)
        Maxwell: d_w(2 r^2 F_vw / Omega) + s r^2 j_w,
                 d_v(2 r^2 F_vw / Omega) - s r^2 j_v,

    i.e. the covariant equations multiplied by Omega r^2 / 2, with s the
    Maxwell coupling sign. Values within ``interior`` nodes of the grid edge
    are dropped (one-sided stencils).
    """
    base = history.base if isinstance(history, GaugeView) else history
    d = base.grid.delta
    r, om = base.r, base.lapse
    phi, A_w, A_v = history.phi, history.A_w, history.A_v

    def dw(f):
        return np.gradient(f, d, axis=0, edge_order=2)

    def dv(f):
        return np.gradient(f, d, axis=1, edge_order=2)

    Dw = dw(phi) - 1j * A_w * phi
    Dv = dv(phi) - 1j * A_v * phi
    X = r**2 * Dv
    Y = r**2 * Dw
    box = -((dw(X) - 1j * A_w * X) + (dv(Y) - 1j * A_v * Y))
    scalar = box - 0.5 * om * r**2 * potential_derivative(base.potential, phi)
    F = field_strength(A_w, A_v, d)
    E = 2.0 * r**2 * F / om
    mw = dw(E) + MAXWELL_SIGN * r**2 * current_density(phi, Dw)
    mv = dv(E) - MAXWELL_SIGN * r**2 * current_density(phi, Dv)
    sl = (slice(interior, -interior or None), slice(interior, -interior or None))
    keep = ~base.excluded[sl]
    out = {}
    for name, arr in (("scalar", scalar), ("maxwell_w", mw), ("maxwell_v", mv)):
        vals = np.abs(arr[sl])[keep]
        out[name] = float(vals.max()) if vals.size else 0.0
    out["max"] = max(out.values())
    return out


# --------------------------------------------------------------------------
# mode sector


@dataclass(frozen=True)
class ModeSpec:
    s: int = 0
    ell: int = 0
    potential: Optional[PotentialSpec] = None

    def __post_init__(self):
        if self.s not in (0, 1):
            raise ValueError("spin must be 0 or 1")
        if self.ell < self.s:
            raise ValueError(f"multipole l={self.ell} must be >= spin s={self.s}")
        if self.s == 1 and self.potential is not None:
            raise ValueError("the s = 1 mode carries no scalar potential")

    def mass_term(self) -> float:
        return 0.0 if self.potential is None else self.potential.linear_mass()

    def potential_at(self, bg: BackgroundParams, r):
        """V_{s,l}(r) = l(l+1)/r^2 + (1 - s^2) 2m/r^3 (mass term excluded)."""
        r = np.asarray(r, dtype=float)
        return (self.ell * (self.ell + 1) / r**2 + (1 - self.s**2) * 2.0 * bg.m / r**3)[()]


@dataclass
class ModeHistory:
    mode: ModeSpec
    grid: GridSpec
    bg: BackgroundParams
    table: RadiusTable
    psi: Optional[np.ndarray]
    traces: dict
    meta: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.table.nodes(self.grid)[0]

    @property
    def lapse(self):
        return self.table.nodes(self.grid)[1]


def evolve_mode(mode: ModeSpec, grid: GridSpec, data: InitialData, bg: BackgroundParams, *,
                store_full: bool = True, diagonals: Sequence[int] = (),
                first_order: bool = False, rays: tuple | None = None) -> ModeHistory:
    """Evolve one multipole. ``diagonals`` lists offsets j - i to trace.

    ``rays`` = (row, col) overrides the profile with explicit real initial rays.
    """
    table = RadiusTable.build(grid, bg)
    w, v = grid.w, grid.v
    row = np.zeros(grid.nv)
    col = np.zeros(grid.nw)
    if rays is not None:
        row = np.asarray(rays[0], dtype=float).copy()
        col = np.asarray(rays[1], dtype=float).copy()
        if row[0] != col[0]:
            raise ValueError("mode rays disagree at the corner")
    elif data.ray == "outgoing":
        vals = data.shape(v)
        _check_support(data, v, vals)
        row = np.real(vals).astype(float)
    else:
        vals = data.shape(w)
        _check_support(data, w, vals)
        col = np.real(vals).astype(float)
    if rays is None:
        if data.ray == "outgoing":
            col[0] = row[0]
        else:
            row[0] = col[0]
    offsets = np.asarray(list(diagonals), dtype=np.int64)
    traces = np.full((len(offsets), grid.nw), np.nan)
    full = np.zeros((grid.nw, grid.nv) if store_full else (1, 1))
    ell_term = float(mode.ell * (mode.ell + 1))
    curv = float((1 - mode.s**2) * 2.0 * bg.m)
    bad = _kernels.sweep_mode(row, col, table.r, table.lapse, table.s_min, grid.delta,
                              ell_term, curv, float(mode.mass_term()), full, store_full,
                              offsets, traces, first_order)
    if bad[0] >= 0:
        raise EvolutionError(f"non-finite value produced in cell {tuple(bad)}", tuple(bad))
    return ModeHistory(mode, grid, bg, table, full if store_full else None,
                       {int(k): traces[n] for n, k in enumerate(offsets)})


# --------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form (psi, Q, A_v) with analytic first and mixed derivatives.

    psi = a exp(-((w - wc)^2 + (v - vc)^2)/s^2) exp(i k (v + w/2))
    Q   = q0 + q1 sin(w / L) cos(v / L)
    A_v = b cos(w / L) sin(v / L)
    """

    a: float = 0.3
    wc: float = 2.0
    vc: float = 3.0
    s: float = 2.0
    k: float = 0.7
    q0: float = 0.2
    q1: float = 0.3
    b: float = 0.25
    L: float = 2.5

    def psi(self, w, v):
        env = np.exp(-((w - self.wc) ** 2 + (v - self.vc) ** 2) / self.s**2)
        return self.a * env * np.exp(1j * self.k * (v + 0.5 * w))

    def psi_w(self, w, v):
        return self.psi(w, v) * (-2.0 * (w - self.wc) / self.s**2 + 0.5j * self.k)

    def psi_v(self, w, v):
        return self.psi(w, v) * (-2.0 * (v - self.vc) / self.s**2 + 1j * self.k)

    def psi_wv(self, w, v):
        gw = -2.0 * (w - self.wc) / self.s**2 + 0.5j * self.k
        gv = -2.0 * (v - self.vc) / self.s**2 + 1j * self.k
        return self.psi(w, v) * gw * gv

    def Q(self, w, v):
        return self.q0 + self.q1 * np.sin(w / self.L) * np.cos(v / self.L)

    def Q_w(self, w, v):
        return self.q1 * np.cos(w / self.L) * np.cos(v / self.L) / self.L

    def A(self, w, v):
        return self.b * np.cos(w / self.L) * np.sin(v / self.L)

    def A_w(self, w, v):
        return -self.b * np.sin(w / self.L) * np.sin(v / self.L) / self.L

    def rays(self, grid: GridSpec) -> InitialRays:
        w, v = grid.w, grid.v
        return InitialRays(self.psi(grid.w0, v), self.psi(w, grid.v0),
                           self.Q(grid.w0, v), self.Q(w, grid.v0),
                           self.A(grid.w0, v), self.A(w, grid.v0))

    def forcing(self, grid: GridSpec, bg: BackgroundParams, potential: PotentialSpec) -> Forcing:
        d = grid.delta
        wc = (grid.w[:-1] + 0.5 * d)[:, None]
        vc = (grid.v[:-1] + 0.5 * d)[None, :]
        rstar_c = 0.5 * (vc - wc)
        r = radius_from_tortoise(bg, rstar_c)
        om = lapse_from_tortoise(bg, rstar_c)
        p = self.psi(wc, vc)
        F = om * self.Q(wc, vc) / (2.0 * r**2)
        rhs = (1j * self.A(wc, vc) * self.psi_w(wc, vc) - 0.5j * F * p
               - bg.m * om * p / (2.0 * r**3)
               - 0.25 * r * om * potential_derivative(potential, p / r))
        f_psi = self.psi_wv(wc, vc) - rhs
        # Q and A equations sampled on the east-north edge midpoint (w + d/2, v + d)
        we = wc
        ve = vc + 0.5 * d
        rstar_e = 0.5 * (ve - we)
        r_e = radius_from_tortoise(bg, rstar_e)
        om_e = lapse_from_tortoise(bg, rstar_e)
        pe = self.psi(we, ve)
        f_q = self.Q_w(we, ve) - 2.0 * np.imag(np.conj(pe) * self.psi_w(we, ve))
        f_a = self.A_w(we, ve) + om_e * self.Q(we, ve) / (2.0 * r_e**2)
        return Forcing(f_psi, f_q, f_a)

    def max_error(self, history: FieldHistory) -> float:
        W, V = np.meshgrid(history.grid.w, history.grid.v, indexing="ij")
        return float(np.max(np.abs(history.psi - self.psi(W, V))))


def observed_order(errors: Sequence[float], ratio: float = 2.0) -> float:
    """Least-squares slope of log(error) against log(1/delta)."""
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        return math.nan
    x = -np.arange(len(e)) * math.log(ratio)
    slope = np.polyfit(x, np.log(e), 1)[0]
    return float(slope)
