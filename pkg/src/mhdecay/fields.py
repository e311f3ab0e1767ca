"""
Matter content: complex scalar, U(1) gauge potential, covariant derivative,
charge current and the four admissible self-interaction potentials.

Sign conventions (fixed here and nowhere else)
----------------------------------------------
D_mu phi = d_mu phi - i A_mu phi and F_vw = d_v A_w - d_w A_v.

``current_density`` returns j = -i (D phi conj(phi) - phi conj(D phi))
= 2 Im(conj(phi) D phi). The Maxwell equation consistent with the action and
with a conserved stress-energy tensor is

    div^alpha F_{alpha gamma} = -j_gamma.

In spherical symmetry write F_vw = (1 - mu) Q / (2 r^2). The two null
components of the Maxwell equation then read

    d_v Q = -r^2 j_v,      d_w Q = +r^2 j_w,

so a positive charge function Q always means positive F_vw r^2 / (1 - mu).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

POTENTIAL_KINDS = ("Mass", "Quartic", "SineGordon", "Toda")
TODA_FLAG_RADIUS = 1e-12

# j enters the Maxwell equation as  div F = MAXWELL_SIGN * j
MAXWELL_SIGN = -1.0


@dataclass(frozen=True)
class PotentialSpec:
    """P(|phi|) from the admissible family.

    Mass: c1 |phi|^2. Quartic: c2 |phi|^4. SineGordon: c3 (1 - cos(eta |phi|)).
    Toda: c4 exp(-lam |phi|).
    """

    kind: str = "Mass"
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    eta: float = 1.0
    c4: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"potential kind must be one of {POTENTIAL_KINDS}, got {self.kind!r}")
        for name in ("c1", "c2", "c3", "c4"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise ValueError(f"potential coefficient {name} must be >= 0, got {val}")
        if self.kind == "Toda" and not self.lam > 0:
            raise ValueError(f"Toda requires lam > 0, got {self.lam}")

    @classmethod
    def massless(cls) -> "PotentialSpec":
        return cls("Mass", c1=0.0)

    @property
    def vanishes_at_origin(self) -> bool:
        return self.kind != "Toda" or self.c4 == 0.0

    def linear_mass(self) -> float:
        """Coefficient k with d P / d conj(phi) ~ k phi near phi = 0."""
        if self.kind == "Mass":
            return self.c1
        if self.kind == "Quartic":
            return 0.0
        if self.kind == "SineGordon":
            return 0.5 * self.c3 * self.eta**2
        raise ValueError("Toda has no linearization at phi = 0")


def potential_value(spec: PotentialSpec, phi):
    a = np.abs(phi)
    if spec.kind == "Mass":
        return spec.c1 * a**2
    if spec.kind == "Quartic":
        return spec.c2 * a**4
    if spec.kind == "SineGordon":
        return spec.c3 * (1.0 - np.cos(spec.eta * a))
    return spec.c4 * np.exp(-spec.lam * a)


def potential_derivative(spec: PotentialSpec, phi):
    """dP/d conj(phi) = P'(|phi|) phi / (2 |phi|), taken as 0 at phi = 0."""
    phi = np.asarray(phi, dtype=complex)
    if spec.kind == "Mass":
        return (spec.c1 * phi)[()]
    if spec.kind == "Quartic":
        return (2.0 * spec.c2 * np.abs(phi) ** 2 * phi)[()]
    a = np.abs(phi)
    safe = np.where(a > 0, a, 1.0)
    if spec.kind == "SineGordon":
        dP = spec.c3 * spec.eta * np.sin(spec.eta * a)
    else:
        dP = -spec.lam * spec.c4 * np.exp(-spec.lam * a)
    return np.where(a > 0, dP * phi / (2.0 * safe), 0.0)[()]


def toda_flags(spec: PotentialSpec, phi):
    """Mask of evaluations inside the non-smooth Toda neighbourhood of phi = 0."""
    if spec.kind != "Toda":
        return np.zeros(np.shape(phi), dtype=bool)[()]
    return (np.abs(phi) < TODA_FLAG_RADIUS)[()]


def covariant_derivative(d_phi, A, phi):
    return d_phi - 1j * A * phi


def current_density(phi, D_phi):
    """-i (D phi conj(phi) - phi conj(D phi)), returned as a real array."""
    return 2.0 * np.imag(np.conj(phi) * D_phi)


def field_strength(A_w, A_v, delta: float):
    """F_vw = d_v A_w - d_w A_v on a (w, v) grid with axis 0 = w, axis 1 = v."""
    A_w = np.asarray(A_w, dtype=float)
    A_v = np.asarray(A_v, dtype=float)
    if A_w.ndim != 2 or A_w.shape != A_v.shape:
        raise ValueError("gauge components must be 2-D arrays of equal shape")
    if min(A_w.shape) < 2:
        raise ValueError("field_strength needs at least a 2x2 null cell")

    def deriv(arr, axis):
        order = 2 if arr.shape[axis] >= 3 else 1
        return np.gradient(arr, delta, axis=axis, edge_order=order)

    return deriv(A_w, 1) - deriv(A_v, 0)


@dataclass(frozen=True)
class FieldSample:
    """Pointwise field values in the null frame."""

    phi: complex = 0.0
    A_w: float = 0.0
    A_v: float = 0.0
    F_vw: float = 0.0
    Dw_phi: complex = 0.0
    Dv_phi: complex = 0.0

    def gauge_transform(self, chi: float, dchi_w: float, dchi_v: float) -> "FieldSample":
        rot = np.exp(1j * chi)
        return replace(
            self,
            phi=self.phi * rot,
            A_w=self.A_w + dchi_w,
            A_v=self.A_v + dchi_v,
            Dw_phi=self.Dw_phi * rot,
            Dv_phi=self.Dv_phi * rot,
        )

    def invariants(self, spec: PotentialSpec | None = None) -> dict:
        out = {
            "abs_phi": abs(self.phi),
            "abs_Dw_phi": abs(self.Dw_phi),
            "abs_Dv_phi": abs(self.Dv_phi),
            "F_vw": self.F_vw,
            "current_w": float(current_density(self.phi, self.Dw_phi)),
            "current_v": float(current_density(self.phi, self.Dv_phi)),
        }
        if spec is not None:
            out["potential"] = float(potential_value(spec, self.phi))
        return out
