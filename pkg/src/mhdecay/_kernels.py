"""Compiled sweep kernels for the null-diamond scheme.

Layout: axis 0 indexes w (rows), axis 1 indexes v (columns). For a cell with
south corner (i, j) the other corners are east (i, j+1), west (i+1, j) and
north (i+1, j+1). Radii are tabulated on quarter-step r* offsets:
``s = 2 (j - i) + k`` addresses r* = rstar_base + s delta / 4 at index
``s - s_min``. Node (i, j) and the centre of the cell it starts both sit at
s = 2 (j - i); the midpoint of the east-north edge sits at s = 2 (j - i) + 1.
"""

from __future__ import annotations

import numba as nb
import numpy as np

KIND_MASS, KIND_QUARTIC, KIND_SINE, KIND_TODA = 0, 1, 2, 3


@nb.njit(cache=True)
def potential_dphibar(kind, c, eta, lam, phi):
    a = abs(phi)
    if kind == KIND_MASS:
        return c * phi
    if kind == KIND_QUARTIC:
        return 2.0 * c * a * a * phi
    if a == 0.0:
        return 0.0 + 0.0j
    if kind == KIND_SINE:
        return c * eta * np.sin(eta * a) * phi / (2.0 * a)
    return -lam * c * np.exp(-lam * a) * phi / (2.0 * a)


@nb.njit(cache=True)
def nonlinear_cell(psiS, psiE, psiW, QS, QE, QW, AS, AE, AW,
                   rc, omc, rE, omE, m, delta,
                   kind, c, eta, lam, fpsi, fq, fa, n_iter):
    """Return (psiN, QN, AN) for one diamond.

    psi = r phi, Q is the charge function and A = A_v in the gauge A_w = 0.
    Equations, with Omega = 1 - 2m/r and F = Omega Q / (2 r^2):

        d_w d_v psi = i A d_w psi - (i/2) F psi - m Omega psi / (2 r^3)
                      - (r Omega / 4) dP/dconj(phi)(psi / r)
        d_w Q = 2 Im(conj(psi) d_w psi),     d_w A = -F.
    """
    FE = omE * QE / (2.0 * rE * rE)
    psiN = psiE + psiW - psiS
    QN = QE
    AN = AE
    for _ in range(n_iter + 1):
        QN = QE + 2.0 * (psiE.real * psiN.imag - psiE.imag * psiN.real) + delta * fq
        FN = omc * QN / (2.0 * rc * rc)
        AN = AE - 0.5 * delta * (FE + FN) + delta * fa
        psic = 0.25 * (psiS + psiE + psiW + psiN)
        Qc = 0.25 * (QS + QE + QW + QN)
        Ac = 0.25 * (AS + AE + AW + AN)
        Fc = omc * Qc / (2.0 * rc * rc)
        dw = (psiW + psiN - psiS - psiE) / (2.0 * delta)
        rhs = (1j * Ac * dw - 0.5j * Fc * psic
               - m * omc * psic / (2.0 * rc * rc * rc)
               - 0.25 * rc * omc * potential_dphibar(kind, c, eta, lam, psic / rc)
               + fpsi)
        psiN = psiE + psiW - psiS + delta * delta * rhs
    QN = QE + 2.0 * (psiE.real * psiN.imag - psiE.imag * psiN.real) + delta * fq
    FN = omc * QN / (2.0 * rc * rc)
    AN = AE - 0.5 * delta * (FE + FN) + delta * fa
    return psiN, QN, AN


@nb.njit(cache=True)
def sweep_nonlinear(psi, Q, A, rq, omq, s_min, m, delta, kind, c, eta, lam,
                    fpsi, fq, fa, n_iter, first_order):
    """Fill rows 1.. and columns 1.. in place from the two initial rays.

    Returns (-1, -1) on success or the (i, j) south corner of the first cell
    that produced a non-finite value. ``first_order`` is a fault-injection
    switch that replaces the centred source by its south-corner value.
    """
    nw, nv = psi.shape
    forced = fpsi.shape[0] > 0
    for i in range(nw - 1):
        for j in range(nv - 1):
            s = 2 * (j - i) - s_min
            fp = fpsi[i, j] if forced else 0.0j
            fqv = fq[i, j] if forced else 0.0
            fav = fa[i, j] if forced else 0.0
            if first_order:
                rc = rq[s]
                omc = omq[s]
                psiS = psi[i, j]
                Fs = omc * Q[i, j] / (2.0 * rc * rc)
                dw = (psi[i + 1, j] - psiS) / delta
                rhs = (1j * A[i, j] * dw - 0.5j * Fs * psiS
                       - m * omc * psiS / (2.0 * rc * rc * rc)
                       - 0.25 * rc * omc * potential_dphibar(kind, c, eta, lam, psiS / rc)
                       + fp)
                pn = psi[i, j + 1] + psi[i + 1, j] - psiS + delta * delta * rhs
                qn = Q[i, j + 1] + 2.0 * (psi[i, j + 1].real * pn.imag - psi[i, j + 1].imag * pn.real) + delta * fqv
                rE = rq[s + 2]
                an = A[i, j + 1] - delta * omq[s + 2] * Q[i, j + 1] / (2.0 * rE * rE) + delta * fav
            else:
                pn, qn, an = nonlinear_cell(
                    psi[i, j], psi[i, j + 1], psi[i + 1, j],
                    Q[i, j], Q[i, j + 1], Q[i + 1, j],
                    A[i, j], A[i, j + 1], A[i + 1, j],
                    rq[s], omq[s], rq[s + 2], omq[s + 2],
                    m, delta, kind, c, eta, lam, fp, fqv, fav, n_iter)
            if not (np.isfinite(pn.real) and np.isfinite(pn.imag) and np.isfinite(qn) and np.isfinite(an)):
                return i, j
            psi[i + 1, j + 1] = pn
            Q[i + 1, j + 1] = qn
            A[i + 1, j + 1] = an
    return -1, -1


@nb.njit(cache=True)
def sweep_mode(row0, col0, rq, omq, s_min, delta, ell_term, curv_term, mass_term,
               full, store_full, diag_offsets, traces, first_order):
    """Linear master equation d_w d_v psi = -(Omega/4) V psi, streamed row by row.

    V = ell_term / r^2 + curv_term / r^3 + mass_term. ``traces[k, i]`` receives
    psi[i, i + diag_offsets[k]] when that node exists (NaN otherwise).
    Returns (-1, -1) or the failing cell.
    """
    nw = col0.shape[0]
    nv = row0.shape[0]
    prev = row0.copy()
    cur = np.empty_like(prev)
    nd = diag_offsets.shape[0]
    for k in range(nd):
        j = diag_offsets[k]
        if 0 <= j < nv:
            traces[k, 0] = prev[j]
    if store_full:
        full[0, :] = prev
    for i in range(nw - 1):
        cur[0] = col0[i + 1]
        for j in range(nv - 1):
            s = 2 * (j - i) - s_min
            rc = rq[s]
            pot = 0.25 * omq[s] * (ell_term / (rc * rc) + curv_term / (rc * rc * rc) + mass_term)
            if first_order:
                src = prev[j]
            else:
                src = 0.5 * (prev[j + 1] + cur[j])
            val = prev[j + 1] + cur[j] - prev[j] - delta * delta * pot * src
            if not np.isfinite(val):
                return i, j
            cur[j + 1] = val
        for k in range(nd):
            j = i + 1 + diag_offsets[k]
            if 0 <= j < nv:
                traces[k, i + 1] = cur[j]
        if store_full:
            full[i + 1, :] = cur
        prev, cur = cur, prev
    return -1, -1


@nb.njit(cache=True)
def sweep_nonlinear_stream(row_psi, row_Q, row_A, col_psi, col_Q, col_A, rq, omq, s_min,
                           m, delta, kind, c, eta, lam, n_iter, diag_offsets,
                           tr_psi, tr_Q, tr_A):
    """Row-by-row nonlinear sweep keeping only two rows in memory.

    ``tr_*[k, i]`` receive the node values at (i, i + diag_offsets[k]).
    """
    nw = col_psi.shape[0]
    nv = row_psi.shape[0]
    p0 = row_psi.copy()
    q0 = row_Q.copy()
    a0 = row_A.copy()
    p1 = np.empty_like(p0)
    q1 = np.empty_like(q0)
    a1 = np.empty_like(a0)
    nd = diag_offsets.shape[0]
    for k in range(nd):
        j = diag_offsets[k]
        if 0 <= j < nv:
            tr_psi[k, 0] = p0[j]
            tr_Q[k, 0] = q0[j]
            tr_A[k, 0] = a0[j]
    for i in range(nw - 1):
        p1[0] = col_psi[i + 1]
        q1[0] = col_Q[i + 1]
        a1[0] = col_A[i + 1]
        for j in range(nv - 1):
            s = 2 * (j - i) - s_min
            pn, qn, an = nonlinear_cell(
                p0[j], p0[j + 1], p1[j], q0[j], q0[j + 1], q1[j], a0[j], a0[j + 1], a1[j],
                rq[s], omq[s], rq[s + 2], omq[s + 2],
                m, delta, kind, c, eta, lam, 0.0j, 0.0, 0.0, n_iter)
            if not (np.isfinite(pn.real) and np.isfinite(pn.imag) and np.isfinite(qn) and np.isfinite(an)):
                return i, j
            p1[j + 1] = pn
            q1[j + 1] = qn
            a1[j + 1] = an
        for k in range(nd):
            j = i + 1 + diag_offsets[k]
            if 0 <= j < nv:
                tr_psi[k, i + 1] = p1[j]
                tr_Q[k, i + 1] = q1[j]
                tr_A[k, i + 1] = a1[j]
        p0, p1 = p1, p0
        q0, q1 = q1, q0
        a0, a1 = a1, a0
    return -1, -1
