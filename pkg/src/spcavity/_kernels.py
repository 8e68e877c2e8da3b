"""Compiled inner loops for the field solver.

Kept in their own module so numba can cache the compiled code against a
stable file.  Every kernel mutates its first argument in place and assumes
C-contiguous float64 arrays.  Field layout (x index first):

    ex  (nx, nz+1)   at (i+1/2, k)
    ez  (nx+1, nz)   at (i, k+1/2)
    hy  (nx, nz)     at (i+1/2, k+1/2)

Boundary-layer corrections use the convolutional recursion
psi <- b*psi + a*du on strips of width npml, where du is the raw field
difference (not divided by dx) and the coefficient arrays carry the graded
absorber profile.
"""

from __future__ import annotations

import numba


@numba.njit(cache=True, fastmath=True)
def h_update(hy, ex, ez, ch):
    nx, nz = hy.shape
    for i in range(nx):
        for k in range(nz):
            hy[i, k] += ch * ((ez[i + 1, k] - ez[i, k]) - (ex[i, k + 1] - ex[i, k]))


@numba.njit(cache=True, fastmath=True)
def h_pml_x(hy, ez, psi_lo, psi_hi, b_lo, a_lo, b_hi, a_hi, ch):
    npml, nz = psi_lo.shape
    nx = hy.shape[0]
    for s in range(npml):
        ihi = nx - npml + s
        for k in range(nz):
            du = ez[s + 1, k] - ez[s, k]
            psi_lo[s, k] = b_lo[s, k] * psi_lo[s, k] + a_lo[s, k] * du
            hy[s, k] += ch * psi_lo[s, k]
            du = ez[ihi + 1, k] - ez[ihi, k]
            psi_hi[s, k] = b_hi[s, k] * psi_hi[s, k] + a_hi[s, k] * du
            hy[ihi, k] += ch * psi_hi[s, k]


@numba.njit(cache=True, fastmath=True)
def h_pml_z(hy, ex, psi_lo, psi_hi, b_lo, a_lo, b_hi, a_hi, ch):
    nx, npml = psi_lo.shape
    nz = hy.shape[1]
    for i in range(nx):
        for s in range(npml):
            khi = nz - npml + s
            du = ex[i, s + 1] - ex[i, s]
            psi_lo[i, s] = b_lo[i, s] * psi_lo[i, s] + a_lo[i, s] * du
            hy[i, s] -= ch * psi_lo[i, s]
            du = ex[i, khi + 1] - ex[i, khi]
            psi_hi[i, s] = b_hi[i, s] * psi_hi[i, s] + a_hi[i, s] * du
            hy[i, khi] -= ch * psi_hi[i, s]


@numba.njit(cache=True, fastmath=True)
def j_update(vals, idx_i, idx_k, e, alpha, beta):
    for n in range(vals.size):
        vals[n] = alpha * vals[n] + beta * e[idx_i[n], idx_k[n]]


@numba.njit(cache=True, fastmath=True)
def ex_update(ex, hy, cex):
    nx, nzp = ex.shape
    for i in range(nx):
        for k in range(1, nzp - 1):
            ex[i, k] -= cex[i, k] * (hy[i, k] - hy[i, k - 1])


@numba.njit(cache=True, fastmath=True)
def ex_pml_z(ex, hy, psi_lo, psi_hi, b_lo, a_lo, b_hi, a_hi, cex):
    nx, npml = psi_lo.shape
    nz = hy.shape[1]
    for i in range(nx):
        for s in range(1, npml):
            du = hy[i, s] - hy[i, s - 1]
            psi_lo[i, s] = b_lo[i, s] * psi_lo[i, s] + a_lo[i, s] * du
            ex[i, s] -= cex[i, s] * psi_lo[i, s]
        for s in range(npml):
            k = nz - npml + s
            du = hy[i, k] - hy[i, k - 1]
            psi_hi[i, s] = b_hi[i, s] * psi_hi[i, s] + a_hi[i, s] * du
            ex[i, k] -= cex[i, k] * psi_hi[i, s]


@numba.njit(cache=True, fastmath=True)
def ez_update(ez, hy, cez):
    nxp, nz = ez.shape
    for i in range(1, nxp - 1):
        for k in range(nz):
            ez[i, k] += cez[i, k] * (hy[i, k] - hy[i - 1, k])


@numba.njit(cache=True, fastmath=True)
def ez_pml_x(ez, hy, psi_lo, psi_hi, b_lo, a_lo, b_hi, a_hi, cez):
    npml, nz = psi_lo.shape
    nx = hy.shape[0]
    for s in range(1, npml):
        for k in range(nz):
            du = hy[s, k] - hy[s - 1, k]
            psi_lo[s, k] = b_lo[s, k] * psi_lo[s, k] + a_lo[s, k] * du
            ez[s, k] += cez[s, k] * psi_lo[s, k]
    for s in range(npml):
        i = nx - npml + s
        for k in range(nz):
            du = hy[i, k] - hy[i - 1, k]
            psi_hi[s, k] = b_hi[s, k] * psi_hi[s, k] + a_hi[s, k] * du
            ez[i, k] += cez[i, k] * psi_hi[s, k]


@numba.njit(cache=True, fastmath=True)
def subtract_current(e, vals, idx_i, idx_k, cj):
    for n in range(vals.size):
        e[idx_i[n], idx_k[n]] -= cj[n] * vals[n]
