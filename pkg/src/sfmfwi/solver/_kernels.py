"""Numba kernels for the 8th-order / 2nd-order acoustic scheme with C-PML.

All wavefield arrays carry a zero halo of ``H`` cells on every side so the
stencils never branch on the domain edge. Coefficient arrays (``A``, PML
profiles) and the stored operator output ``W`` have no halo.

One forward step, with ``ψ``/``ζ`` the C-PML memory variables of each axis::

    ψx  <- bx ψx + ax ∂x u
    Tx   = ∂xx u + ∂x ψx
    ζx  <- bx ζx + ax Tx
    W    = Tx + ζx + Tz + ζz
    u+   = 2u - u- + A W            (A = dt² c²)

``_adjoint_step`` is the line-by-line transpose of that update.
"""
import numpy as np
from numba import njit

H = 4
C2 = np.array([-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0])
C1 = np.array([4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0])


@njit(cache=True, nogil=True)
def _forward_step(u_prev, u_cur, psx, psz, zex, zez, ax, bx, az, bz, A, W, w, idx, idz):
    """Advance one step; ``u_prev`` is overwritten with the new time level."""
    nz, nx = A.shape
    idx2 = idx * idx
    idz2 = idz * idz
    for z in range(nz):
        zz = z + H
        zpml = z < w or z >= nz - w
        for x in range(nx):
            xx = x + H
            if x < w or x >= nx - w:
                d = 0.0
                for k in range(1, 5):
                    d += C1[k - 1] * (u_cur[zz, xx + k] - u_cur[zz, xx - k])
                psx[zz, xx] = bx[x] * psx[zz, xx] + ax[x] * d * idx
            if zpml:
                d = 0.0
                for k in range(1, 5):
                    d += C1[k - 1] * (u_cur[zz + k, xx] - u_cur[zz - k, xx])
                psz[zz, xx] = bz[z] * psz[zz, xx] + az[z] * d * idz
    for z in range(nz):
        zz = z + H
        zband = z < w + H or z >= nz - w - H
        zpml = z < w or z >= nz - w
        for x in range(nx):
            xx = x + H
            c = u_cur[zz, xx]
            d2x = C2[0] * c
            d2z = C2[0] * c
            for k in range(1, 5):
                d2x += C2[k] * (u_cur[zz, xx + k] + u_cur[zz, xx - k])
                d2z += C2[k] * (u_cur[zz + k, xx] + u_cur[zz - k, xx])
            tx = d2x * idx2
            tz = d2z * idz2
            if x < w + H or x >= nx - w - H:
                d = 0.0
                for k in range(1, 5):
                    d += C1[k - 1] * (psx[zz, xx + k] - psx[zz, xx - k])
                tx += d * idx
            if zband:
                d = 0.0
                for k in range(1, 5):
                    d += C1[k - 1] * (psz[zz + k, xx] - psz[zz - k, xx])
                tz += d * idz
            ws = tx + tz
            if x < w or x >= nx - w:
                zex[zz, xx] = bx[x] * zex[zz, xx] + ax[x] * tx
                ws += zex[zz, xx]
            if zpml:
                zez[zz, xx] = bz[z] * zez[zz, xx] + az[z] * tz
                ws += zez[zz, xx]
            W[z, x] = ws
            u_prev[zz, xx] = 2.0 * c - u_prev[zz, xx] + A[z, x] * ws


@njit(cache=True, nogil=True)
def _adjoint_step(lam_next, lam_cur, pbx, pbz, zbx, zbz, ax, bx, az, bz, A, W, gA,
                  tbx, tbz, gx, gz, w, idx, idz):
    """Transpose of one forward step.

    On entry ``lam_next`` holds the adjoint of u^{n+1} and ``lam_cur`` the partial
    adjoint of u^n. On exit ``lam_cur`` holds the full adjoint of u^n and
    ``lam_next`` the partial adjoint of u^{n-1}. ``pb*``/``zb*`` carry the memory
    variable adjoints backwards; ``gA`` accumulates ``sum_n W^n * lam^{n+1}``.
    ``tbx``, ``tbz``, ``gx``, ``gz`` are halo-padded scratch arrays.
    """
    nz, nx = A.shape
    idx2 = idx * idx
    idz2 = idz * idz
    for z in range(nz):
        zz = z + H
        zpml = z < w or z >= nz - w
        for x in range(nx):
            xx = x + H
            ln = lam_next[zz, xx]
            gA[z, x] += W[z, x] * ln
            wb = A[z, x] * ln
            t = wb
            if x < w or x >= nx - w:
                zt = zbx[zz, xx] + wb
                t += ax[x] * zt
                zbx[zz, xx] = bx[x] * zt
            tbx[zz, xx] = t
            t = wb
            if zpml:
                zt = zbz[zz, xx] + wb
                t += az[z] * zt
                zbz[zz, xx] = bz[z] * zt
            tbz[zz, xx] = t
    for z in range(nz):
        zz = z + H
        zpml = z < w or z >= nz - w
        for x in range(nx):
            xx = x + H
            if x < w or x >= nx - w:
                d = 0.0
                for k in range(1, 5):
                    d += C1[k - 1] * (tbx[zz, xx + k] - tbx[zz, xx - k])
                pt = pbx[zz, xx] - d * idx
                gx[zz, xx] = ax[x] * pt
                pbx[zz, xx] = bx[x] * pt
            if zpml:
                d = 0.0
                for k in range(1, 5):
                    d += C1[k - 1] * (tbz[zz + k, xx] - tbz[zz - k, xx])
                pt = pbz[zz, xx] - d * idz
                gz[zz, xx] = az[z] * pt
                pbz[zz, xx] = bz[z] * pt
    for z in range(nz):
        zz = z + H
        zband = z < w + H or z >= nz - w - H
        for x in range(nx):
            xx = x + H
            d2x = C2[0] * tbx[zz, xx]
            d2z = C2[0] * tbz[zz, xx]
            for k in range(1, 5):
                d2x += C2[k] * (tbx[zz, xx + k] + tbx[zz, xx - k])
                d2z += C2[k] * (tbz[zz + k, xx] + tbz[zz - k, xx])
            acc = d2x * idx2 + d2z * idz2
            if x < w + H or x >= nx - w - H:
                d = 0.0
                for k in range(1, 5):
                    d += C1[k - 1] * (gx[zz, xx + k] - gx[zz, xx - k])
                acc -= d * idx
            if zband:
                d = 0.0
                for k in range(1, 5):
                    d += C1[k - 1] * (gz[zz + k, xx] - gz[zz - k, xx])
                acc -= d * idz
            ln = lam_next[zz, xx]
            lam_cur[zz, xx] = lam_cur[zz, xx] + 2.0 * ln + acc
            lam_next[zz, xx] = -ln
