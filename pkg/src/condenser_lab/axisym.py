"""Newtonian kernels for axisymmetric ring panels in R^3.

A ring atom stands for a conical panel of a surface of revolution carrying
a uniform area density.  Interactions use the exact ring potential

    (2/pi) K(m) / sqrt((a + r)^2 + dz^2),   m = 4 a r / ((a + r)^2 + dz^2),

with Gauss sub-quadrature over the source panel for nearby pairs and a
singularity-split adaptive quadrature for the self term.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

#: pairs closer than this multiple of the larger panel length use sub-quadrature
NEAR_FACTOR = 2.5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def ring_kernel(a, r, dz) -> np.ndarray:
    """Potential at radius ``r`` of a uniform unit ring of radius ``a``.

    ``dz`` is the axial offset.  The expression is symmetric in ``(a, r)``.
    """
    a = np.asarray(a, dtype=float)
    r = np.asarray(r, dtype=float)
    dz = np.asarray(dz, dtype=float)
    s2 = (a + r) ** 2 + dz * dz
    d2 = (a - r) ** 2 + dz * dz
    with np.errstate(divide="ignore", invalid="ignore"):
        # complementary parameter 1 - m computed directly for accuracy near the ring
        p = np.where(s2 > 0, d2 / s2, 1.0)
        out = (2.0 / math.pi) * special.ellipkm1(p) / np.sqrt(s2)
    return out


def panel_self_potential(log_a, length, tilt) -> np.ndarray:
    """Mean potential at a panel's midpoint from its own uniform unit charge.

    Thin cylindrical bands (radius below ``1e-4`` of the length) use the
    slender asymptotics ``(2/l) ln(l/a)``; everything else is integrated
    along the meridian segment with the log singularity split at the midpoint.
    """
    log_a = np.atleast_1d(np.asarray(log_a, dtype=float))
    length = np.atleast_1d(np.asarray(length, dtype=float))
    tilt = np.broadcast_to(np.asarray(tilt, dtype=float), log_a.shape)
    out = 2.0 / length * (np.log(length) - log_a)
    thin = (log_a - np.log(length) < math.log(1e-4)) & (np.abs(np.sin(tilt)) < 1e-3)
    for i in np.nonzero(~thin)[0]:
        out[i] = _panel_self_quad(math.exp(log_a[i]), length[i], tilt[i])
    return out


def _panel_self_quad(a0: float, ell: float, tilt: float) -> float:
    ct, st = math.cos(tilt), math.sin(tilt)

    def f(s):
        a = a0 + s * st
        if a <= 0.0:
            return 0.0
        return a * float(ring_kernel(a, a0, s * ct))

    h = 0.5 * ell
    left = integrate.quad(f, -h, 0.0, limit=200, epsrel=1e-10)[0]
    right = integrate.quad(f, 0.0, h, limit=200, epsrel=1e-10)[0]
    return (left + right) / (a0 * ell)


def panel_average(t_src, a_src, len_src, tilt_src, t_obs, r_obs) -> np.ndarray:
    """Potential at ``(t_obs, r_obs)`` of uniform unit-charge source panels.

    All arguments broadcast; 16-point Gauss-Legendre along the source panel
    with area weights ``a(s) ds``.
    """
    t_src, a_src, len_src, tilt_src, t_obs, r_obs = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (t_src, a_src, len_src, tilt_src, t_obs, r_obs))
    )
    s = 0.5 * len_src[..., None] * _GL_X
    a = np.maximum(a_src[..., None] + s * np.sin(tilt_src)[..., None], 0.0)
    t = t_src[..., None] + s * np.cos(tilt_src)[..., None]
    k = ring_kernel(a, r_obs[..., None], t_obs[..., None] - t)
    wa = _GL_W * a
    den = wa.sum(axis=-1)
    num = (wa * k).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = np.where(den > 0, num / den, (_GL_W * k).sum(axis=-1) / 2.0)
    return avg


def ring_block(rows, cols, K: np.ndarray, symmetric: bool) -> None:
    """Overwrite entries of ``K`` that involve ring atoms (in place).

    ``rows``/``cols`` are :class:`~condenser_lab.clouds.PointCloud` objects.
    Far pairs use the centre-to-centre ring kernel, near pairs the panel
    average over the column panel; a symmetric block is symmetrised.
    """
    rr, rc = rows.ring_mask, cols.ring_mask
    if not (rr.any() or rc.any()):
        return
    axis = rows.axis if rr.any() else cols.axis
    tr, ar = rows.axial_coordinates(*axis)
    tc, ac = cols.axial_coordinates(*axis)
    Lr = np.where(rr, rows.ring_length if rows.log_ring_radius is not None else 0.0, 0.0)
    Lc = np.where(rc, cols.ring_length if cols.log_ring_radius is not None else 0.0, 0.0)
    involved = rr[:, None] | rc[None, :]
    ii, jj = np.nonzero(involved)
    vals = ring_kernel(ar[ii], ac[jj], tr[ii] - tc[jj])
    # near pairs: sub-quadrature over the ring panel(s)
    dist = np.hypot(tr[ii] - tc[jj], ar[ii] - ac[jj])
    scale = np.maximum(Lr[ii], Lc[jj])
    near = (dist < NEAR_FACTOR * scale) & (dist > 0)
    if near.any():
        ni, nj = ii[near], jj[near]
        v = vals[near].copy()
        src = rc[nj]
        if src.any():
            tilt_c = cols.ring_tilt[nj[src]]
            v[src] = panel_average(tc[nj[src]], ac[nj[src]], Lc[nj[src]], tilt_c, tr[ni[src]], ar[ni[src]])
        obs = ~src
        if obs.any():
            tilt_r = rows.ring_tilt[ni[obs]]
            v[obs] = panel_average(tr[ni[obs]], ar[ni[obs]], Lr[ni[obs]], tilt_r, tc[nj[obs]], ac[nj[obs]])
        vals[near] = v
    K[ii, jj] = vals
    if symmetric:
        K[:] = 0.5 * (K + K.T)
