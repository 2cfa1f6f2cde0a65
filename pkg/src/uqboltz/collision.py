"""Direct-quadrature Boltzmann collision operators on truncated velocity grids.

All operators share one quadrature: the trapezoidal lattice sum over the
pre-collisional pair (v, v*) times a deviation-angle sphere rule.  Post-
collisional velocities are parameterized relative to the relative-velocity
direction, so for d_v = 2 they are linear in (v, v*) per angle node and the
angular kernel is sampled at fixed cosines.

Two interpolation regimes are used:

* the full bilinear form Q(g, h) works on raw densities; its gain term is
  accumulated in deposit (transpose) form, which makes the discrete mass,
  momentum and energy balances exact to rounding because the cubic deposit
  weights form a partition of unity and reproduce quadratics;
* the weighted operators (linearized L and bilinear G) act through
  h~ = h / sqrt(M), interpolated with 4-point Lagrange stencils chosen per
  axis to minimize the largest node magnitude.  That keeps the 1/sqrt(M)
  column scaling bounded in the Gaussian tails and keeps the stencils exact
  on the quadratic collision invariants.
"""
from __future__ import annotations

import numba
import numpy as np

from .velocity import Field, GridError, MaxwellianRef, SphereRule, VelocityGrid


@numba.njit(cache=True, inline="always")
def _wts4(s, w):
    w[0] = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0
    w[1] = s * (s - 2.0) * (s - 3.0) / 2.0
    w[2] = -s * (s - 1.0) * (s - 3.0) / 2.0
    w[3] = s * (s - 1.0) * (s - 2.0) / 6.0


@numba.njit(cache=True, inline="always")
def _base4_center(fx, N):
    b = int(np.floor(fx)) - 1
    if b < 0:
        b = 0
    elif b > N - 4:
        b = N - 4
    return b


@numba.njit(cache=True, inline="always")
def _base4_inward(fx, axis, N):
    # window minimizing the largest |node coordinate|: tail-safe for 1/sqrt(M)
    i = int(np.floor(fx))
    best = -1
    bestval = 1e300
    for b in range(i - 3, i + 1):
        if b < 0 or b > N - 4:
            continue
        m = max(abs(axis[b]), abs(axis[b + 3]))
        if m < bestval - 1e-12:
            bestval = m
            best = b
    if best < 0:
        best = _base4_center(fx, N)
    return best


@numba.njit(cache=True)
def _collide_2d(g, h, axis, N, L, hgrid, cose, sine, wsig, bvals, gamma, cphi):
    out = np.zeros((N, N))
    vol = hgrid * hgrid
    nsig = wsig.shape[0]
    wx = np.empty(4)
    wy = np.empty(4)
    for i1 in range(N):
        for i2 in range(N):
            v1 = axis[i1]
            v2 = axis[i2]
            gv = g[i1, i2]
            for j1 in range(N):
                for j2 in range(N):
                    hw = h[j1, j2]
                    prod = gv * hw
                    u1 = v1 - axis[j1]
                    u2 = v2 - axis[j2]
                    r2 = u1 * u1 + u2 * u2
                    if r2 == 0.0:
                        continue
                    phik = cphi if gamma == 0.0 else cphi * r2 ** (0.5 * gamma)
                    c1 = 0.5 * (v1 + axis[j1])
                    c2 = 0.5 * (v2 + axis[j2])
                    for a in range(nsig):
                        wgt = wsig[a] * phik * bvals[a] * prod * vol
                        if wgt == 0.0:
                            continue
                        out[i1, i2] -= wgt
                        up1 = 0.5 * (cose[a] * u1 - sine[a] * u2)
                        up2 = 0.5 * (cose[a] * u2 + sine[a] * u1)
                        fx = (c1 + up1 + L) / hgrid
                        fy = (c2 + up2 + L) / hgrid
                        if fx < 0.0 or fx > N - 1.0 or fy < 0.0 or fy > N - 1.0:
                            continue
                        bx = _base4_center(fx, N)
                        by = _base4_center(fy, N)
                        _wts4(fx - bx, wx)
                        _wts4(fy - by, wy)
                        for p in range(4):
                            for q in range(4):
                                out[bx + p, by + q] += wgt * wx[p] * wy[q]
    return out


@numba.njit(cache=True)
def _collide_3d(g, h, axis, N, L, hgrid, eta, seta_cphi, seta_sphi, wsig, bvals,
                gamma, cphi):
    out = np.zeros((N, N, N))
    vol = hgrid ** 3
    nsig = wsig.shape[0]
    wts = np.empty((3, 4))
    for i1 in range(N):
        for i2 in range(N):
            for i3 in range(N):
                v1 = axis[i1]
                v2 = axis[i2]
                v3 = axis[i3]
                gv = g[i1, i2, i3]
                for j1 in range(N):
                    for j2 in range(N):
                        for j3 in range(N):
                            hw = h[j1, j2, j3]
                            prod = gv * hw
                            u1 = v1 - axis[j1]
                            u2 = v2 - axis[j2]
                            u3 = v3 - axis[j3]
                            r2 = u1 * u1 + u2 * u2 + u3 * u3
                            if r2 == 0.0:
                                continue
                            r = np.sqrt(r2)
                            phik = cphi if gamma == 0.0 else cphi * r ** gamma
                            c1 = 0.5 * (v1 + axis[j1])
                            c2 = 0.5 * (v2 + axis[j2])
                            c3 = 0.5 * (v3 + axis[j3])
                            # orthonormal frame (uhat, e1, e2)
                            if abs(u3) < 0.9 * r:
                                e11 = u2
                                e12 = -u1
                                e13 = 0.0
                            else:
                                e11 = 0.0
                                e12 = u3
                                e13 = -u2
                            en = np.sqrt(e11 * e11 + e12 * e12 + e13 * e13)
                            e11 /= en
                            e12 /= en
                            e13 /= en
                            f1 = (u2 * e13 - u3 * e12) / r
                            f2 = (u3 * e11 - u1 * e13) / r
                            f3 = (u1 * e12 - u2 * e11) / r
                            for a in range(nsig):
                                wgt = wsig[a] * phik * bvals[a] * prod * vol
                                if wgt == 0.0:
                                    continue
                                out[i1, i2, i3] -= wgt
                                s1 = eta[a] * u1 + r * (seta_cphi[a] * e11 + seta_sphi[a] * f1)
                                s2 = eta[a] * u2 + r * (seta_cphi[a] * e12 + seta_sphi[a] * f2)
                                s3 = eta[a] * u3 + r * (seta_cphi[a] * e13 + seta_sphi[a] * f3)
                                fx = (c1 + 0.5 * s1 + L) / hgrid
                                fy = (c2 + 0.5 * s2 + L) / hgrid
                                fz = (c3 + 0.5 * s3 + L) / hgrid
                                if (fx < 0.0 or fx > N - 1.0 or fy < 0.0
                                        or fy > N - 1.0 or fz < 0.0 or fz > N - 1.0):
                                    continue
                                bx = _base4_center(fx, N)
                                by = _base4_center(fy, N)
                                bz = _base4_center(fz, N)
                                _wts4(fx - bx, wts[0])
                                _wts4(fy - by, wts[1])
                                _wts4(fz - bz, wts[2])
                                for p in range(4):
                                    for q in range(4):
                                        wpq = wgt * wts[0, p] * wts[1, q]
                                        for s in range(4):
                                            out[bx + p, by + q, bz + s] += wpq * wts[2, s]
    return out


@numba.njit(cache=True, inline="always")
def _interp_ht_2d(ht, axis, N, L, hgrid, px, py):
    """h~ at an off-grid point with inward-biased cubic stencils, zero outside."""
    fx = (px + L) / hgrid
    fy = (py + L) / hgrid
    if fx < 0.0 or fx > N - 1.0 or fy < 0.0 or fy > N - 1.0:
        return 0.0
    bx = _base4_inward(fx, axis, N)
    by = _base4_inward(fy, axis, N)
    wx = np.empty(4)
    wy = np.empty(4)
    _wts4(fx - bx, wx)
    _wts4(fy - by, wy)
    acc = 0.0
    for p in range(4):
        rowacc = 0.0
        for q in range(4):
            rowacc += ht[bx + p, by + q] * wy[q]
        acc += rowacc * wx[p]
    return acc


@numba.njit(cache=True, parallel=True)
def _gb_pair_2d(hti, htj, Mv, sqM, axis, N, L, hgrid, cose, sine, wsig,
                b0vals, b1vals, gamma, cphi):
    """G^{b0} and G^{b1} of (h_i, h_j) in one sweep; returns h-space fields."""
    out0 = np.empty((N, N))
    out1 = np.empty((N, N))
    vol = hgrid * hgrid
    nsig = wsig.shape[0]
    for i1 in numba.prange(N):
        for i2 in range(N):
            v1 = axis[i1]
            v2 = axis[i2]
            htj_v = htj[i1, i2]
            acc0 = 0.0
            acc1 = 0.0
            for j1 in range(N):
                for j2 in range(N):
                    u1 = v1 - axis[j1]
                    u2 = v2 - axis[j2]
                    r2 = u1 * u1 + u2 * u2
                    if r2 == 0.0:
                        continue
                    phik = cphi if gamma == 0.0 else cphi * r2 ** (0.5 * gamma)
                    ms = Mv[j1, j2] * phik
                    c1 = 0.5 * (v1 + axis[j1])
                    c2 = 0.5 * (v2 + axis[j2])
                    loss = hti[j1, j2] * htj_v
                    for a in range(nsig):
                        up1 = 0.5 * (cose[a] * u1 - sine[a] * u2)
                        up2 = 0.5 * (cose[a] * u2 + sine[a] * u1)
                        hi_ps = _interp_ht_2d(hti, axis, N, L, hgrid, c1 - up1, c2 - up2)
                        hj_p = _interp_ht_2d(htj, axis, N, L, hgrid, c1 + up1, c2 + up2)
                        core = wsig[a] * ms * (hi_ps * hj_p - loss)
                        acc0 += b0vals[a] * core
                        acc1 += b1vals[a] * core
            out0[i1, i2] = acc0 * vol * sqM[i1, i2]
            out1[i1, i2] = acc1 * vol * sqM[i1, i2]
    return out0, out1


@numba.njit(cache=True, parallel=True)
def _lin_2d(ht, Mv, sqM, axis, N, L, hgrid, cose, sine, wsig, bvals, gamma, cphi):
    """Pointwise linearized operator sqrt(M) sum w B M* Theta[h~] vol."""
    out = np.empty((N, N))
    vol = hgrid * hgrid
    nsig = wsig.shape[0]
    for i1 in numba.prange(N):
        for i2 in range(N):
            v1 = axis[i1]
            v2 = axis[i2]
            ht_v = ht[i1, i2]
            acc = 0.0
            for j1 in range(N):
                for j2 in range(N):
                    u1 = v1 - axis[j1]
                    u2 = v2 - axis[j2]
                    r2 = u1 * u1 + u2 * u2
                    if r2 == 0.0:
                        continue
                    phik = cphi if gamma == 0.0 else cphi * r2 ** (0.5 * gamma)
                    ms = Mv[j1, j2] * phik
                    c1 = 0.5 * (v1 + axis[j1])
                    c2 = 0.5 * (v2 + axis[j2])
                    base = ht[j1, j2] + ht_v
                    for a in range(nsig):
                        up1 = 0.5 * (cose[a] * u1 - sine[a] * u2)
                        up2 = 0.5 * (cose[a] * u2 + sine[a] * u1)
                        hps = _interp_ht_2d(ht, axis, N, L, hgrid, c1 - up1, c2 - up2)
                        hp = _interp_ht_2d(ht, axis, N, L, hgrid, c1 + up1, c2 + up2)
                        acc += wsig[a] * bvals[a] * ms * (hps + hp - base)
            out[i1, i2] = acc * vol * sqM[i1, i2]
    return out


@numba.njit(cache=True)
def _lin_3d(ht, Mv, sqM, axis, N, L, hgrid, eta, seta_cphi, seta_sphi, wsig,
            bvals, gamma, cphi):
    out = np.empty((N, N, N))
    vol = hgrid ** 3
    nsig = wsig.shape[0]
    wts = np.empty((3, 4))
    for i1 in range(N):
        for i2 in range(N):
            for i3 in range(N):
                v = (axis[i1], axis[i2], axis[i3])
                ht_v = ht[i1, i2, i3]
                acc = 0.0
                for j1 in range(N):
                    for j2 in range(N):
                        for j3 in range(N):
                            u1 = v[0] - axis[j1]
                            u2 = v[1] - axis[j2]
                            u3 = v[2] - axis[j3]
                            r2 = u1 * u1 + u2 * u2 + u3 * u3
                            if r2 == 0.0:
                                continue
                            r = np.sqrt(r2)
                            phik = cphi if gamma == 0.0 else cphi * r ** gamma
                            ms = Mv[j1, j2, j3] * phik
                            c1 = 0.5 * (v[0] + axis[j1])
                            c2 = 0.5 * (v[1] + axis[j2])
                            c3 = 0.5 * (v[2] + axis[j3])
                            if abs(u3) < 0.9 * r:
                                e11 = u2
                                e12 = -u1
                                e13 = 0.0
                            else:
                                e11 = 0.0
                                e12 = u3
                                e13 = -u2
                            en = np.sqrt(e11 * e11 + e12 * e12 + e13 * e13)
                            e11 /= en
                            e12 /= en
                            e13 /= en
                            f1 = (u2 * e13 - u3 * e12) / r
                            f2 = (u3 * e11 - u1 * e13) / r
                            f3 = (u1 * e12 - u2 * e11) / r
                            base = ht[j1, j2, j3] + ht_v
                            for a in range(nsig):
                                s1 = eta[a] * u1 + r * (seta_cphi[a] * e11 + seta_sphi[a] * f1)
                                s2 = eta[a] * u2 + r * (seta_cphi[a] * e12 + seta_sphi[a] * f2)
                                s3 = eta[a] * u3 + r * (seta_cphi[a] * e13 + seta_sphi[a] * f3)
                                hp = _interp_ht_3d(ht, axis, N, L, hgrid,
                                                   c1 + 0.5 * s1, c2 + 0.5 * s2, c3 + 0.5 * s3)
                                hps = _interp_ht_3d(ht, axis, N, L, hgrid,
                                                    c1 - 0.5 * s1, c2 - 0.5 * s2, c3 - 0.5 * s3)
                                acc += wsig[a] * bvals[a] * ms * (hps + hp - base)
                out[i1, i2, i3] = acc * vol * sqM[i1, i2, i3]
    return out


@numba.njit(cache=True, inline="always")
def _interp_ht_3d(ht, axis, N, L, hgrid, px, py, pz):
    fx = (px + L) / hgrid
    fy = (py + L) / hgrid
    fz = (pz + L) / hgrid
    if (fx < 0.0 or fx > N - 1.0 or fy < 0.0 or fy > N - 1.0
            or fz < 0.0 or fz > N - 1.0):
        return 0.0
    bx = _base4_inward(fx, axis, N)
    by = _base4_inward(fy, axis, N)
    bz = _base4_inward(fz, axis, N)
    wx = np.empty(4)
    wy = np.empty(4)
    wz = np.empty(4)
    _wts4(fx - bx, wx)
    _wts4(fy - by, wy)
    _wts4(fz - bz, wz)
    acc = 0.0
    for p in range(4):
        pacc = 0.0
        for q in range(4):
            qacc = 0.0
            for s in range(4):
                qacc += ht[bx + p, by + q, bz + s] * wz[s]
            pacc += qacc * wy[q]
        acc += pacc * wx[p]
    return acc


@numba.njit(cache=True)
def _form_matrix_2d(Mv, sqM, axis, N, L, hgrid, cose, sine, wsig, bvals,
                    gamma, cphi):
    """Symmetric Galerkin matrix F with <F h, h> vol = -(1/4) sum w B M M* Theta[h~]^2 vol^2."""
    n = N * N
    F = np.zeros((n, n))
    vol = hgrid * hgrid
    nsig = wsig.shape[0]
    wx = np.empty(4)
    wy = np.empty(4)
    idx = np.empty(34, dtype=np.int64)
    wgt = np.empty(34)
    for i1 in range(N):
        for i2 in range(N):
            v1 = axis[i1]
            v2 = axis[i2]
            row_v = i1 * N + i2
            inv_sq_v = 1.0 / sqM[i1, i2]
            for j1 in range(N):
                for j2 in range(N):
                    u1 = v1 - axis[j1]
                    u2 = v2 - axis[j2]
                    r2 = u1 * u1 + u2 * u2
                    if r2 == 0.0:
                        continue
                    phik = cphi if gamma == 0.0 else cphi * r2 ** (0.5 * gamma)
                    c1 = 0.5 * (v1 + axis[j1])
                    c2 = 0.5 * (v2 + axis[j2])
                    mm = Mv[i1, i2] * Mv[j1, j2] * phik
                    row_s = j1 * N + j2
                    inv_sq_s = 1.0 / sqM[j1, j2]
                    for a in range(nsig):
                        if bvals[a] == 0.0:
                            continue
                        up1 = 0.5 * (cose[a] * u1 - sine[a] * u2)
                        up2 = 0.5 * (cose[a] * u2 + sine[a] * u1)
                        m = 0
                        idx[m] = row_v
                        wgt[m] = -inv_sq_v
                        m += 1
                        idx[m] = row_s
                        wgt[m] = -inv_sq_s
                        m += 1
                        for which in range(2):
                            if which == 0:
                                fx = (c1 + up1 + L) / hgrid
                                fy = (c2 + up2 + L) / hgrid
                            else:
                                fx = (c1 - up1 + L) / hgrid
                                fy = (c2 - up2 + L) / hgrid
                            if fx < 0.0 or fx > N - 1.0 or fy < 0.0 or fy > N - 1.0:
                                continue
                            bx = _base4_inward(fx, axis, N)
                            by = _base4_inward(fy, axis, N)
                            _wts4(fx - bx, wx)
                            _wts4(fy - by, wy)
                            for p in range(4):
                                for q in range(4):
                                    idx[m] = (bx + p) * N + (by + q)
                                    wgt[m] = wx[p] * wy[q] / sqM[bx + p, by + q]
                                    m += 1
                        pref = -0.25 * wsig[a] * bvals[a] * mm * vol
                        for s in range(m):
                            wi = pref * wgt[s]
                            ii = idx[s]
                            for t in range(m):
                                F[ii, idx[t]] += wi * wgt[t]
    return F


@numba.njit(cache=True)
def _direct_matrix_2d(Mv, sqM, axis, N, L, hgrid, cose, sine, wsig, bvals,
                      gamma, cphi):
    """Column-by-column matrix of the pointwise linearized operator (diagnostic)."""
    n = N * N
    A = np.zeros((n, n))
    vol = hgrid * hgrid
    nsig = wsig.shape[0]
    wx = np.empty(4)
    wy = np.empty(4)
    for i1 in range(N):
        for i2 in range(N):
            row = i1 * N + i2
            v1 = axis[i1]
            v2 = axis[i2]
            sq_v = sqM[i1, i2]
            for j1 in range(N):
                for j2 in range(N):
                    u1 = v1 - axis[j1]
                    u2 = v2 - axis[j2]
                    r2 = u1 * u1 + u2 * u2
                    if r2 == 0.0:
                        continue
                    phik = cphi if gamma == 0.0 else cphi * r2 ** (0.5 * gamma)
                    ms = Mv[j1, j2] * phik
                    c1 = 0.5 * (v1 + axis[j1])
                    c2 = 0.5 * (v2 + axis[j2])
                    col_s = j1 * N + j2
                    for a in range(nsig):
                        if bvals[a] == 0.0:
                            continue
                        pref = wsig[a] * bvals[a] * ms * vol * sq_v
                        A[row, row] -= pref / sqM[i1, i2]
                        A[row, col_s] -= pref / sqM[j1, j2]
                        up1 = 0.5 * (cose[a] * u1 - sine[a] * u2)
                        up2 = 0.5 * (cose[a] * u2 + sine[a] * u1)
                        for which in range(2):
                            if which == 0:
                                fx = (c1 + up1 + L) / hgrid
                                fy = (c2 + up2 + L) / hgrid
                            else:
                                fx = (c1 - up1 + L) / hgrid
                                fy = (c2 - up2 + L) / hgrid
                            if fx < 0.0 or fx > N - 1.0 or fy < 0.0 or fy > N - 1.0:
                                continue
                            bx = _base4_inward(fx, axis, N)
                            by = _base4_inward(fy, axis, N)
                            _wts4(fx - bx, wx)
                            _wts4(fy - by, wy)
                            for p in range(4):
                                for q in range(4):
                                    col = (bx + p) * N + (by + q)
                                    A[row, col] += pref * wx[p] * wy[q] / sqM[bx + p, by + q]
    return A


def _angular_values(angular, sphere: SphereRule) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(angular(sphere.eta), dtype=float))


def collide(g: Field, h: Field, angular, gamma: float, c_phi: float,
            sphere: SphereRule) -> Field:
    """Full bilinear collision operator Q(g, h) on density fields."""
    grid = g.grid
    if h.grid != grid:
        raise GridError("collide needs both fields on the same grid")
    if sphere.dv != grid.dv:
        raise GridError("sphere rule dimension does not match the grid")
    bvals = _angular_values(angular, sphere)
    if grid.dv == 2:
        out = _collide_2d(g.values, h.values, grid.axis, grid.N, grid.L, grid.h,
                          np.cos(sphere.phi), np.sin(sphere.phi), sphere.weights,
                          bvals, float(gamma), float(c_phi))
    else:
        sth = np.sqrt(np.maximum(1.0 - sphere.eta ** 2, 0.0))
        out = _collide_3d(g.values, h.values, grid.axis, grid.N, grid.L, grid.h,
                          sphere.eta, sth * np.cos(sphere.phi),
                          sth * np.sin(sphere.phi), sphere.weights, bvals,
                          float(gamma), float(c_phi))
    return Field(grid=grid, values=out, role="collision")


def gb_bilinear(hi: np.ndarray, hj: np.ndarray, angular, gamma: float,
                c_phi: float, sphere: SphereRule, ref: MaxwellianRef) -> np.ndarray:
    """Weighted bilinear operator G^b(h_i, h_j) for fluctuation fields."""
    grid = ref.grid
    if grid.dv != 2:
        raise GridError("gb_bilinear is implemented for d_v = 2")
    bvals = _angular_values(angular, sphere)
    zero = np.zeros_like(sphere.eta)
    hti = np.ascontiguousarray(np.asarray(hi, dtype=float) / ref.sqrt_M)
    htj = np.ascontiguousarray(np.asarray(hj, dtype=float) / ref.sqrt_M)
    out0, _ = _gb_pair_2d(hti, htj, ref.M, ref.sqrt_M, grid.axis, grid.N, grid.L,
                          grid.h, np.cos(sphere.phi), np.sin(sphere.phi),
                          sphere.weights, bvals, zero, float(gamma), float(c_phi))
    return out0


def gb_bilinear_pair(hi: np.ndarray, hj: np.ndarray, b0, b1, gamma: float,
                     c_phi: float, sphere: SphereRule,
                     ref: MaxwellianRef) -> tuple[np.ndarray, np.ndarray]:
    """G^{b0}(h_i, h_j) and G^{b1}(h_i, h_j) sharing one quadrature sweep."""
    grid = ref.grid
    if grid.dv != 2:
        raise GridError("gb_bilinear_pair is implemented for d_v = 2")
    b0v = _angular_values(b0, sphere)
    b1v = _angular_values(b1, sphere)
    hti = np.ascontiguousarray(hi / ref.sqrt_M)
    htj = np.ascontiguousarray(hj / ref.sqrt_M)
    return _gb_pair_2d(hti, htj, ref.M, ref.sqrt_M, grid.axis, grid.N, grid.L,
                       grid.h, np.cos(sphere.phi), np.sin(sphere.phi),
                       sphere.weights, b0v, b1v, float(gamma), float(c_phi))


def linearized(h: np.ndarray, angular, gamma: float, c_phi: float,
               sphere: SphereRule, ref: MaxwellianRef) -> np.ndarray:
    """Pointwise linearized collision operator L^b(h) on a fluctuation field."""
    grid = ref.grid
    bvals = _angular_values(angular, sphere)
    ht = np.ascontiguousarray(np.asarray(h, dtype=float) / ref.sqrt_M)
    if grid.dv == 2:
        return _lin_2d(ht, ref.M, ref.sqrt_M, grid.axis, grid.N, grid.L, grid.h,
                       np.cos(sphere.phi), np.sin(sphere.phi), sphere.weights,
                       bvals, float(gamma), float(c_phi))
    sth = np.sqrt(np.maximum(1.0 - sphere.eta ** 2, 0.0))
    return _lin_3d(ht, ref.M, ref.sqrt_M, grid.axis, grid.N, grid.L, grid.h,
                   sphere.eta, sth * np.cos(sphere.phi), sth * np.sin(sphere.phi),
                   sphere.weights, bvals, float(gamma), float(c_phi))


def linearized_form_matrix(angular, gamma: float, c_phi: float,
                           sphere: SphereRule, ref: MaxwellianRef) -> np.ndarray:
    """Symmetric Galerkin matrix of L^b on grid values (d_v = 2).

    Exactly symmetric and negative semidefinite for a nonnegative angular
    part; its null space contains the discrete collision invariants up to
    the e^(-L^2/2) box-truncation leak.
    """
    grid = ref.grid
    if grid.dv != 2:
        raise GridError("the operator laboratory runs on d_v = 2 grids")
    bvals = _angular_values(angular, sphere)
    return _form_matrix_2d(ref.M, ref.sqrt_M, grid.axis, grid.N, grid.L, grid.h,
                           np.cos(sphere.phi), np.sin(sphere.phi), sphere.weights,
                           bvals, float(gamma), float(c_phi))


def linearized_direct_matrix(angular, gamma: float, c_phi: float,
                             sphere: SphereRule, ref: MaxwellianRef) -> np.ndarray:
    """Matrix of the pointwise operator; its asymmetry is a quadrature artifact."""
    grid = ref.grid
    if grid.dv != 2:
        raise GridError("the operator laboratory runs on d_v = 2 grids")
    bvals = _angular_values(angular, sphere)
    return _direct_matrix_2d(ref.M, ref.sqrt_M, grid.axis, grid.N, grid.L, grid.h,
                             np.cos(sphere.phi), np.sin(sphere.phi), sphere.weights,
                             bvals, float(gamma), float(c_phi))
