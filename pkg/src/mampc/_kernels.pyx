# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures and semantics match ``_kernels_py``."""

import numpy as np

from libc.math cimport sqrt, fabs, isfinite

cdef enum:
    OK = 0
    MAX_ITER = 1
    DIVERGED = 2
    NONFINITE = 3


def admm_iterate(double[:, ::1] G, double[::1] g0, double[:, ::1] A,
                 double[::1] b, double[::1] f, double[::1] v, double[::1] z,
                 double[::1] y, double rho, double sigma, double alpha,
                 int max_iter, double eps, int diverge_after,
                 double diverge_limit):
    cdef Py_ssize_t d = G.shape[0]
    cdef Py_ssize_t p = A.shape[0]
    cdef Py_ssize_t i, j
    cdef int it
    cdef double acc, zh, zn, r_prim, r_dual, ymax
    cdef double[::1] w = np.empty(p)
    cdef double[::1] rhs = np.empty(d)
    cdef double[::1] vt = np.empty(d)
    cdef double[::1] dz = np.empty(p)

    for it in range(1, max_iter + 1):
        for i in range(p):
            w[i] = rho * z[i] - y[i]
        for j in range(d):
            rhs[j] = sigma * v[j] - f[j]
        for i in range(p):
            for j in range(d):
                rhs[j] += A[i, j] * w[i]
        for i in range(d):
            acc = g0[i]
            for j in range(d):
                acc += G[i, j] * rhs[j]
            vt[i] = acc
        ymax = 0.0
        for i in range(p):
            acc = 0.0
            for j in range(d):
                acc += A[i, j] * vt[j]
            zh = alpha * acc + (1.0 - alpha) * z[i]
            zn = zh + y[i] / rho
            if zn > b[i]:
                zn = b[i]
            y[i] += rho * (zh - zn)
            if fabs(y[i]) > ymax:
                ymax = fabs(y[i])
            dz[i] = zn - z[i]
            z[i] = zn
        for j in range(d):
            v[j] = (1.0 - alpha) * v[j] + alpha * vt[j]
            if not isfinite(v[j]):
                return it, NONFINITE
        r_prim = 0.0
        for i in range(p):
            acc = 0.0
            for j in range(d):
                acc += A[i, j] * v[j]
            acc = fabs(acc - z[i])
            if acc > r_prim:
                r_prim = acc
        r_dual = 0.0
        for j in range(d):
            acc = 0.0
            for i in range(p):
                acc += A[i, j] * dz[i]
            acc = rho * fabs(acc)
            if acc > r_dual:
                r_dual = acc
        if r_prim <= eps and r_dual <= eps:
            return it, OK
        if it >= diverge_after and ymax > diverge_limit:
            return it, DIVERGED
    return max_iter, MAX_ITER


cdef inline void _tank_deriv(double* h, double nu0, double nu1,
                             double[::1] prm, double* out) noexcept nogil:
    cdef double q[4]
    cdef int i
    cdef double g = prm[8]
    cdef double g1 = prm[9]
    cdef double g2 = prm[10]
    cdef double f1 = prm[11] * nu0
    cdef double f2 = prm[12] * nu1
    for i in range(4):
        q[i] = prm[4 + i] * sqrt(2.0 * g * (h[i] if h[i] > 0.0 else 0.0))
    out[0] = (-q[0] + q[2] + g1 * f1) / prm[0]
    out[1] = (-q[1] + q[3] + g2 * f2) / prm[1]
    out[2] = (-q[2] + (1.0 - g2) * f2) / prm[2]
    out[3] = (-q[3] + (1.0 - g1) * f1) / prm[3]


def tank_deriv(h, nu, prm):
    cdef double hh[4]
    cdef double out[4]
    cdef int i
    cdef double[::1] p = np.ascontiguousarray(prm, dtype=float)
    for i in range(4):
        hh[i] = h[i]
    _tank_deriv(hh, nu[0], nu[1], p, out)
    return np.array([out[0], out[1], out[2], out[3]])


def tank_rk4(h, nu, prm, double dt, int nsteps):
    cdef double x[4]
    cdef double tmp[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double[::1] p = np.ascontiguousarray(prm, dtype=float)
    cdef double nu0 = nu[0]
    cdef double nu1 = nu[1]
    cdef int s, i
    for i in range(4):
        x[i] = h[i]
    for s in range(nsteps):
        _tank_deriv(x, nu0, nu1, p, k1)
        for i in range(4):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        _tank_deriv(tmp, nu0, nu1, p, k2)
        for i in range(4):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        _tank_deriv(tmp, nu0, nu1, p, k3)
        for i in range(4):
            tmp[i] = x[i] + dt * k3[i]
        _tank_deriv(tmp, nu0, nu1, p, k4)
        for i in range(4):
            x[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not isfinite(x[i]):
                return np.array([x[0], x[1], x[2], x[3]]), NONFINITE
    return np.array([x[0], x[1], x[2], x[3]]), OK


cdef inline int _sofc_deriv(double* x, double nf, double na, double cur,
                            double[::1] prm, double* out) noexcept nogil:
    cdef double RT = prm[0] * prm[1]
    cdef double patm = prm[8]
    cdef double arg_an = 2.0 * (x[0] + x[1] - patm) / (RT * (x[0] * prm[9] + x[1] * prm[10]))
    cdef double arg_ca = 2.0 * (x[2] + x[3] - patm) / (RT * (x[2] * prm[11] + x[3] * prm[12]))
    cdef double root_an, root_ca, kri, ga, gc
    if not arg_an > 0.0:
        return -1
    if not arg_ca > 0.0:
        return -2
    root_an = prm[5] * prm[6] * sqrt(arg_an)
    root_ca = prm[5] * prm[7] * sqrt(arg_ca)
    kri = prm[4] * cur
    ga = RT / prm[2]
    gc = RT / prm[3]
    out[0] = ga * (prm[13] * nf - root_an * x[0] - 2.0 * kri)
    out[1] = ga * (prm[14] * nf - root_an * x[1] + 2.0 * kri)
    out[2] = gc * (prm[15] * na - root_ca * x[2] - kri)
    out[3] = gc * (prm[16] * na - root_ca * x[3])
    return 0


def sofc_deriv(x, double n_fuel, double n_air, double current, prm):
    cdef double xx[4]
    cdef double out[4]
    cdef int i, s
    cdef double[::1] p = np.ascontiguousarray(prm, dtype=float)
    for i in range(4):
        xx[i] = x[i]
    s = _sofc_deriv(xx, n_fuel, n_air, current, p, out)
    if s:
        return None, s
    return np.array([out[0], out[1], out[2], out[3]]), 0


def sofc_rk4(x0, double n_fuel, double n_air, double current, prm,
             double dt, int nsteps):
    cdef double x[4]
    cdef double tmp[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double[::1] p = np.ascontiguousarray(prm, dtype=float)
    cdef int s, i, st
    for i in range(4):
        x[i] = x0[i]
    for s in range(nsteps):
        st = _sofc_deriv(x, n_fuel, n_air, current, p, k1)
        if st:
            return np.array([x[0], x[1], x[2], x[3]]), st
        for i in range(4):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        st = _sofc_deriv(tmp, n_fuel, n_air, current, p, k2)
        if st:
            return np.array([x[0], x[1], x[2], x[3]]), st
        for i in range(4):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        st = _sofc_deriv(tmp, n_fuel, n_air, current, p, k3)
        if st:
            return np.array([x[0], x[1], x[2], x[3]]), st
        for i in range(4):
            tmp[i] = x[i] + dt * k3[i]
        st = _sofc_deriv(tmp, n_fuel, n_air, current, p, k4)
        if st:
            return np.array([x[0], x[1], x[2], x[3]]), st
        for i in range(4):
            x[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not isfinite(x[i]):
                return np.array([x[0], x[1], x[2], x[3]]), NONFINITE
    return np.array([x[0], x[1], x[2], x[3]]), OK
