# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: RK4 stepping and modulated running averages.

Mirrors the reference module's arithmetic (same stage order, same trapezoid
terms) so both backends agree to rounding.
"""

import numpy as np

from libc.math cimport cos, sin, hypot


cdef inline void _matvec(const double complex[:, ::1] a, const double complex[::1] x,
                         double complex[::1] out, Py_ssize_t n) noexcept:
    cdef Py_ssize_t i, j
    cdef double complex acc
    for i in range(n):
        acc = 0
        for j in range(n):
            acc = acc + a[i, j] * x[j]
        out[i] = acc


def rk4_evolve(a, f, double dt, long n_steps, forcing_k=None, double guard=1e280,
               keep_velocity=False):
    """Same contract as the reference rk4_evolve."""
    a_np = np.ascontiguousarray(np.asarray(a, dtype=np.complex128))
    f_np = np.ascontiguousarray(np.asarray(f, dtype=np.complex128).ravel())
    cdef const double complex[:, ::1] A = a_np
    cdef const double complex[::1] fv = f_np
    cdef Py_ssize_t n = fv.shape[0]
    cdef bint forced = forcing_k is not None
    cdef double kfrc = float(forcing_k) if forced else 0.0
    cdef bint keep_v = bool(keep_velocity)

    out_w_np = np.empty((n_steps + 1, n), dtype=np.complex128)
    out_c_np = np.empty((n_steps + 1, n), dtype=np.complex128)
    cdef double complex[:, ::1] W = out_w_np
    cdef double complex[:, ::1] C = out_c_np
    out_v_np = np.empty((n_steps + 1, n), dtype=np.complex128) if keep_v else None
    cdef double complex[:, ::1] V = out_v_np if keep_v else out_w_np

    cdef double complex[::1] w = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] wd = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] k1w = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k1v = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k2w = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k2v = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k3w = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k3v = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k4w = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k4v = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] xw = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] tmp = np.empty(n, dtype=np.complex128)

    cdef Py_ssize_t i, m
    cdef long overflow = -1
    cdef double t, ang, sup, h
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    cdef double complex ph0 = 1.0, phh = 1.0, ph1 = 1.0
    cdef double complex wnew, wdnew

    if not forced:
        for i in range(n):
            wd[i] = fv[i]

    for i in range(n):
        W[0, i] = 0.0
        C[0, i] = 0.0
        if keep_v:
            V[0, i] = wd[i]

    for m in range(n_steps):
        t = m * dt
        if forced:
            ang = kfrc * t
            ph0 = cos(ang) - 1j * sin(ang)
            ang = kfrc * (t + half)
            phh = cos(ang) - 1j * sin(ang)
            ang = kfrc * (t + dt)
            ph1 = cos(ang) - 1j * sin(ang)

        _matvec(A, w, tmp, n)
        for i in range(n):
            k1w[i] = wd[i]
            k1v[i] = (fv[i] * ph0 if forced else 0.0) - tmp[i]
        for i in range(n):
            xw[i] = w[i] + half * k1w[i]
        _matvec(A, xw, tmp, n)
        for i in range(n):
            k2w[i] = wd[i] + half * k1v[i]
            k2v[i] = (fv[i] * phh if forced else 0.0) - tmp[i]
        for i in range(n):
            xw[i] = w[i] + half * k2w[i]
        _matvec(A, xw, tmp, n)
        for i in range(n):
            k3w[i] = wd[i] + half * k2v[i]
            k3v[i] = (fv[i] * phh if forced else 0.0) - tmp[i]
        for i in range(n):
            xw[i] = w[i] + dt * k3w[i]
        _matvec(A, xw, tmp, n)
        for i in range(n):
            k4w[i] = wd[i] + dt * k3v[i]
            k4v[i] = (fv[i] * ph1 if forced else 0.0) - tmp[i]

        sup = 0.0
        for i in range(n):
            wnew = w[i] + sixth * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i])
            wdnew = wd[i] + sixth * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
            C[m + 1, i] = C[m, i] + half * (w[i] + wnew)
            W[m + 1, i] = wnew
            if keep_v:
                V[m + 1, i] = wdnew
            w[i] = wnew
            wd[i] = wdnew
            h = hypot(wnew.real, wnew.imag)
            if h > sup:
                sup = h
        if sup > guard:
            overflow = m + 1
            break

    if overflow >= 0:
        out_w_np = out_w_np[: overflow + 1]
        out_c_np = out_c_np[: overflow + 1]
        if keep_v:
            out_v_np = out_v_np[: overflow + 1]
    return out_w_np, (out_v_np if keep_v else None), out_c_np, overflow


def modulated_scan(w, double dt, ks, rec_idx):
    """Same contract as the reference modulated_scan."""
    w_np = np.ascontiguousarray(np.asarray(w, dtype=np.complex128))
    k_np = np.ascontiguousarray(np.asarray(ks, dtype=np.float64).ravel())
    r_np = np.ascontiguousarray(np.asarray(rec_idx, dtype=np.intp).ravel())
    cdef const double complex[:, ::1] W = w_np
    cdef const double[::1] K = k_np
    cdef const Py_ssize_t[::1] R = r_np
    cdef Py_ssize_t s_count = W.shape[0], n = W.shape[1]
    cdef Py_ssize_t nk = K.shape[0], nr = R.shape[0]

    out_np = np.empty((nk, nr, n), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_np
    cdef double complex[::1] acc = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] ga = np.empty(n, dtype=np.complex128)
    cdef double complex gb
    cdef double half = 0.5 * dt
    cdef double k, t
    cdef double complex ph
    cdef Py_ssize_t j, i, step, ridx

    for j in range(nk):
        k = K[j]
        for i in range(n):
            acc[i] = 0.0
            ga[i] = W[0, i]
        ridx = 0
        for step in range(1, s_count):
            t = step * dt
            ph = cos(k * t) + 1j * sin(k * t)
            for i in range(n):
                gb = ph * W[step, i]
                acc[i] = acc[i] + (ga[i] + gb) * half
                ga[i] = gb
            while ridx < nr and R[ridx] == step:
                for i in range(n):
                    out[j, ridx, i] = acc[i] / t
                ridx += 1
    return out_np
