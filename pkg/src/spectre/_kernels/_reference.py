"""Numpy fallback kernels: RK4 stepping and modulated running averages.

Same contracts as the compiled twin; selection happens in the package
__init__.  Outputs must agree with the compiled kernels to rounding, so the
arithmetic here mirrors the loop structure there (same trapezoid rule, same
guard test) even where a vectorized shortcut exists.
"""

from __future__ import annotations

import numpy as np


def rk4_evolve(a, f, dt, n_steps, forcing_k=None, guard=1e280, keep_velocity=False):
    """Integrate w'' + A w = g(t) from w(0)=0 by classical RK4.

    Free problem (forcing_k None): w'(0) = f, g = 0.
    Forced problem: w'(0) = 0, g(t) = f * exp(-i * forcing_k * t).

    Returns (w, v, c, overflow_step): dense states of shape (m+1, n), the
    trapezoid running integral c of w at every step, and the step index at
    which the sup-norm guard tripped (-1 if it never did; arrays are then
    truncated at that step).  v is None unless keep_velocity.
    """
    a = np.asarray(a, dtype=np.complex128)
    f = np.asarray(f, dtype=np.complex128).ravel()
    n = f.size
    forced = forcing_k is not None

    w = np.zeros(n, dtype=np.complex128)
    wd = np.zeros(n, dtype=np.complex128) if forced else f.copy()

    out_w = np.empty((n_steps + 1, n), dtype=np.complex128)
    out_c = np.empty((n_steps + 1, n), dtype=np.complex128)
    out_v = np.empty((n_steps + 1, n), dtype=np.complex128) if keep_velocity else None
    out_w[0] = w
    out_c[0] = 0.0
    if keep_velocity:
        out_v[0] = wd

    half = 0.5 * dt
    overflow = -1
    for m in range(n_steps):
        t = m * dt
        if forced:
            g0 = f * np.exp(-1j * forcing_k * t)
            gh = f * np.exp(-1j * forcing_k * (t + half))
            g1 = f * np.exp(-1j * forcing_k * (t + dt))
        else:
            g0 = gh = g1 = 0.0

        k1w = wd
        k1v = g0 - a @ w
        k2w = wd + half * k1v
        k2v = gh - a @ (w + half * k1w)
        k3w = wd + half * k2v
        k3v = gh - a @ (w + half * k2w)
        k4w = wd + dt * k3v
        k4v = g1 - a @ (w + dt * k3w)

        w_new = w + (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        wd_new = wd + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

        out_c[m + 1] = out_c[m] + half * (w + w_new)
        out_w[m + 1] = w_new
        if keep_velocity:
            out_v[m + 1] = wd_new
        w, wd = w_new, wd_new

        if np.max(np.abs(w)) > guard:
            overflow = m + 1
            break

    if overflow >= 0:
        out_w = out_w[: overflow + 1]
        out_c = out_c[: overflow + 1]
        if keep_velocity:
            out_v = out_v[: overflow + 1]
    return out_w, out_v, out_c, overflow


def modulated_scan(w, dt, ks, rec_idx):
    """Running modulated averages M(k, t) = (1/t) * integral_0^t e^{iks} w(s) ds.

    w: dense samples (S, n) on the uniform step grid; trapezoid quadrature at
    full resolution.  Returns (len(ks), len(rec_idx), n) evaluated at the
    recorded step indices, all of which must be positive.
    """
    w = np.asarray(w, dtype=np.complex128)
    ks = np.asarray(ks, dtype=np.float64).ravel()
    rec_idx = np.asarray(rec_idx, dtype=np.int64).ravel()
    s_count, n = w.shape
    t = np.arange(s_count) * dt
    t_rec = rec_idx * dt
    out = np.empty((ks.size, rec_idx.size, n), dtype=np.complex128)
    for j, k in enumerate(ks):
        g = np.exp(1j * k * t)[:, None] * w
        ct = np.empty_like(g)
        ct[0] = 0.0
        np.cumsum((g[:-1] + g[1:]) * (0.5 * dt), axis=0, out=ct[1:])
        out[j] = ct[rec_idx] / t_rec[:, None]
    return out
