"""Transform-side machinery: shifted solves, pole decomposition, inversion.

The central object is the shifted solve W(p) = (A + p^2 I)^{-1} f.  Splitting
off its poles leaves a remainder supported in the open left half-plane,

    W(p) = sum_j v_j / (p + i k_j)  +  W1(p)  +  sum_m b_m / (p - kappa_m),

with the axis poles at p = -i k_j, the right-half poles at kappa_m, and W1
collecting the left-half poles.  Everything downstream (contour inversion,
closed-form amplitudes, dual-route consistency checks) consumes that split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from spectre.errors import (
    AccuracyUnattainableError,
    DivergenceError,
    PoleProximityError,
    UsageError,
)
from spectre.evolution import WaveTrajectory
from spectre.operators import (
    LinearOperator,
    SpectralOracle,
    check_generic,
    p_plane_poles,
    real_tolerance,
)
from spectre.serialize import vector_to_pairs

DEFAULT_COND_CAP = 1e12
DEFAULT_EPS_LADDER = tuple(0.1 * 2.0**-j for j in range(21))


def _shifted_solve(a: np.ndarray, shift: complex, f: np.ndarray, cond_cap: float | None):
    """Solve (A + shift*I) x = f with one step of iterative refinement."""
    m = a + shift * np.eye(a.shape[0])
    if cond_cap is not None:
        cond = np.linalg.cond(m)
        if not np.isfinite(cond) or cond > cond_cap:
            raise PoleProximityError(
                f"shifted matrix condition {cond:.3g} exceeds {cond_cap:g}; shift is too close to a pole",
                shift=shift,
                condition=float(cond),
            )
    x = np.linalg.solve(m, f)
    x = x + np.linalg.solve(m, f - m @ x)
    return x


def resolvent_solve_p(
    op: LinearOperator, f: np.ndarray, p: complex, cond_cap: float | None = DEFAULT_COND_CAP
) -> np.ndarray:
    """W(p) = (A + p^2 I)^{-1} f."""
    f = np.asarray(f, dtype=np.complex128).ravel()
    return _shifted_solve(op.entries, complex(p) ** 2, f, cond_cap)


def resolvent_solve_k(
    op: LinearOperator, f: np.ndarray, k2: complex, cond_cap: float | None = DEFAULT_COND_CAP
) -> np.ndarray:
    """(A - k2 I)^{-1} f; k2 may carry a regularizing imaginary part."""
    f = np.asarray(f, dtype=np.complex128).ravel()
    return _shifted_solve(op.entries, -complex(k2), f, cond_cap)


@dataclass(frozen=True, eq=False)
class BoundFit:
    """Least-squares decay model norm(W1(i tau)) ~ c (1 + tau)^{-gamma}."""

    c: float
    gamma: float
    residual: float
    w1_zero: bool
    tau: np.ndarray
    norms: np.ndarray

    def to_json(self) -> dict:
        return {
            "c": self.c,
            # inf encodes the identically-zero remainder; JSON has no inf
            "gamma": self.gamma if math.isfinite(self.gamma) else None,
            "residual": self.residual,
            "w1_zero": self.w1_zero,
        }


@dataclass(frozen=True, eq=False)
class DecompositionReport:
    """Pole split of the shifted solve for one (operator, f) pair.

    ``imag_poles`` are (k_j, v_j) with the pole at p = -i k_j; ``right_poles``
    are (kappa_m, b_m).  ``w1_sampler`` evaluates the left-half remainder in
    closed form (it is exactly the sum over ``left_poles``), so the
    decomposition identity can be checked against direct solves at arbitrary
    off-pole points.
    """

    imag_poles: tuple
    right_poles: tuple
    left_poles: tuple
    w1_sampler: Callable[[np.ndarray], np.ndarray]
    bound_fit: BoundFit
    generic_warning: bool
    tol_real: float

    def to_json(self) -> dict:
        return {
            "imag_poles": [
                {"k": k_j, "v": vector_to_pairs(v_j)} for k_j, v_j in self.imag_poles
            ],
            "right_poles": [
                {"kappa": [kap.real, kap.imag], "b": vector_to_pairs(b)}
                for kap, b in self.right_poles
            ],
            "left_poles": [
                {"p0": [p0.real, p0.imag], "residue": vector_to_pairs(r)}
                for p0, r in self.left_poles
            ],
            "bound_fit": self.bound_fit.to_json(),
            "generic_warning": self.generic_warning,
        }


def _pole_sum_sampler(p0s: np.ndarray, residues: np.ndarray, n: int):
    """Vectorized closure for sum_j residue_j / (p - p0_j)."""

    def sampler(p):
        p_arr = np.asarray(p, dtype=np.complex128)
        scalar = p_arr.ndim == 0
        p_arr = np.atleast_1d(p_arr)
        if p0s.size == 0:
            out = np.zeros((p_arr.size, n), dtype=np.complex128)
        else:
            out = (1.0 / (p_arr[:, None] - p0s[None, :])) @ residues
        return out[0] if scalar else out

    return sampler


def _fit_bound(sampler, tau: np.ndarray, n: int) -> BoundFit:
    vals = sampler(1j * tau)
    norms = np.linalg.norm(vals, axis=1)
    if float(norms.max(initial=0.0)) <= 1e-250:
        return BoundFit(c=0.0, gamma=math.inf, residual=0.0, w1_zero=True, tau=tau, norms=norms)
    y = np.log(norms)
    design = np.vstack([np.ones_like(tau), -np.log1p(tau)]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    residual = float(np.sqrt(np.mean((y - fitted) ** 2)))
    return BoundFit(
        c=float(np.exp(coef[0])),
        gamma=float(coef[1]),
        residual=residual,
        w1_zero=False,
        tau=tau,
        norms=norms,
    )


def decompose(
    oracle: SpectralOracle, f: np.ndarray, tau_grid: np.ndarray | None = None
) -> DecompositionReport:
    """Split W(p) into axis poles, right-half poles and the left-half remainder."""
    f = np.asarray(f, dtype=np.complex128).ravel()
    tol = real_tolerance(oracle.spectral_radius)
    poles = p_plane_poles(oracle, f, tol)
    generic_warning = not check_generic(oracle, f).generic

    imag, right, left = [], [], []
    for pole in poles:
        if pole.klass == "imag-axis":
            imag.append((float(pole.k_j), pole.residue))
        elif pole.klass == "right":
            right.append((complex(pole.p0), pole.residue))
        else:
            left.append((complex(pole.p0), pole.residue))
    imag.sort(key=lambda item: item[0])
    right.sort(key=lambda item: (item[0].real, item[0].imag))
    left.sort(key=lambda item: (item[0].real, item[0].imag))

    n = f.size
    left_p0 = np.array([p0 for p0, _ in left], dtype=np.complex128)
    left_res = (
        np.array([r for _, r in left], dtype=np.complex128)
        if left
        else np.zeros((0, n), dtype=np.complex128)
    )
    sampler = _pole_sum_sampler(left_p0, left_res, n)
    if tau_grid is None:
        tau_grid = np.geomspace(10.0, 1e4, 80)
    fit = _fit_bound(sampler, np.asarray(tau_grid, dtype=float), n)
    return DecompositionReport(
        imag_poles=tuple(imag),
        right_poles=tuple(right),
        left_poles=tuple(left),
        w1_sampler=sampler,
        bound_fit=fit,
        generic_warning=generic_warning,
        tol_real=tol,
    )


@dataclass(frozen=True, eq=False)
class AbsorptionResult:
    """Regularized-solve ladder (A - (k^2 + i eps) I)^{-1} f as eps decreases."""

    k: float
    ladder: np.ndarray
    iterates: np.ndarray
    cauchy_norms: np.ndarray
    limit: np.ndarray
    converged: bool
    failure_index: int | None
    richardson: np.ndarray | None
    tol_abs: float

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "ladder": self.ladder.tolist(),
            "iterate_norms": np.linalg.norm(self.iterates, axis=1).tolist(),
            "cauchy_norms": self.cauchy_norms.tolist(),
            "limit": vector_to_pairs(self.limit) if np.all(np.isfinite(self.limit)) else None,
            "converged": self.converged,
            "failure_index": self.failure_index,
            "tol_abs": self.tol_abs,
        }


def limiting_absorption(
    op: LinearOperator,
    f: np.ndarray,
    k: float,
    ladder: Sequence[float] | None = None,
    tol_abs: float | None = None,
) -> AbsorptionResult:
    """Drive eps -> 0 in (A - (k^2 + i eps)) x = f and test for a limit.

    Convergence means the final Cauchy increment dropped below tol_abs
    (default 1e-6 * norm(f)).  At an embedded resonance the iterates blow up
    like 1/eps instead; that is a measurement, not an error, so singular
    rungs only mark ``failure_index`` and truncate the ladder.
    """
    f = np.asarray(f, dtype=np.complex128).ravel()
    k = float(k)
    if ladder is None:
        ladder = DEFAULT_EPS_LADDER
    ladder = np.asarray(ladder, dtype=float)
    if tol_abs is None:
        tol_abs = 1e-6 * float(np.linalg.norm(f))

    iterates = []
    failure_index = None
    for j, eps in enumerate(ladder):
        try:
            x = _shifted_solve(op.entries, -(k * k + 1j * eps), f, cond_cap=None)
        except np.linalg.LinAlgError:
            failure_index = j
            break
        if not np.all(np.isfinite(x)):
            failure_index = j
            break
        iterates.append(x)
    iterates = np.array(iterates, dtype=np.complex128)
    used = ladder[: iterates.shape[0]]
    diffs = (
        np.linalg.norm(np.diff(iterates, axis=0), axis=1)
        if iterates.shape[0] >= 2
        else np.zeros(0)
    )
    converged = bool(diffs.size and diffs[-1] < tol_abs)
    limit = iterates[-1] if iterates.shape[0] else np.full(f.size, np.nan, dtype=np.complex128)
    richardson = (
        2.0 * iterates[-1] - iterates[-2] if iterates.shape[0] >= 2 else None
    )
    return AbsorptionResult(
        k=k,
        ladder=used,
        iterates=iterates,
        cauchy_norms=diffs,
        limit=limit,
        converged=converged,
        failure_index=failure_index,
        richardson=richardson,
        tol_abs=tol_abs,
    )


@dataclass(frozen=True, eq=False)
class BromwichResult:
    """Vertical-contour inversion value with an optional certified tail bound."""

    value: np.ndarray
    tail_bound: float | None


def bromwich_invert(
    w1_sampler: Callable,
    t: float,
    sigma: float = 0.5,
    tau_max: float = 2000.0,
    n_quad: int = 200_001,
    bound_fit: BoundFit | None = None,
) -> BromwichResult:
    """w1(t) = (1/2 pi i) * integral over Re p = sigma of e^{pt} W1(p) dp.

    The contour is truncated at |Im p| = tau_max and discretized by the
    trapezoid rule.  When a decay fit is supplied, the discarded tails are
    certified by c (1+tau)^{-gamma}; that certificate needs gamma > 1, and
    asking for it with a slower fit is refused rather than silently reported.
    """
    if t < 0:
        raise UsageError("inversion time must be non-negative")
    if n_quad < 3:
        raise UsageError("n_quad too small")
    dtau = 2.0 * tau_max / (n_quad - 1)
    if dtau * max(t, 1e-30) > 0.5:
        raise UsageError(
            f"contour step {dtau:.3g} too coarse for t = {t:g}; raise n_quad above {int(4 * tau_max * t) + 1}"
        )
    tail_bound = None
    if bound_fit is not None:
        if bound_fit.w1_zero:
            tail_bound = 0.0
        elif bound_fit.gamma <= 1.0:
            raise AccuracyUnattainableError(
                f"tail certificate needs decay exponent > 1, fit gave {bound_fit.gamma:.3g}"
            )
        else:
            tail_bound = (
                math.exp(sigma * t)
                / math.pi
                * bound_fit.c
                * tau_max ** (1.0 - bound_fit.gamma)
                / (bound_fit.gamma - 1.0)
            )

    chunk = 1 << 16
    total = None
    for start in range(0, n_quad, chunk):
        stop = min(start + chunk, n_quad)
        tau = -tau_max + dtau * np.arange(start, stop)
        vals = np.atleast_2d(w1_sampler(sigma + 1j * tau))
        weights = np.ones(stop - start)
        if start == 0:
            weights[0] = 0.5
        if stop == n_quad:
            weights[-1] = 0.5
        block = np.tensordot(weights * np.exp(1j * tau * t), vals, axes=(0, 0))
        total = block if total is None else total + block
    value = total * dtau * math.exp(sigma * t) / (2.0 * math.pi)
    return BromwichResult(value=value, tail_bound=tail_bound)


def _crude_growth_rate(traj: WaveTrajectory) -> float:
    t = traj.times
    norms = np.linalg.norm(traj.samples, axis=1)
    window = t >= 0.5 * t[-1]
    if window.sum() < 3:
        return 0.0
    y = np.log(np.maximum(norms[window], 1e-300))
    design = np.vstack([np.ones(int(window.sum())), t[window]]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coef[1])


def _dense_laplace(series: np.ndarray, dt: float, p: complex, chunk: int = 1 << 18) -> np.ndarray:
    """Trapezoid transform integral_0^T e^{-pt} series(t) dt on the step grid."""
    s_count = series.shape[0]
    total = np.zeros(series.shape[1], dtype=np.complex128)
    for start in range(0, s_count, chunk):
        stop = min(start + chunk, s_count)
        t = dt * np.arange(start, stop)
        weights = np.ones(stop - start)
        if start == 0:
            weights[0] = 0.5
        if stop == s_count:
            weights[-1] = 0.5
        total += np.tensordot(weights * np.exp(-p * t), series[start:stop], axes=(0, 0))
    return total * dt


def numeric_laplace(traj: WaveTrajectory, p: complex) -> np.ndarray:
    """Transform of the trajectory by direct quadrature over [0, T].

    Refuses abscissas at or below the trajectory's empirical growth rate
    plus a 0.1 safety strip, where the truncated integral is meaningless.
    """
    p = complex(p)
    alpha = _crude_growth_rate(traj)
    if p.real <= alpha + 0.1:
        raise DivergenceError(
            f"Re p = {p.real:g} is inside the divergence strip (growth rate about {alpha:.3g})"
        )
    return _dense_laplace(traj.dense_samples, traj.dense_dt, p)


def integration_rule_check(traj: WaveTrajectory, p: complex) -> float:
    """Gap in the running-integral transform rule L[C](p) = L[w](p) / p."""
    p = complex(p)
    alpha = _crude_growth_rate(traj)
    if p.real <= alpha + 0.1:
        raise DivergenceError(
            f"Re p = {p.real:g} is inside the divergence strip (growth rate about {alpha:.3g})"
        )
    lhs = _dense_laplace(traj.dense_cumulative, traj.dense_dt, p)
    rhs = _dense_laplace(traj.dense_samples, traj.dense_dt, p) / p
    return float(np.linalg.norm(lhs - rhs))


@dataclass(frozen=True)
class PlancherelResult:
    """Line-integral energy vs weighted time-domain energy."""

    line_energy: float
    time_energy: float
    ratio: float
    sigma: float
    tau_max: float
    dtau: float


def plancherel_check(
    op: LinearOperator,
    f: np.ndarray,
    traj: WaveTrajectory,
    sigma: float = 0.5,
    tau_max: float = 200.0,
    dtau: float = 0.05,
) -> PlancherelResult:
    """Compare integral |W(sigma+i tau)|^2 d tau with 2 pi integral e^{-2 sigma t} |w|^2 dt.

    The left side samples the shifted solve along the vertical line by direct
    linear solves; the right side is a quadrature over the trajectory.  Both
    integrals are truncated, so agreement is expected to a few percent for
    sigma well inside the convergence half-plane.
    """
    f = np.asarray(f, dtype=np.complex128).ravel()
    n_tau = int(round(2.0 * tau_max / dtau)) + 1
    a = op.entries
    eye = np.eye(op.n)
    line = 0.0
    chunk = 2048
    for start in range(0, n_tau, chunk):
        stop = min(start + chunk, n_tau)
        tau = -tau_max + dtau * np.arange(start, stop)
        shifts = (sigma + 1j * tau) ** 2
        mats = a[None, :, :] + shifts[:, None, None] * eye[None, :, :]
        sols = np.linalg.solve(mats, np.broadcast_to(f, (stop - start, op.n))[..., None])[..., 0]
        weights = np.ones(stop - start)
        if start == 0:
            weights[0] = 0.5
        if stop == n_tau:
            weights[-1] = 0.5
        line += float(np.dot(weights, np.sum(np.abs(sols) ** 2, axis=1)))
    line *= dtau

    t = traj.dense_times
    decay = np.exp(-2.0 * sigma * t)
    energy = np.sum(np.abs(traj.dense_samples) ** 2, axis=1) * decay
    weights = np.ones(t.size)
    weights[0] = 0.5
    weights[-1] = 0.5
    time_side = 2.0 * math.pi * float(np.dot(weights, energy)) * traj.dense_dt
    return PlancherelResult(
        line_energy=line,
        time_energy=time_side,
        ratio=line / time_side if time_side != 0.0 else math.inf,
        sigma=sigma,
        tau_max=tau_max,
        dtau=dtau,
    )


@dataclass(frozen=True, eq=False)
class AbelianResult:
    """Long-time average vs small-p transform limit of the same series."""

    time_limit: np.ndarray
    laplace_values: np.ndarray
    p_ladder: np.ndarray
    laplace_limit: np.ndarray
    gap: float


def abelian_check(
    h: Callable[[np.ndarray], np.ndarray],
    T: float,
    p_ladder: Sequence[float] | None = None,
    quad_dt: float = 0.05,
) -> AbelianResult:
    """Check (1/T) integral_0^T h  against  lim_{p->0} p * integral e^{-pt} h.

    ``h`` maps a time array to values (scalar series: shape (m,); vector
    series: (m, n)).  Each transform rung integrates to a horizon of 25/p so
    the truncation error is negligible; the p -> 0 limit is read off by
    linear extrapolation from the two smallest rungs.
    """
    if p_ladder is None:
        p_ladder = (1e-1, 1e-2, 1e-3, 1e-4)
    p_ladder = np.asarray(p_ladder, dtype=float)
    if np.any(p_ladder <= 0):
        raise UsageError("p ladder must be positive")

    def _chunked(fn, t1):
        n_steps = int(round(t1 / quad_dt))
        total = None
        chunk = 1 << 20
        for start in range(0, n_steps + 1, chunk):
            stop = min(start + chunk, n_steps + 1)
            t = quad_dt * np.arange(start, stop)
            vals = np.asarray(fn(t), dtype=np.complex128)
            if vals.ndim == 1:
                vals = vals[:, None]
            weights = np.ones(stop - start)
            if start == 0:
                weights[0] = 0.5
            if stop == n_steps + 1:
                weights[-1] = 0.5
            block = np.tensordot(weights, vals, axes=(0, 0))
            total = block if total is None else total + block
        return total * quad_dt

    time_limit = _chunked(h, T) / T
    laplace_values = []
    for p in p_ladder:
        def damped(t, p=p):
            vals = np.asarray(h(t), dtype=np.complex128)
            if vals.ndim == 1:
                vals = vals[:, None]
            return np.exp(-p * t)[:, None] * vals

        horizon = max(T, 25.0 / p)
        laplace_values.append(p * _chunked(damped, horizon))
    laplace_values = np.array(laplace_values)

    order = np.argsort(p_ladder)
    p_small, p_next = p_ladder[order[0]], p_ladder[order[1]]
    l_small, l_next = laplace_values[order[0]], laplace_values[order[1]]
    slope = (l_next - l_small) / (p_next - p_small)
    laplace_limit = l_small - slope * p_small
    gap = float(np.linalg.norm(time_limit - laplace_limit))
    return AbelianResult(
        time_limit=time_limit,
        laplace_values=laplace_values,
        p_ladder=p_ladder,
        laplace_limit=laplace_limit,
        gap=gap,
    )
