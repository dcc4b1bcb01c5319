"""Time-domain evolution of w'' + A w = g and its running averages.

Two integrators share one trajectory contract: classical RK4 on the
first-order system, and an exact per-mode evaluation for diagonalizable
operators.  Trajectories keep the dense step-resolution samples because the
modulated running averages

    M(k, t) = (1/t) * integral_0^t e^{i k s} w(s) ds

are quadratures over the full grid; recorded (downsampled) rows are what
reports and fits consume.  A sup-norm guard truncates runaway trajectories
well before float overflow instead of producing infs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from spectre import _kernels
from spectre.errors import ConfigurationError, UnsupportedOperatorError, UsageError
from spectre.operators import LinearOperator, SpectralOracle, real_tolerance, spectral_oracle
from spectre.serialize import format_float, sha256_hex

GUARD_NORM = 1e280  # sup-norm ceiling, 20 decades of headroom below overflow
MAX_STEPS = 1_000_000_000
_DENSE_BYTES_CAP = 4 << 30


def dt_stability_limit(spectral_radius: float) -> float:
    """Largest RK4 step accepted for an operator of the given spectral radius."""
    return 0.5 / math.sqrt(spectral_radius + 1.0)


@dataclass(frozen=True)
class EvolveConfig:
    """Integration window and sampling layout.

    ``forcing_k`` present means the periodically forced problem
    ``u'' + A u = f e^{-i forcing_k t}`` with zero initial data; absent means
    the free problem with ``w(0) = 0, w'(0) = f``.
    """

    T: float
    dt: float
    method: str = "rk4"
    sample_stride: int = 1
    forcing_k: float | None = None
    keep_velocity: bool = False

    def __post_init__(self):
        if not (isinstance(self.T, (int, float)) and math.isfinite(self.T) and self.T > 0):
            raise ConfigurationError("evolve.T: expected a positive finite number")
        if not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError("evolve.dt: expected a positive finite number")
        if self.method not in ("rk4", "spectral"):
            raise ConfigurationError(f"evolve.method: expected 'rk4' or 'spectral', got {self.method!r}")
        if not isinstance(self.sample_stride, int) or isinstance(self.sample_stride, bool) or self.sample_stride < 1:
            raise ConfigurationError("evolve.sample_stride: expected a positive integer")
        if self.forcing_k is not None:
            if not (isinstance(self.forcing_k, (int, float)) and math.isfinite(self.forcing_k)):
                raise ConfigurationError("evolve.forcing_k: expected a finite real number")
        if self.T / self.dt > MAX_STEPS:
            raise ConfigurationError(f"evolve: T/dt = {self.T / self.dt:.3g} exceeds the step budget {MAX_STEPS:g}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    @property
    def effective_T(self) -> float:
        return self.n_steps * self.dt


@dataclass(frozen=True, eq=False)
class WaveTrajectory:
    """Immutable result of one evolution run.

    ``samples``/``cumulative``/``times`` are the recorded rows;
    ``dense_samples``/``dense_cumulative`` hold every step for quadrature.
    ``cumulative`` is the trapezoid running integral of the state, taken at
    full step resolution.  ``kind`` is ``free``, ``forced`` or ``synthetic``.
    """

    kind: str
    config: EvolveConfig
    record_indices: np.ndarray
    dense_dt: float
    dense_samples: np.ndarray
    dense_cumulative: np.ndarray
    dense_velocity: np.ndarray | None
    truncated: bool
    truncated_at: float | None
    source_digest: str

    def __post_init__(self):
        self.record_indices.setflags(write=False)
        self.dense_samples.setflags(write=False)
        self.dense_cumulative.setflags(write=False)
        if self.dense_velocity is not None:
            self.dense_velocity.setflags(write=False)

    @property
    def n(self) -> int:
        return self.dense_samples.shape[1]

    @property
    def dense_times(self) -> np.ndarray:
        return np.arange(self.dense_samples.shape[0]) * self.dense_dt

    @property
    def times(self) -> np.ndarray:
        return self.record_indices * self.dense_dt

    @property
    def samples(self) -> np.ndarray:
        return self.dense_samples[self.record_indices]

    @property
    def cumulative(self) -> np.ndarray:
        return self.dense_cumulative[self.record_indices]

    @property
    def velocities(self) -> np.ndarray | None:
        if self.dense_velocity is None:
            return None
        return self.dense_velocity[self.record_indices]

    @property
    def final_time(self) -> float:
        return float((self.dense_samples.shape[0] - 1) * self.dense_dt)


@dataclass(frozen=True, eq=False)
class ModulatedAverageSeries:
    """M(k, t) at the recorded times (all strictly positive).

    ``values`` are the raw vector averages; ``norms`` apply the optional 0/1
    component mask first.
    """

    k: float
    times: np.ndarray
    values: np.ndarray
    norms: np.ndarray
    projection: np.ndarray | None

    def __post_init__(self):
        self.times.setflags(write=False)
        self.values.setflags(write=False)
        self.norms.setflags(write=False)

    @property
    def final_value(self) -> np.ndarray:
        return self.values[-1]


def _record_indices(last_step: int, stride: int) -> np.ndarray:
    idx = np.arange(0, last_step + 1, stride, dtype=np.intp)
    if idx[-1] != last_step:
        idx = np.append(idx, last_step)
    return idx


def _problem_digest(kind: str, a: np.ndarray, f: np.ndarray, forcing_k: float | None) -> str:
    payload = b"|".join(
        [
            kind.encode(),
            np.ascontiguousarray(a).tobytes(),
            np.ascontiguousarray(f).tobytes(),
            repr(forcing_k).encode(),
        ]
    )
    return sha256_hex(payload)


def _check_dense_budget(n_steps: int, n: int, arrays: int) -> None:
    need = (n_steps + 1) * n * 16 * arrays
    if need > _DENSE_BYTES_CAP:
        raise ConfigurationError(
            f"evolve: dense storage {need / 2**30:.1f} GiB exceeds the cap; increase dt or shrink T"
        )


def _spectral_radius(op: LinearOperator, oracle: SpectralOracle | None) -> float:
    if oracle is not None:
        return oracle.spectral_radius
    return float(np.max(np.abs(np.linalg.eigvals(op.entries))))


def _validate_rk4_dt(cfg: EvolveConfig, radius: float) -> None:
    limit = dt_stability_limit(radius)
    if cfg.dt > limit * (1.0 + 1e-12):
        raise ConfigurationError(
            f"evolve.dt: {cfg.dt:g} exceeds the rk4 stability limit {limit:g} for spectral radius {radius:g}"
        )


def _finish(kind, cfg, w, v, c, overflow, digest) -> WaveTrajectory:
    last = w.shape[0] - 1
    truncated = overflow >= 0
    return WaveTrajectory(
        kind=kind,
        config=cfg,
        record_indices=_record_indices(last, cfg.sample_stride),
        dense_dt=cfg.dt,
        dense_samples=w,
        dense_cumulative=c,
        dense_velocity=v,
        truncated=truncated,
        truncated_at=last * cfg.dt if truncated else None,
        source_digest=digest,
    )


def _trapezoid_cumulative(w: np.ndarray, dt: float) -> np.ndarray:
    c = np.empty_like(w)
    c[0] = 0.0
    np.cumsum((w[:-1] + w[1:]) * (0.5 * dt), axis=0, out=c[1:])
    return c


def _sin_over(s: complex, t: np.ndarray) -> np.ndarray:
    # sin(s t)/s with the s -> 0 limit t
    if s == 0:
        return t.astype(np.complex128)
    return np.sin(s * t) / s


def _growth_cutoff(smax_imag: float, dt: float, n_steps: int) -> int:
    # largest step count before exp(|Im s| t) can cross the guard
    if smax_imag <= 0.0:
        return n_steps
    t_cut = math.log(GUARD_NORM) / smax_imag
    return min(n_steps, max(1, int(t_cut / dt)))


def _truncate_by_guard(w: np.ndarray) -> int:
    # first dense index whose sup-norm exceeds the guard, or -1
    sup = np.max(np.abs(w), axis=1)
    over = np.nonzero(sup > GUARD_NORM)[0]
    return int(over[0]) if over.size else -1


def evolve_free(
    op: LinearOperator, f: np.ndarray, cfg: EvolveConfig, oracle: SpectralOracle | None = None
) -> WaveTrajectory:
    """Free wave trajectory: w(0) = 0, w'(0) = f."""
    if cfg.forcing_k is not None:
        raise ConfigurationError("evolve.forcing_k: must be absent for the free problem")
    f = np.asarray(f, dtype=np.complex128).ravel()
    if f.size != op.n:
        raise ConfigurationError(f"f: length {f.size} does not match operator size {op.n}")
    digest = _problem_digest("free", op.entries, f, None)
    _check_dense_budget(cfg.n_steps, op.n, 3 if cfg.keep_velocity else 2)

    if cfg.method == "rk4":
        _validate_rk4_dt(cfg, _spectral_radius(op, oracle))
        w, v, c, overflow = _kernels.rk4_evolve(
            op.entries, f, cfg.dt, cfg.n_steps, forcing_k=None, guard=GUARD_NORM, keep_velocity=cfg.keep_velocity
        )
        return _finish("free", cfg, w, v, c, overflow, digest)

    oracle = oracle if oracle is not None else spectral_oracle(op)
    if not oracle.diagonalizable:
        raise UnsupportedOperatorError("spectral evolution needs a diagonalizable oracle")
    roots = np.sqrt(oracle.eigenvalues.astype(np.complex128))
    n_eval = _growth_cutoff(float(np.max(np.abs(roots.imag))), cfg.dt, cfg.n_steps)
    t = np.arange(n_eval + 1) * cfg.dt
    w = np.zeros((n_eval + 1, op.n), dtype=np.complex128)
    v = np.zeros_like(w) if cfg.keep_velocity else None
    for s, proj in zip(roots, oracle.projections):
        mode = proj @ f
        w += np.outer(_sin_over(complex(s), t), mode)
        if v is not None:
            v += np.outer(np.cos(complex(s) * t), mode)
    cut = _truncate_by_guard(w)
    if cut >= 0:
        w = w[: cut + 1]
        if v is not None:
            v = v[: cut + 1]
    overflow = (w.shape[0] - 1) if w.shape[0] - 1 < cfg.n_steps else -1
    c = _trapezoid_cumulative(w, cfg.dt)
    return _finish("free", cfg, w, v, c, overflow, digest)


def _forced_mode(z: complex, k: float, t: np.ndarray, tol: float, want_velocity: bool):
    """Closed-form forced response of one mode, unit amplitude.

    Non-resonant: (e^{-ikt} - cos(s t) + (ik/s) sin(s t)) / (z - k^2).
    Resonant (z = k^2): (i/(2k)) (t e^{-ikt} - sin(kt)/k), and t^2/2 when
    k = 0 as well.
    """
    s = complex(np.sqrt(complex(z)))
    phase = np.exp(-1j * k * t)
    if abs(z - k * k) <= tol * (1.0 + k * k):
        if abs(k) <= math.sqrt(tol):
            u = 0.5 * t.astype(np.complex128) ** 2
            du = t.astype(np.complex128)
        else:
            u = (0.5j / k) * (t * phase - np.sin(k * t) / k)
            du = (0.5j / k) * (phase - 1j * k * t * phase - np.cos(k * t))
        return u, (du if want_velocity else None)
    denom = z - k * k
    u = (phase - np.cos(s * t) + 1j * k * _sin_over(s, t)) / denom
    du = None
    if want_velocity:
        du = (-1j * k * phase + s * np.sin(s * t) + 1j * k * np.cos(s * t)) / denom
    return u, du


def evolve_forced(
    op: LinearOperator, f: np.ndarray, cfg: EvolveConfig, oracle: SpectralOracle | None = None
) -> WaveTrajectory:
    """Forced trajectory: u'' + A u = f e^{-i k t}, u(0) = u'(0) = 0."""
    if cfg.forcing_k is None:
        raise ConfigurationError("evolve.forcing_k: required for the forced problem")
    f = np.asarray(f, dtype=np.complex128).ravel()
    if f.size != op.n:
        raise ConfigurationError(f"f: length {f.size} does not match operator size {op.n}")
    k = float(cfg.forcing_k)
    digest = _problem_digest("forced", op.entries, f, k)
    _check_dense_budget(cfg.n_steps, op.n, 3 if cfg.keep_velocity else 2)

    if cfg.method == "rk4":
        _validate_rk4_dt(cfg, _spectral_radius(op, oracle))
        w, v, c, overflow = _kernels.rk4_evolve(
            op.entries, f, cfg.dt, cfg.n_steps, forcing_k=k, guard=GUARD_NORM, keep_velocity=cfg.keep_velocity
        )
        return _finish("forced", cfg, w, v, c, overflow, digest)

    oracle = oracle if oracle is not None else spectral_oracle(op)
    if not oracle.diagonalizable:
        raise UnsupportedOperatorError("spectral evolution needs a diagonalizable oracle")
    roots = np.sqrt(oracle.eigenvalues.astype(np.complex128))
    n_eval = _growth_cutoff(float(np.max(np.abs(roots.imag))), cfg.dt, cfg.n_steps)
    t = np.arange(n_eval + 1) * cfg.dt
    tol = real_tolerance(oracle.spectral_radius)
    w = np.zeros((n_eval + 1, op.n), dtype=np.complex128)
    v = np.zeros_like(w) if cfg.keep_velocity else None
    for z, proj in zip(oracle.eigenvalues, oracle.projections):
        mode = proj @ f
        u, du = _forced_mode(complex(z), k, t, tol, cfg.keep_velocity)
        w += np.outer(u, mode)
        if v is not None:
            v += np.outer(du, mode)
    cut = _truncate_by_guard(w)
    if cut >= 0:
        w = w[: cut + 1]
        if v is not None:
            v = v[: cut + 1]
    overflow = (w.shape[0] - 1) if w.shape[0] - 1 < cfg.n_steps else -1
    c = _trapezoid_cumulative(w, cfg.dt)
    return _finish("forced", cfg, w, v, c, overflow, digest)


def synthetic_trajectory(modes: Sequence[tuple[float, np.ndarray]], cfg: EvolveConfig) -> WaveTrajectory:
    """Directly injected superposition sum_j e^{-i k_j t} v_j (no operator)."""
    if not modes:
        raise UsageError("synthetic trajectory needs at least one mode")
    n = np.asarray(modes[0][1]).size
    t = np.arange(cfg.n_steps + 1) * cfg.dt
    w = np.zeros((t.size, n), dtype=np.complex128)
    for k_j, v_j in modes:
        v_j = np.asarray(v_j, dtype=np.complex128).ravel()
        if v_j.size != n:
            raise UsageError("synthetic trajectory modes must share one dimension")
        w += np.outer(np.exp(-1j * float(k_j) * t), v_j)
    c = _trapezoid_cumulative(w, cfg.dt)
    digest = sha256_hex(
        b"synthetic|" + b"|".join(repr(float(k)).encode() + v.tobytes() for k, v in modes)
    )
    return _finish("synthetic", cfg, w, None, c, -1, digest)


def _positive_record_indices(traj: WaveTrajectory) -> np.ndarray:
    idx = traj.record_indices
    return idx[idx > 0]


def modulated_average(
    traj: WaveTrajectory, k: float, projection: np.ndarray | None = None
) -> ModulatedAverageSeries:
    """Running modulated average of a trajectory at one frequency."""
    rec = _positive_record_indices(traj)
    values = _kernels.modulated_scan(traj.dense_samples, traj.dense_dt, [float(k)], rec)[0]
    times = rec * traj.dense_dt
    norms = _masked_norms(values, projection)
    return ModulatedAverageSeries(
        k=float(k), times=times, values=values, norms=norms, projection=projection
    )


def modulated_many(
    traj: WaveTrajectory, ks: np.ndarray, projection: np.ndarray | None = None
):
    """Vectorized scan over a frequency grid.

    Returns (times, values, norms) with values of shape (len(ks), r, n).
    """
    rec = _positive_record_indices(traj)
    values = _kernels.modulated_scan(traj.dense_samples, traj.dense_dt, np.asarray(ks, float), rec)
    times = rec * traj.dense_dt
    norms = np.stack([_masked_norms(block, projection) for block in values])
    return times, values, norms


def modulated_final(traj: WaveTrajectory, ks: np.ndarray, projection: np.ndarray | None = None):
    """Final-time modulated averages only, for cheap local refinement.

    Returns (values, norms) with values of shape (len(ks), n).
    """
    last = traj.dense_samples.shape[0] - 1
    values = _kernels.modulated_scan(
        traj.dense_samples, traj.dense_dt, np.asarray(ks, float), np.array([last], dtype=np.intp)
    )[:, 0, :]
    return values, _masked_norms(values, projection)


def _masked_norms(values: np.ndarray, projection: np.ndarray | None) -> np.ndarray:
    if projection is None:
        return np.linalg.norm(values, axis=-1)
    mask = np.asarray(projection, dtype=float).ravel()
    if mask.size != values.shape[-1]:
        raise UsageError("projection mask length does not match trajectory dimension")
    return np.linalg.norm(values * mask, axis=-1)


@dataclass(frozen=True, eq=False)
class RefinementReport:
    """Step-halving comparison of two runs of the same problem."""

    times: np.ndarray
    abs_diff: np.ndarray
    rel_diff: np.ndarray
    max_abs_diff: float
    max_rel_diff: float
    flagged: bool
    rtol: float


def richardson_refine(coarse: WaveTrajectory, fine: WaveTrajectory, rtol: float = 1e-6) -> RefinementReport:
    """Compare a run against its half-step twin at the shared sample times."""
    if coarse.kind != fine.kind or coarse.config.method != fine.config.method:
        raise UsageError("refinement pair must share problem kind and method")
    if coarse.source_digest != fine.source_digest:
        raise UsageError("refinement pair was generated from different problems")
    if abs(fine.dense_dt * 2.0 - coarse.dense_dt) > 1e-12 * coarse.dense_dt:
        raise UsageError("refinement pair must differ by exactly a factor 2 in dt")
    if abs(coarse.config.effective_T - fine.config.effective_T) > coarse.dense_dt:
        raise UsageError("refinement pair must share the time window")

    idx_c = coarse.record_indices
    idx_f = idx_c * 2
    keep = idx_f < fine.dense_samples.shape[0]
    idx_c = idx_c[keep]
    idx_f = idx_f[keep]
    wc = coarse.dense_samples[idx_c]
    wf = fine.dense_samples[idx_f]
    diff = np.linalg.norm(wc - wf, axis=1)
    scale = np.maximum(1.0, np.maximum.accumulate(np.linalg.norm(wf, axis=1)))
    rel = diff / scale
    return RefinementReport(
        times=idx_c * coarse.dense_dt,
        abs_diff=diff,
        rel_diff=rel,
        max_abs_diff=float(diff.max()),
        max_rel_diff=float(rel.max()),
        flagged=bool(rel.max() > rtol),
        rtol=rtol,
    )


def energy_series(traj: WaveTrajectory, op: LinearOperator):
    """E(t) = |w'|^2 + Re<A w, w> at the recorded times (needs velocities)."""
    if traj.dense_velocity is None:
        raise UsageError("energy needs a trajectory evolved with keep_velocity")
    w = traj.samples
    v = traj.velocities
    kinetic = np.sum(np.abs(v) ** 2, axis=1)
    potential = np.real(np.einsum("ti,ti->t", (w @ op.entries.T).conj(), w))
    return traj.times, kinetic + potential.real


def write_trajectory_csv(traj: WaveTrajectory, path, norms_only: bool = False) -> None:
    """Recorded rows as RFC-4180 CSV."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if norms_only:
            writer.writerow(["t", "norm_w", "norm_c"])
            nw = np.linalg.norm(traj.samples, axis=1)
            nc = np.linalg.norm(traj.cumulative, axis=1)
            for t, a, b in zip(traj.times, nw, nc):
                writer.writerow([format_float(t), format_float(a), format_float(b)])
            return
        n = traj.n
        header = ["t"]
        for j in range(n):
            header += [f"w{j}_re", f"w{j}_im"]
        for j in range(n):
            header += [f"c{j}_re", f"c{j}_im"]
        writer.writerow(header)
        for t, row_w, row_c in zip(traj.times, traj.samples, traj.cumulative):
            row = [format_float(t)]
            for z in row_w:
                row += [format_float(z.real), format_float(z.imag)]
            for z in row_c:
                row += [format_float(z.real), format_float(z.imag)]
            writer.writerow(row)
