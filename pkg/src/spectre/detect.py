"""Time-domain detectors and their direct-spectral adjudication.

Verdicts come in two independent flavors: trajectory-side (growth of the
running integral, tails of modulated averages, long-time averages of forced
solutions) and oracle-side (eigenvalue buckets, resolvent solves).  The
laboratory's whole point is running both and comparing, so nothing in this
module lets one side peek at the other while measuring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from spectre.errors import (
    AmplitudeUndefinedError,
    InsufficientDataError,
    PoleProximityError,
    PreconditionError,
    TheoremInapplicableError,
    UsageError,
)
from spectre.evolution import (
    EvolveConfig,
    WaveTrajectory,
    evolve_forced,
    evolve_free,
    modulated_average,
    modulated_final,
    modulated_many,
)
from spectre.laplace import DecompositionReport, decompose, resolvent_solve_k
from spectre.operators import (
    GenericityReport,
    LinearOperator,
    SpectralOracle,
    SpectrumClassification,
    check_generic,
)
from spectre.serialize import vector_to_pairs

DEFAULT_EPS_GROWTH = 1e-3
DEFAULT_EXCLUSION_RADIUS = 0.1


@dataclass(frozen=True)
class GrowthEstimate:
    """Growth classification of a norm series.

    ``alpha`` is the slope of a log-linear fit to the running-max envelope on
    the trailing window.  ``exponential`` additionally requires the
    log-linear model to beat a log-in-log-t (polynomial) model, which keeps
    power-law growth out of the exponential bucket.
    """

    alpha: float
    window: tuple
    fit_residual: float
    poly_residual: float
    stabilized: bool
    verdict: str

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "window": list(self.window),
            "fit_residual": self.fit_residual,
            "poly_residual": self.poly_residual,
            "stabilized": self.stabilized,
            "verdict": self.verdict,
        }


def growth_rate(
    times: np.ndarray,
    norms: np.ndarray,
    eps_growth: float = DEFAULT_EPS_GROWTH,
    window_frac: float = 0.5,
    residual_tol: float = 0.1,
    stabilize_rtol: float = 1e-3,
) -> GrowthEstimate:
    """Fit the trailing envelope of a norm series and classify its growth."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if times.size != norms.size or times.size < 2:
        raise UsageError("times and norms must be equal-length series")
    envelope = np.maximum.accumulate(norms)
    t_lo = (1.0 - window_frac) * times[-1]
    window = times >= t_lo
    if int(window.sum()) < 10:
        raise InsufficientDataError(f"growth fit needs at least 10 samples in the window, got {int(window.sum())}")
    t_w = times[window]
    y = np.log(np.maximum(envelope[window], 1e-300))

    start_env = envelope[window][0]
    stabilized = bool(envelope[-1] <= start_env * (1.0 + stabilize_rtol) + 1e-300)

    design_exp = np.vstack([np.ones(t_w.size), t_w]).T
    coef, *_ = np.linalg.lstsq(design_exp, y, rcond=None)
    alpha = float(coef[1])
    fit_residual = float(np.sqrt(np.mean((y - design_exp @ coef) ** 2)))

    design_poly = np.vstack([np.ones(t_w.size), np.log(np.maximum(t_w, 1e-300))]).T
    coef_p, *_ = np.linalg.lstsq(design_poly, y, rcond=None)
    poly_residual = float(np.sqrt(np.mean((y - design_poly @ coef_p) ** 2)))

    # a rate only counts as exponential when the window actually witnessed
    # material growth; slow envelope exploration of a bounded quasi-periodic
    # signal can fit a tiny positive slope tightly
    span = float(t_w[-1] - t_w[0])
    significant = alpha * span >= np.log(4.0)
    if stabilized:
        verdict = "bounded"
    elif (
        alpha > eps_growth
        and significant
        and fit_residual < residual_tol
        and fit_residual <= poly_residual
    ):
        verdict = "exponential"
    else:
        verdict = "subexponential"
    return GrowthEstimate(
        alpha=alpha,
        window=(float(t_lo), float(times[-1])),
        fit_residual=fit_residual,
        poly_residual=poly_residual,
        stabilized=stabilized,
        verdict=verdict,
    )


@dataclass(frozen=True, eq=False)
class UnstableReport:
    """Stability verdict from the growth of the running integral."""

    stable: bool
    growth: GrowthEstimate
    genericity: GenericityReport | None
    trajectory: WaveTrajectory
    warnings: tuple

    def to_json(self) -> dict:
        return {
            "stable": self.stable,
            "growth": self.growth.to_json(),
            "genericity": self.genericity.to_json() if self.genericity else None,
            "warnings": list(self.warnings),
        }


def detect_unstable(
    op: LinearOperator,
    f: np.ndarray,
    cfg: EvolveConfig,
    oracle: SpectralOracle | None = None,
    eps_growth: float = DEFAULT_EPS_GROWTH,
) -> UnstableReport:
    """Stability from one free trajectory: does its running integral stay
    subexponential?

    Exponential growth of ``C(t) = integral_0^t w`` is the time-domain
    signature of spectrum off the positive real axis.  A trajectory cut short
    by the overflow guard still classifies from the data before the cut.
    """
    traj = evolve_free(op, f, cfg, oracle)
    norms = np.linalg.norm(traj.cumulative, axis=1)
    growth = growth_rate(traj.times, norms, eps_growth=eps_growth)
    warnings = []
    genericity = None
    if oracle is not None and oracle.diagonalizable:
        genericity = check_generic(oracle, f)
        if not genericity.generic:
            warnings.append("excitation misses some eigenmodes; unseen spectrum cannot be detected")
    stable = growth.verdict != "exponential"
    return UnstableReport(
        stable=stable,
        growth=growth,
        genericity=genericity,
        trajectory=traj,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True, eq=False)
class EmbeddedDetection:
    """One flagged resonance: refined frequency and amplitude estimate."""

    k: float
    v: np.ndarray
    k_lo: float
    k_hi: float

    def to_json(self) -> dict:
        return {"k": self.k, "v": vector_to_pairs(self.v), "cell": [self.k_lo, self.k_hi]}


@dataclass(frozen=True, eq=False)
class EmbeddedScan:
    """Tail fits of modulated-average norms over a frequency grid.

    Per grid point the trailing window of ``norm M(k, t)`` is fitted to
    ``a + b/t``; a frequency is flagged when the persistent level ``a``
    clears ``tol_flag`` and the fit is tight.  Flagged runs are refined on a
    10x finer local grid.
    """

    ks: np.ndarray
    fit_a: np.ndarray
    fit_b: np.ndarray
    fit_residual: np.ndarray
    flagged: np.ndarray
    detections: tuple
    tol_flag: float
    window: tuple
    projection: np.ndarray | None

    def to_json(self) -> dict:
        return {
            "ks": self.ks.tolist(),
            "fit_a": self.fit_a.tolist(),
            "fit_b": self.fit_b.tolist(),
            "fit_residual": self.fit_residual.tolist(),
            "flagged": self.flagged.tolist(),
            "detections": [d.to_json() for d in self.detections],
            "tol_flag": self.tol_flag,
            "window": list(self.window),
        }


def detect_embedded(
    op: LinearOperator,
    f: np.ndarray,
    k_grid: tuple,
    cfg: EvolveConfig,
    oracle: SpectralOracle | None = None,
    projection: np.ndarray | None = None,
    base: UnstableReport | None = None,
    tol_flag: float | None = None,
) -> EmbeddedScan:
    """Scan a frequency grid for persistent modulated averages.

    ``k_grid`` is (lo, hi, step).  Needs a stable trajectory; the free run
    from ``base`` is reused when provided so a scenario evolves only once.
    """
    lo, hi, step = (float(x) for x in k_grid)
    if not (step > 0 and hi >= lo >= 0):
        raise UsageError("k_grid must satisfy 0 <= lo <= hi with positive step")
    if base is None:
        base = detect_unstable(op, f, cfg, oracle)
    if not base.stable:
        raise PreconditionError("embedded scan needs a stable trajectory; growth verdict was exponential")
    traj = base.trajectory
    f = np.asarray(f, dtype=np.complex128).ravel()
    if tol_flag is None:
        tol_flag = 1e-3 * float(np.linalg.norm(f))

    n_cells = int(round((hi - lo) / step))
    ks = lo + step * np.arange(n_cells + 1)
    times, _, norms = modulated_many(traj, ks, projection)

    t_lo = 0.5 * times[-1]
    window = times >= t_lo
    if int(window.sum()) < 10:
        raise InsufficientDataError("embedded scan needs at least 10 recorded samples in the tail window")
    t_w = times[window]
    design = np.vstack([np.ones(t_w.size), 1.0 / t_w]).T
    coef, *_ = np.linalg.lstsq(design, norms[:, window].T, rcond=None)
    fit_a, fit_b = coef[0], coef[1]
    resid = norms[:, window].T - design @ coef
    fit_residual = np.sqrt(np.mean(resid**2, axis=0))
    flagged = (fit_a > tol_flag) & (fit_residual < 0.1 * np.maximum(fit_a, 1e-300))

    detections = []
    if np.any(flagged):
        idx = np.nonzero(flagged)[0]
        groups = np.split(idx, np.nonzero(np.diff(idx) > 1)[0] + 1)
        sub = step / 10.0
        for grp in groups:
            k_lo = max(0.0, ks[grp[0]] - step)
            k_hi = ks[grp[-1]] + step
            fine = k_lo + sub * np.arange(int(round((k_hi - k_lo) / sub)) + 1)
            fine_vals, fine_norms = modulated_final(traj, fine, projection)
            best = int(np.argmax(fine_norms))
            detections.append(
                EmbeddedDetection(
                    k=float(fine[best]),
                    v=fine_vals[best],
                    k_lo=float(k_lo),
                    k_hi=float(k_hi),
                )
            )
    return EmbeddedScan(
        ks=ks,
        fit_a=fit_a,
        fit_b=fit_b,
        fit_residual=fit_residual,
        flagged=flagged,
        detections=tuple(detections),
        tol_flag=tol_flag,
        window=(float(t_lo), float(times[-1])),
        projection=projection,
    )


def amplitude_closed_form(decomp: DecompositionReport, k: float) -> np.ndarray:
    """v(k) = W1(-ik) + sum_j i v_j / (k - k_j) from the pole decomposition.

    Valid only when no growing modes are present (all right-half residues
    vanish), and singular exactly at the axis frequencies.
    """
    k = float(k)
    scale = 1.0
    if decomp.imag_poles:
        scale = max(1.0, max(float(np.linalg.norm(v)) for _, v in decomp.imag_poles))
    for kappa, b in decomp.right_poles:
        if float(np.linalg.norm(b)) > 1e-12 * scale:
            raise TheoremInapplicableError(
                f"closed-form amplitude undefined with a growing mode at Re p = {kappa.real:g}"
            )
    value = np.asarray(decomp.w1_sampler(-1j * k), dtype=np.complex128)
    for k_j, v_j in decomp.imag_poles:
        if abs(k - k_j) <= 1e-9 * (1.0 + abs(k_j)):
            raise AmplitudeUndefinedError(f"forcing frequency {k:g} hits the resonance at {k_j:g}")
        value = value + 1j * v_j / (k - k_j)
    return value


@dataclass(frozen=True, eq=False)
class AmplitudeResult:
    """Long-time average of a forced trajectory and its cross-checks.

    ``v_avg`` is the measured limit; ``residual`` is how well it solves
    (A - k^2) v = f; ``v_resolvent`` and ``v_closed`` are the two direct
    routes when available.  ``convergence_rate`` is the slope of the gap to
    the reference at T, T/2, T/4 (1.0 means the expected 1/T approach).
    """

    k: float
    v_avg: np.ndarray
    residual: float
    v_resolvent: np.ndarray | None
    v_closed: np.ndarray | None
    gap_times: np.ndarray
    gaps: np.ndarray
    convergence_rate: float | None
    avg_resolvent_gap: float | None
    notes: tuple

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "v_avg": vector_to_pairs(self.v_avg),
            "residual": self.residual,
            "v_resolvent": vector_to_pairs(self.v_resolvent) if self.v_resolvent is not None else None,
            "v_closed": vector_to_pairs(self.v_closed) if self.v_closed is not None else None,
            "gap_times": self.gap_times.tolist(),
            "gaps": self.gaps.tolist(),
            "convergence_rate": self.convergence_rate,
            "avg_resolvent_gap": self.avg_resolvent_gap,
            "notes": list(self.notes),
        }


def limiting_amplitude(
    op: LinearOperator,
    f: np.ndarray,
    k: float,
    cfg: EvolveConfig,
    oracle: SpectralOracle | None = None,
    detected_kj: tuple = (),
    exclusion_radius: float = DEFAULT_EXCLUSION_RADIUS,
    decomposition: DecompositionReport | None = None,
    stability: UnstableReport | None = None,
) -> AmplitudeResult:
    """Measure lim (1/t) integral_0^t e^{iks} u(s) ds for the forced problem.

    Refuses frequencies inside the exclusion radius of a detected resonance;
    there the average diverges and no amplitude exists.  Stability of the
    operator is a precondition and is verified on a free run when the caller
    has not already done so.
    """
    k = float(k)
    f = np.asarray(f, dtype=np.complex128).ravel()
    for k_j in detected_kj:
        if abs(k - float(k_j)) < exclusion_radius:
            raise AmplitudeUndefinedError(
                f"forcing frequency {k:g} lies within the exclusion radius {exclusion_radius:g} of resonance {float(k_j):g}"
            )
    if stability is None:
        free_cfg = replace(cfg, forcing_k=None)
        stability = detect_unstable(op, f, free_cfg, oracle)
    if not stability.stable:
        raise PreconditionError("limiting amplitude needs a stable operator; growth verdict was exponential")

    notes = []
    forced_cfg = replace(cfg, forcing_k=k)
    traj = evolve_forced(op, f, forced_cfg, oracle)
    series = modulated_average(traj, k)
    v_avg = series.final_value
    residual = float(np.linalg.norm(op.entries @ v_avg - k * k * v_avg - f))

    v_resolvent = None
    try:
        v_resolvent = resolvent_solve_k(op, f, k * k)
    except PoleProximityError:
        notes.append("direct solve at k^2 rejected: too close to an eigenvalue")

    v_closed = None
    if decomposition is None and oracle is not None and oracle.diagonalizable:
        try:
            decomposition = decompose(oracle, f)
        except Exception as exc:  # noqa: BLE001
            notes.append(f"decomposition unavailable: {exc}")
    if decomposition is not None:
        try:
            v_closed = amplitude_closed_form(decomposition, k)
        except (TheoremInapplicableError, AmplitudeUndefinedError) as exc:
            notes.append(f"closed form unavailable: {exc}")

    reference = v_resolvent if v_resolvent is not None else v_closed
    gap_times = []
    gaps = []
    rate = None
    if reference is not None:
        # the pointwise gap is |oscillation(t)| / t; averaging over a trailing
        # window at each probe time keeps the 1/t scaling and kills the aliasing
        t_eff = series.times[-1]
        all_gaps = np.linalg.norm(series.values - reference, axis=1)
        for frac in (0.25, 0.5, 1.0):
            t_hi = frac * t_eff
            rows = (series.times >= 0.85 * t_hi) & (series.times <= t_hi)
            gap_times.append(float(t_hi))
            if int(rows.sum()) >= 3:
                gaps.append(float(np.mean(all_gaps[rows])))
            else:
                pos = int(np.argmin(np.abs(series.times - t_hi)))
                gaps.append(float(all_gaps[pos]))
        if min(gaps) > 1e-14:
            slope = np.polyfit(np.log(gap_times), np.log(gaps), 1)[0]
            rate = float(-slope)
        else:
            notes.append("gap at machine floor; convergence rate not fitted")
    avg_gap = float(np.linalg.norm(v_avg - v_resolvent)) if v_resolvent is not None else None
    return AmplitudeResult(
        k=k,
        v_avg=v_avg,
        residual=residual,
        v_resolvent=v_resolvent,
        v_closed=v_closed,
        gap_times=np.array(gap_times),
        gaps=np.array(gaps),
        convergence_rate=rate,
        avg_resolvent_gap=avg_gap,
        notes=tuple(notes),
    )


@dataclass(frozen=True, eq=False)
class DetectionVerdict:
    """Combined verdict with the oracle cross-examination.

    ``oracle_agreement`` is None when the spectrum violates the half-plane
    layout the detectors assume; the comparison would be apples to oranges.
    """

    stable: bool
    detections: tuple
    assumption_a_ok: bool
    generic_f: bool | None
    coverage: tuple | None
    oracle_agreement: dict | None

    def to_json(self) -> dict:
        return {
            "stable": self.stable,
            "detections": [d.to_json() for d in self.detections],
            "assumption_a_ok": self.assumption_a_ok,
            "generic_f": self.generic_f,
            "coverage": list(self.coverage) if self.coverage else None,
            "oracle_agreement": self.oracle_agreement,
        }


def adjudicate(
    classification: SpectrumClassification,
    unstable_report: UnstableReport,
    embedded_scan: EmbeddedScan | None = None,
) -> DetectionVerdict:
    """Compare trajectory verdicts with the spectral ground truth.

    Embedded-frequency agreement only judges oracle frequencies inside the
    scanned range, to one grid step; frequencies outside the scan cannot be
    found and are reported as uncovered instead of as disagreements.
    """
    detections = embedded_scan.detections if embedded_scan is not None else ()
    coverage = None
    if embedded_scan is not None:
        coverage = (float(embedded_scan.ks[0]), float(embedded_scan.ks[-1]))
    generic_f = None
    if unstable_report.genericity is not None:
        generic_f = unstable_report.genericity.generic

    agreement = None
    if classification.assumption_a_ok:
        oracle_stable = len(classification.unstable) == 0
        agreement = {"stable": bool(unstable_report.stable == oracle_stable)}
        if embedded_scan is not None:
            step = float(embedded_scan.ks[1] - embedded_scan.ks[0]) if embedded_scan.ks.size > 1 else 0.0
            tol = step * (1.0 + 1e-9)
            lo, hi = coverage
            covered = [k for k in classification.positive_k if lo <= k <= hi]
            uncovered = [k for k in classification.positive_k if not lo <= k <= hi]
            det_ks = [d.k for d in detections]
            matched = [any(abs(dk - k) <= tol for dk in det_ks) for k in covered]
            spurious = [dk for dk in det_ks if not any(abs(dk - k) <= tol for k in covered)]
            agreement["embedded"] = bool(all(matched) and not spurious)
            agreement["embedded_expected"] = covered
            agreement["embedded_matched"] = matched
            agreement["embedded_spurious"] = spurious
            agreement["embedded_uncovered"] = uncovered
    return DetectionVerdict(
        stable=unstable_report.stable,
        detections=detections,
        assumption_a_ok=classification.assumption_a_ok,
        generic_f=generic_f,
        coverage=coverage,
        oracle_agreement=agreement,
    )
