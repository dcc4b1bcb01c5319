"""Built-in golden checks over small planted instances.

Each check exercises one pipeline stage against an answer computable by hand
or by a direct linear solve.  The suite is the fast self-test behind the
``verify`` subcommand: a few seconds, no files, one PASS/FAIL line per check.
"""

from __future__ import annotations

import numpy as np

from spectre import _kernels
from spectre._kernels import _reference
from spectre.detect import detect_embedded, detect_unstable, growth_rate, limiting_amplitude
from spectre.evolution import EvolveConfig, evolve_free, modulated_average, synthetic_trajectory
from spectre.laplace import (
    decompose,
    integration_rule_check,
    limiting_absorption,
    plancherel_check,
)
from spectre.operators import (
    OperatorSpec,
    build_operator,
    classify_spectrum,
    p_plane_poles,
    spectral_oracle,
)


def _op(kind, **params):
    return build_operator(OperatorSpec(kind=kind, params=params))


def _check_free_evolution():
    op = _op("diagonal", eigenvalues=[1.0])
    cfg = EvolveConfig(T=20.0, dt=0.01, method="rk4")
    traj = evolve_free(op, np.array([1.0 + 0.0j]), cfg)
    err = float(np.max(np.abs(traj.dense_samples[:, 0] - np.sin(traj.dense_times))))
    return err <= 1e-6, f"max deviation from sine solution {err:.2e} (tol 1e-6)"


def _check_axis_poles():
    op = _op("diagonal", eigenvalues=[1.0])
    oracle = spectral_oracle(op)
    poles = p_plane_poles(oracle, np.array([1.0 + 0.0j]))
    got = sorted(((p.p0, p.residue[0]) for p in poles), key=lambda t: (t[0].imag, t[0].real))
    want = [(-1j, 0.5j), (1j, -0.5j)]
    err = max(abs(g[0] - w[0]) + abs(g[1] - w[1]) for g, w in zip(got, want))
    return len(got) == 2 and err <= 1e-12, f"pole/residue deviation {err:.2e} (tol 1e-12)"


def _check_pure_mode_average():
    v = np.array([1.0 + 0.0j, 0.0])
    cfg = EvolveConfig(T=200.0, dt=0.05, method="spectral", sample_stride=10)
    traj = synthetic_trajectory([(2.0, v)], cfg)
    on = modulated_average(traj, 2.0)
    off = modulated_average(traj, 1.5)
    err_on = float(np.linalg.norm(on.final_value - v))
    bound_off = 2.0 * float(np.linalg.norm(v)) / (0.5 * off.times[-1])
    ok = err_on <= 1e-9 and off.norms[-1] <= bound_off * 1.01
    return ok, (
        f"on-resonance error {err_on:.2e}, off-resonance tail {off.norms[-1]:.2e} "
        f"within bound {bound_off:.2e}"
    )


def _check_stability_detector():
    f2 = np.array([1.0 + 0.0j, 1.0])
    cfg = EvolveConfig(T=60.0, dt=0.05, method="rk4")
    unstable_op = _op("diagonal", eigenvalues=[-0.25, 1.0])
    rep_u = detect_unstable(unstable_op, f2, cfg, spectral_oracle(unstable_op))
    stable_op = _op("diagonal", eigenvalues=[1.0, 4.0])
    rep_s = detect_unstable(stable_op, f2, cfg, spectral_oracle(stable_op))
    alpha = rep_u.growth.alpha
    ok = (not rep_u.stable) and rep_s.stable and abs(alpha - 0.5) <= 0.02
    return ok, f"growth rate {alpha:.4f} (expect 0.5), stable case verdict {rep_s.growth.verdict}"


def _check_embedded_scan():
    op = _op("diagonal", eigenvalues=[1.0, 4.0])
    f = np.array([1.0 + 0.0j, 1.0])
    cfg = EvolveConfig(T=500.0, dt=0.05, method="spectral", sample_stride=10)
    scan = detect_embedded(op, f, (0.5, 2.5, 0.05), cfg, spectral_oracle(op))
    ks = sorted(round(d.k, 2) for d in scan.detections)
    ok = ks == [1.0, 2.0]
    return ok, f"detected frequencies {ks} (expect [1.0, 2.0])"


def _check_forced_average():
    op = _op("diagonal", eigenvalues=[1.0, 4.0])
    f = np.array([1.0 + 0.0j, 1.0])
    k = float(np.sqrt(2.0))
    cfg = EvolveConfig(T=1500.0, dt=0.05, method="spectral", sample_stride=10, forcing_k=k)
    amp = limiting_amplitude(op, f, k, cfg, spectral_oracle(op), detected_kj=(1.0, 2.0))
    direct = np.linalg.solve(op.entries - k * k * np.eye(op.n), f)
    err = float(np.linalg.norm(amp.v_avg - direct))
    return err <= 1e-2, f"long-time average vs direct solve {err:.2e} (tol 1e-2)"


def _check_resolvent_reconstruction():
    op = _op("diagonal", eigenvalues=[-1.0, 2.0, 5.0])
    f = np.array([1.0 + 0.0j, 1.0, 1.0])
    rep = decompose(spectral_oracle(op), f)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        p = complex(rng.uniform(0.3, 2.0), rng.uniform(-3.0, 3.0))
        total = rep.w1_sampler(p)
        for kj, vj in rep.imag_poles:
            total = total + vj / (p + 1j * kj)
        for kappa, b in rep.right_poles:
            total = total + b / (p - kappa)
        direct = np.linalg.solve(op.entries + p * p * np.eye(op.n), f)
        worst = max(worst, float(np.linalg.norm(total - direct)))
    return worst <= 1e-8, f"pole-sum reconstruction worst error {worst:.2e} (tol 1e-8)"


def _check_absorption():
    op = _op("diagonal", eigenvalues=[1.0, 4.0])
    f = np.array([1.0 + 0.0j, 1.0])
    k = float(np.sqrt(2.0))
    res = limiting_absorption(op, f, k)
    direct = np.linalg.solve(op.entries - k * k * np.eye(op.n), f)
    # the Richardson extrapolate cancels the O(eps) bias of the last rung
    err = float(np.linalg.norm(res.richardson - direct))
    at_embedded = limiting_absorption(op, f, 1.0)
    norms = np.linalg.norm(at_embedded.iterates, axis=1)
    idx = slice(-8, None)
    slope = np.polyfit(np.log(at_embedded.ladder[idx]), np.log(norms[idx]), 1)[0]
    ok = res.converged and err <= 1e-8 and abs(slope + 1.0) <= 0.1
    return ok, (
        f"off-resonance limit error {err:.2e}, on-resonance blowup exponent {slope:.3f} "
        f"(expect -1)"
    )


def _check_transform_rule():
    op = _op("diagonal", eigenvalues=[1.0])
    cfg = EvolveConfig(T=60.0, dt=0.005, method="rk4")
    traj = evolve_free(op, np.array([1.0 + 0.0j]), cfg)
    gap = integration_rule_check(traj, 1.0 + 0.0j)
    return gap <= 1e-5, f"running-integral transform rule gap {gap:.2e} (tol 1e-5)"


def _check_plancherel():
    op = _op("diagonal", eigenvalues=[1.0])
    cfg = EvolveConfig(T=50.0, dt=0.01, method="rk4")
    traj = evolve_free(op, np.array([1.0 + 0.0j]), cfg)
    res = plancherel_check(op, np.array([1.0 + 0.0j]), traj)
    ok = abs(res.ratio - 1.0) <= 0.05
    return ok, f"line/time energy ratio {res.ratio:.6f} (expect 1 within 5%)"


def _check_kernel_parity():
    if not _kernels.HAVE_COMPILED:
        return None, "compiled kernel not present, nothing to compare"
    a = np.array([[2.0 + 0.0j, -1.0], [-1.0, 2.0]])
    f = np.array([1.0 + 0.0j, 0.5])
    w_c, _, c_c, _ = _kernels.rk4_evolve(a, f, 0.01, 2000)
    w_r, _, c_r, _ = _reference.rk4_evolve(a, f, 0.01, 2000)
    scale = float(np.max(np.abs(w_r))) or 1.0
    err = max(
        float(np.max(np.abs(w_c - w_r))) / scale,
        float(np.max(np.abs(c_c - c_r))) / scale,
    )
    return err <= 1e-12, f"compiled vs fallback relative deviation {err:.2e} (tol 1e-12)"


_CHECKS = (
    ("free-evolution-sine", _check_free_evolution),
    ("axis-pole-residues", _check_axis_poles),
    ("pure-mode-average", _check_pure_mode_average),
    ("stability-detector", _check_stability_detector),
    ("embedded-scan", _check_embedded_scan),
    ("forced-average", _check_forced_average),
    ("resolvent-reconstruction", _check_resolvent_reconstruction),
    ("absorption-dichotomy", _check_absorption),
    ("transform-rule", _check_transform_rule),
    ("plancherel-energy", _check_plancherel),
    ("kernel-parity", _check_kernel_parity),
)


def run_verification() -> tuple[list, int]:
    """Run every golden check.  Returns printable lines and an exit code."""
    lines = []
    failed = 0
    for name, fn in _CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        if ok is None:
            lines.append(f"SKIP {name}: {detail}")
        elif ok:
            lines.append(f"PASS {name}: {detail}")
        else:
            failed += 1
            lines.append(f"FAIL {name}: {detail}")
    lines.append(
        f"{len(_CHECKS) - failed}/{len(_CHECKS)} checks passed"
        if failed
        else f"all {len(_CHECKS)} checks passed"
    )
    return lines, (4 if failed else 0)
