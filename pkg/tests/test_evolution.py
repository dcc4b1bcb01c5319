import numpy as np
import numpy.testing as npt
import pytest

from conftest import diag_operator, random_stable_operator
from spectre.errors import ConfigurationError, UsageError
from spectre.evolution import (
    EvolveConfig,
    dt_stability_limit,
    energy_series,
    evolve_forced,
    evolve_free,
    modulated_average,
    modulated_many,
    richardson_refine,
    synthetic_trajectory,
    write_trajectory_csv,
)
from spectre.operators import spectral_oracle


def _cfg(**kw):
    kw.setdefault("T", 20.0)
    kw.setdefault("dt", 0.01)
    return EvolveConfig(**kw)


@pytest.mark.parametrize("method", ["rk4", "spectral"])
def test_free_solution_unit_eigenvalue_is_sine(method):
    op = diag_operator(1.0)
    oracle = spectral_oracle(op)
    traj = evolve_free(op, np.array([1.0 + 0.0j]), _cfg(method=method), oracle)
    npt.assert_allclose(traj.dense_samples[:, 0], np.sin(traj.dense_times), atol=2e-8)
    # running integral of sin is 1 - cos, up to composite-trapezoid error
    npt.assert_allclose(traj.dense_cumulative[:, 0], 1.0 - np.cos(traj.dense_times), atol=5e-5)


@pytest.mark.parametrize("method", ["rk4", "spectral"])
def test_free_solution_negative_eigenvalue_is_sinh(method):
    op = diag_operator(-1.0)
    oracle = spectral_oracle(op)
    traj = evolve_free(op, np.array([1.0 + 0.0j]), _cfg(T=10.0, method=method), oracle)
    npt.assert_allclose(
        traj.dense_samples[:, 0], np.sinh(traj.dense_times), rtol=1e-7, atol=1e-8
    )


@pytest.mark.parametrize("method", ["rk4", "spectral"])
def test_free_solution_zero_eigenvalue_is_linear(method):
    op = diag_operator(0.0)
    traj = evolve_free(op, np.array([1.0 + 0.0j]), _cfg(T=5.0, method=method))
    npt.assert_allclose(traj.dense_samples[:, 0], traj.dense_times, atol=1e-9)


def test_free_zero_excitation_stays_zero():
    op = diag_operator(1.0, 4.0)
    traj = evolve_free(op, np.zeros(2, dtype=np.complex128), _cfg(T=5.0))
    assert np.abs(traj.dense_samples).max() == 0.0


def test_initial_value_is_zero_everywhere():
    op = diag_operator(2.0, 3.0)
    cfg = _cfg(T=4.0, forcing_k=1.1)
    free = evolve_free(op, np.ones(2, dtype=np.complex128), _cfg(T=4.0))
    forced = evolve_forced(op, np.ones(2, dtype=np.complex128), cfg)
    assert np.abs(free.dense_samples[0]).max() == 0.0
    assert np.abs(forced.dense_samples[0]).max() == 0.0


def test_forced_solution_frozen_closed_form():
    # single eigenvalue 4, drive frequency 1: (e^{-it} - cos 2t + (i/2) sin 2t) / 3
    op = diag_operator(4.0)
    cfg = _cfg(T=25.0, method="spectral", forcing_k=1.0)
    traj = evolve_forced(op, np.array([1.0 + 0.0j]), cfg, spectral_oracle(op))
    t = traj.dense_times
    want = (np.exp(-1j * t) - np.cos(2.0 * t) + 0.5j * np.sin(2.0 * t)) / 3.0
    npt.assert_allclose(traj.dense_samples[:, 0], want, atol=1e-12)
    rk4 = evolve_forced(op, np.array([1.0 + 0.0j]), _cfg(T=25.0, forcing_k=1.0))
    npt.assert_allclose(rk4.dense_samples[:, 0], want, atol=1e-6)


def test_forced_resonance_grows_linearly():
    op = diag_operator(4.0)
    cfg = _cfg(T=200.0, dt=0.05, method="spectral", forcing_k=2.0)
    traj = evolve_forced(op, np.array([1.0 + 0.0j]), cfg, spectral_oracle(op))
    t = traj.dense_times
    want = 0.25j * (t * np.exp(-2j * t) - np.sin(2.0 * t) / 2.0)
    npt.assert_allclose(traj.dense_samples[:, 0], want, atol=1e-10)


def test_forced_superposition_in_excitation():
    op = diag_operator(1.0, 4.0)
    cfg = _cfg(T=10.0, method="spectral", forcing_k=0.6)
    oracle = spectral_oracle(op)
    f1 = np.array([1.0 + 0.0j, 0.0])
    f2 = np.array([0.0, 1.0 + 0.0j])
    a = evolve_forced(op, f1, cfg, oracle).dense_samples
    b = evolve_forced(op, f2, cfg, oracle).dense_samples
    both = evolve_forced(op, f1 + 2.0 * f2, cfg, oracle).dense_samples
    npt.assert_allclose(both, a + 2.0 * b, atol=1e-12)


def test_methods_agree_in_resolvable_regime():
    # quadrature error for the classical stepper scales like T omega^5 dt^4;
    # at omega <= 2, T = 50, dt = 2.5e-3 that budget sits below 1e-6
    op = diag_operator(1.0, 4.0)
    f = np.array([1.0 + 0.0j, 1.0])
    oracle = spectral_oracle(op)
    cfg_rk = _cfg(T=50.0, dt=0.0025)
    cfg_sp = _cfg(T=50.0, dt=0.0025, method="spectral")
    a = evolve_free(op, f, cfg_rk, oracle)
    b = evolve_free(op, f, cfg_sp, oracle)
    assert np.abs(a.dense_samples - b.dense_samples).max() <= 1e-6
    assert np.abs(a.dense_cumulative - b.dense_cumulative).max() <= 1e-6


def test_energy_is_conserved_by_the_stepper():
    op = random_stable_operator(5, n=4, lo=0.5, hi=4.0)
    f = np.ones(4, dtype=np.complex128)
    cfg = _cfg(T=40.0, dt=0.02, keep_velocity=True)
    traj = evolve_free(op, f, cfg, spectral_oracle(op))
    _, e = energy_series(traj, op)
    drift = np.abs(e - e[0]).max() / abs(e[0])
    assert drift <= 1e-6


def test_energy_series_needs_velocity():
    op = diag_operator(1.0)
    traj = evolve_free(op, np.array([1.0 + 0.0j]), _cfg(T=2.0))
    with pytest.raises(UsageError):
        energy_series(traj, op)


def test_step_refinement_halving_quartic():
    op = diag_operator(1.0)
    f = np.array([1.0 + 0.0j])
    coarse = evolve_free(op, f, _cfg(T=100.0, dt=0.01))
    fine = evolve_free(op, f, _cfg(T=100.0, dt=0.005))
    rep = richardson_refine(coarse, fine)
    assert rep.max_rel_diff <= 1e-8
    assert not rep.flagged


def test_step_refinement_rejects_mismatched_grids():
    op = diag_operator(1.0)
    f = np.array([1.0 + 0.0j])
    a = evolve_free(op, f, _cfg(T=10.0, dt=0.01))
    b = evolve_free(op, f, _cfg(T=10.0, dt=0.004))
    with pytest.raises(UsageError):
        richardson_refine(a, b)


def test_stepper_rejects_unstable_dt():
    op = diag_operator(100.0)
    limit = dt_stability_limit(100.0)
    with pytest.raises(ConfigurationError, match="dt"):
        evolve_free(op, np.array([1.0 + 0.0j]), _cfg(T=10.0, dt=4.0 * limit))
    # at the limit it runs
    evolve_free(op, np.array([1.0 + 0.0j]), _cfg(T=10.0, dt=0.9 * limit))


def test_step_budget_cap():
    with pytest.raises(ConfigurationError, match="step budget"):
        _cfg(T=1e8, dt=1e-4)


def test_overflow_guard_truncates_growing_solution():
    op = diag_operator(-25.0)
    f = np.array([1.0 + 0.0j])
    for method in ("rk4", "spectral"):
        traj = evolve_free(op, f, _cfg(T=200.0, dt=0.005, method=method), spectral_oracle(op))
        assert traj.truncated
        # sinh(5 t) crosses the 1e280 guard near t = 129
        assert 120.0 < traj.truncated_at < 140.0
        assert np.isfinite(traj.dense_samples).all()


def test_sampling_stride_subsets_dense_grid():
    op = diag_operator(1.0)
    traj = evolve_free(op, np.array([1.0 + 0.0j]), _cfg(T=2.0, dt=0.01, sample_stride=7))
    npt.assert_array_equal(traj.times[:-1], traj.dense_times[::7][: traj.times.size - 1])
    assert traj.times[-1] == traj.dense_times[-1]
    npt.assert_array_equal(traj.samples[0], traj.dense_samples[0])


def test_modulated_average_pure_mode_dichotomy():
    rng = np.random.default_rng(21)
    for _ in range(10):
        k_j = float(rng.uniform(0.5, 3.0))
        v = (rng.standard_normal(3) + 1j * rng.standard_normal(3)).astype(np.complex128)
        cfg = _cfg(T=400.0, dt=0.05, method="spectral", sample_stride=5)
        traj = synthetic_trajectory([(k_j, v)], cfg)
        on = modulated_average(traj, k_j)
        npt.assert_allclose(on.final_value, v, atol=1e-6)
        k_off = k_j + float(rng.uniform(0.3, 1.0))
        off = modulated_average(traj, k_off)
        bound = 2.0 * np.linalg.norm(v) / (abs(k_off - k_j) * off.times[-1])
        assert off.norms[-1] <= bound * 1.05 + 1e-12


def test_modulated_average_matches_quadrature_oracle():
    # independent check: direct trapezoid of e^{iks} u(s) on the dense grid
    op = diag_operator(1.0, 4.0)
    f = np.array([1.0 + 0.0j, 1.0])
    traj = evolve_free(op, f, _cfg(T=30.0, dt=0.01, sample_stride=10), spectral_oracle(op))
    k = 1.3
    series = modulated_average(traj, k)
    t = traj.dense_times
    g = np.exp(1j * k * t)[:, None] * traj.dense_samples
    direct = np.trapezoid(g, dx=traj.dense_dt, axis=0) / t[-1]
    npt.assert_allclose(series.final_value, direct, atol=1e-10)


def test_modulated_many_matches_single_calls():
    op = diag_operator(1.0, 4.0)
    f = np.array([1.0 + 0.0j, 1.0])
    traj = evolve_free(op, f, _cfg(T=20.0, dt=0.01, sample_stride=4), spectral_oracle(op))
    ks = np.array([0.7, 1.0, 2.2])
    times, values, norms = modulated_many(traj, ks)
    for i, k in enumerate(ks):
        single = modulated_average(traj, float(k))
        npt.assert_allclose(values[i], single.values, atol=1e-12)
        npt.assert_allclose(norms[i], single.norms, atol=1e-12)
        npt.assert_array_equal(times, single.times)


def test_projection_mask_restricts_norms():
    op = diag_operator(1.0, 4.0)
    f = np.array([1.0 + 0.0j, 1.0])
    traj = evolve_free(op, f, _cfg(T=20.0, dt=0.01, sample_stride=4), spectral_oracle(op))
    mask = np.array([1.0, 0.0])
    series = modulated_average(traj, 1.0, projection=mask)
    full = modulated_average(traj, 1.0)
    npt.assert_allclose(series.norms, np.abs(full.values[:, 0]), atol=1e-12)


def test_trajectory_csv_roundtrip(tmp_path):
    op = diag_operator(1.0, 4.0)
    f = np.array([1.0 + 0.0j, 1.0])
    traj = evolve_free(op, f, _cfg(T=2.0, dt=0.1), spectral_oracle(op))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    rows = np.genfromtxt(path, delimiter=",", names=True)
    npt.assert_allclose(rows["t"], traj.times, atol=0)
    got = rows["w0_re"] + 1j * rows["w0_im"]
    npt.assert_allclose(got, traj.samples[:, 0], atol=1e-15)
    got_c = rows["c1_re"] + 1j * rows["c1_im"]
    npt.assert_allclose(got_c, traj.cumulative[:, 1], atol=1e-15)

    norms = tmp_path / "norms.csv"
    write_trajectory_csv(traj, norms, norms_only=True)
    rows = np.genfromtxt(norms, delimiter=",", names=True)
    npt.assert_allclose(rows["norm_w"], np.linalg.norm(traj.samples, axis=1), atol=1e-15)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EvolveConfig(T=-1.0, dt=0.1)
    with pytest.raises(ConfigurationError):
        EvolveConfig(T=1.0, dt=0.0)
    with pytest.raises(ConfigurationError):
        EvolveConfig(T=1.0, dt=0.1, method="euler")
    with pytest.raises(ConfigurationError):
        EvolveConfig(T=1.0, dt=0.1, sample_stride=0)
