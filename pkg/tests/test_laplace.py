import numpy as np
import numpy.testing as npt
import pytest

from conftest import diag_operator, random_stable_operator
from spectre.errors import (
    AccuracyUnattainableError,
    DivergenceError,
    PoleProximityError,
    UsageError,
)
from spectre.evolution import EvolveConfig, evolve_free
from spectre.laplace import (
    abelian_check,
    bromwich_invert,
    decompose,
    integration_rule_check,
    limiting_absorption,
    numeric_laplace,
    plancherel_check,
    resolvent_solve_k,
    resolvent_solve_p,
)
from spectre.operators import spectral_oracle


def test_shifted_solve_known_values(two_mode_operator, ones2):
    # (A + p^2)^{-1} f at p = 1 for eigenvalues 1, 4
    got = resolvent_solve_p(two_mode_operator, ones2, 1.0)
    npt.assert_allclose(got, [0.5, 0.2], atol=1e-14)
    got = resolvent_solve_k(two_mode_operator, ones2, 2.0)
    npt.assert_allclose(got, [-1.0, 0.5], atol=1e-14)


def test_shifted_solve_residual_postcondition(two_mode_operator, ones2):
    rng = np.random.default_rng(2)
    a = two_mode_operator.entries
    for _ in range(20):
        p = complex(rng.uniform(0.2, 3.0), rng.uniform(-3.0, 3.0))
        if min(abs(p - q) for q in (1j, -1j, 2j, -2j)) < 0.3:
            continue
        x = resolvent_solve_p(two_mode_operator, ones2, p)
        res = np.linalg.norm(a @ x + p * p * x - ones2)
        assert res <= 1e-10 * np.linalg.norm(ones2)


def test_shifted_solve_refuses_near_pole(two_mode_operator, ones2):
    with pytest.raises(PoleProximityError):
        resolvent_solve_k(two_mode_operator, ones2, 1.0 + 1e-14)


def test_decomposition_frozen_two_mode(two_mode_oracle, ones2):
    rep = decompose(two_mode_oracle, ones2)
    assert [k for k, _ in rep.imag_poles] == [-2.0, -1.0, 1.0, 2.0]
    assert rep.right_poles == ()
    assert rep.left_poles == ()
    assert rep.bound_fit.w1_zero
    by_k = {k: v for k, v in rep.imag_poles}
    npt.assert_allclose(by_k[1.0], [0.5j, 0.0], atol=1e-14)
    npt.assert_allclose(by_k[2.0], [0.0, 0.25j], atol=1e-14)
    npt.assert_allclose(by_k[-1.0], [-0.5j, 0.0], atol=1e-14)


def test_decomposition_splits_negative_eigenvalue():
    oracle = spectral_oracle(diag_operator(-1.0, 4.0))
    f = np.array([1.0 + 0.0j, 1.0])
    rep = decompose(oracle, f)
    assert [k for k, _ in rep.imag_poles] == [-2.0, 2.0]
    assert [complex(p) for p, _ in rep.right_poles] == [1.0 + 0.0j]
    assert [complex(p) for p, _ in rep.left_poles] == [-1.0 + 0.0j]
    npt.assert_allclose(rep.right_poles[0][1], [0.5, 0.0], atol=1e-14)
    # left remainder decays like 1/tau, so the fitted exponent sits near 1
    assert not rep.bound_fit.w1_zero
    assert rep.bound_fit.gamma > 0.5
    assert rep.bound_fit.gamma == pytest.approx(1.0, abs=0.1)


def test_decomposition_identity_against_direct_solves():
    rng = np.random.default_rng(13)
    op = diag_operator(-1.0, 2.0, 5.0)
    oracle = spectral_oracle(op)
    f = (rng.standard_normal(3) + 1j * rng.standard_normal(3)).astype(np.complex128)
    rep = decompose(oracle, f)
    for _ in range(20):
        p = complex(rng.uniform(1.2, 3.0), rng.uniform(-4.0, 4.0))
        total = rep.w1_sampler(p)
        for k_j, v_j in rep.imag_poles:
            total = total + v_j / (p + 1j * k_j)
        for kappa, b in rep.right_poles:
            total = total + b / (p - kappa)
        direct = resolvent_solve_p(op, f, p)
        npt.assert_allclose(total, direct, atol=1e-8 * max(1.0, np.abs(direct).max()))


def test_limiting_absorption_away_from_spectrum(two_mode_operator, ones2):
    res = limiting_absorption(two_mode_operator, ones2, float(np.sqrt(2.0)))
    assert res.converged
    assert res.failure_index is None
    npt.assert_allclose(res.richardson, [-1.0, 0.5], atol=1e-10)
    # Cauchy increments shrink geometrically with the ladder
    assert res.cauchy_norms[-1] < res.cauchy_norms[0]


def test_limiting_absorption_blows_up_at_embedded_frequency(two_mode_operator, ones2):
    res = limiting_absorption(two_mode_operator, ones2, 1.0)
    assert not res.converged
    norms = np.linalg.norm(res.iterates, axis=1)
    slope = np.polyfit(np.log(res.ladder[-10:]), np.log(norms[-10:]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_bromwich_reconstructs_decaying_mode():
    # single eigenvalue -1: left pole at -1 with residue -1/2, so the
    # remainder contributes -e^{-t}/2
    oracle = spectral_oracle(diag_operator(-1.0))
    rep = decompose(oracle, np.array([1.0 + 0.0j]))
    got = bromwich_invert(rep.w1_sampler, 1.0).value
    npt.assert_allclose(got, [-np.exp(-1.0) / 2.0], atol=1e-4)


def test_bromwich_zero_remainder_is_zero(two_mode_oracle, ones2):
    rep = decompose(two_mode_oracle, ones2)
    res = bromwich_invert(rep.w1_sampler, 2.0, bound_fit=rep.bound_fit)
    npt.assert_allclose(res.value, [0.0, 0.0], atol=1e-12)
    assert res.tail_bound == 0.0


def test_bromwich_tail_certificate_gate():
    from spectre.laplace import BoundFit

    oracle = spectral_oracle(diag_operator(-1.0))
    rep = decompose(oracle, np.array([1.0 + 0.0j]))
    # one left pole decays exactly like 1/tau; the fit hovers at 1
    assert rep.bound_fit.gamma == pytest.approx(1.0, abs=0.05)
    slow = BoundFit(c=1.0, gamma=0.9, residual=0.0, w1_zero=False,
                    tau=np.array([1.0]), norms=np.array([1.0]))
    with pytest.raises(AccuracyUnattainableError):
        bromwich_invert(rep.w1_sampler, 1.0, bound_fit=slow)
    fast = BoundFit(c=1.0, gamma=2.0, residual=0.0, w1_zero=False,
                    tau=np.array([1.0]), norms=np.array([1.0]))
    res = bromwich_invert(rep.w1_sampler, 1.0, bound_fit=fast)
    assert res.tail_bound is not None and res.tail_bound > 0.0


def test_bromwich_sampling_guard():
    oracle = spectral_oracle(diag_operator(-1.0))
    rep = decompose(oracle, np.array([1.0 + 0.0j]))
    with pytest.raises(UsageError, match="n_quad"):
        bromwich_invert(rep.w1_sampler, 50.0, n_quad=501)


def test_bromwich_mixed_spectrum_against_time_domain():
    # decaying part of the evolution equals the contour integral plus the
    # right-half pole contribution e^{kappa t} b
    op = diag_operator(-0.5, 1.0, 4.0)
    f = np.array([1.0 + 0.0j, 1.0, 1.0])
    oracle = spectral_oracle(op)
    rep = decompose(oracle, f)
    cfg = EvolveConfig(T=12.0, dt=0.002, method="spectral")
    traj = evolve_free(op, f, cfg, oracle)
    for t_probe in (1.0, 5.0, 10.0):
        idx = int(round(t_probe / cfg.dt))
        # small sigma keeps the e^{sigma t} error amplification tame
        total = bromwich_invert(rep.w1_sampler, t_probe, sigma=0.2).value
        for kappa, b in rep.right_poles:
            total = total + np.exp(kappa * t_probe) * b
        for k_j, v_j in rep.imag_poles:
            total = total + np.exp(-1j * k_j * t_probe) * v_j
        npt.assert_allclose(total, traj.dense_samples[idx], atol=1e-3 * max(1.0, np.abs(traj.dense_samples[idx]).max()))


def test_numeric_laplace_matches_resolvent():
    op = diag_operator(1.0, 4.0)
    f = np.array([1.0 + 0.0j, 1.0])
    cfg = EvolveConfig(T=60.0, dt=0.005)
    traj = evolve_free(op, f, cfg, spectral_oracle(op))
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = complex(rng.uniform(0.5, 1.5), rng.uniform(-1.0, 1.0))
        got = numeric_laplace(traj, p)
        want = resolvent_solve_p(op, f, p)
        npt.assert_allclose(got, want, atol=1e-5)


def test_numeric_laplace_refuses_divergent_strip():
    op = diag_operator(-1.0)
    cfg = EvolveConfig(T=30.0, dt=0.01)
    traj = evolve_free(op, np.array([1.0 + 0.0j]), cfg, spectral_oracle(op))
    with pytest.raises(DivergenceError):
        numeric_laplace(traj, 0.5 + 0.0j)


def test_integration_rule_links_solution_and_running_integral():
    op = diag_operator(1.0, 4.0)
    f = np.array([1.0 + 0.0j, 1.0])
    cfg = EvolveConfig(T=60.0, dt=0.005)
    traj = evolve_free(op, f, cfg, spectral_oracle(op))
    assert integration_rule_check(traj, 1.0 + 0.0j) <= 1e-5


def test_plancherel_balance_and_sigma_behavior():
    op = diag_operator(1.0)
    f = np.array([1.0 + 0.0j])
    cfg = EvolveConfig(T=50.0, dt=0.01)
    traj = evolve_free(op, f, cfg, spectral_oracle(op))
    res = plancherel_check(op, f, traj, sigma=0.5)
    assert res.ratio == pytest.approx(1.0, abs=0.05)
    # larger sigma shifts weight to early times; both sides must track it
    res2 = plancherel_check(op, f, traj, sigma=1.0)
    assert res2.ratio == pytest.approx(1.0, abs=0.05)
    assert res2.time_energy < res.time_energy


def test_abelian_constant_series_is_exact():
    res = abelian_check(lambda t: np.ones_like(t), T=200.0)
    npt.assert_allclose(res.time_limit, [1.0], atol=1e-9)
    npt.assert_allclose(res.laplace_limit, [1.0], atol=1e-3)
    assert res.gap <= 1e-3


def test_abelian_oscillation_averages_out():
    res = abelian_check(lambda t: np.cos(3.0 * t), T=10_000.0)
    assert res.gap <= 1e-2
    assert np.linalg.norm(res.time_limit) <= 1e-3


def test_abelian_mean_plus_oscillation():
    res = abelian_check(lambda t: 1.0 + np.sin(t), T=10_000.0)
    npt.assert_allclose(res.time_limit, [1.0], atol=2e-4)
    npt.assert_allclose(res.laplace_limit, [1.0], atol=2e-3)
    assert res.gap <= 2e-3


def test_abelian_rejects_bad_ladder():
    with pytest.raises(UsageError):
        abelian_check(lambda t: np.ones_like(t), T=10.0, p_ladder=(0.1, -0.2))
