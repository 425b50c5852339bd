import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from conftest import random_stats
from mimocap.canonical import (DeltaSolution, MaxIterationsExceeded, coupling_matrices,
                               f_maps, resolvent_T, resolvent_T_tilde, solve_canonical,
                               uniqueness_certificate)
from mimocap.channel import ChannelStats, iid_stats
from mimocap.emi import random_covariance

GOLDEN = (math.sqrt(5) - 1) / 2


def test_resolvent_scalar_cases():
    s = iid_stats(3, 3, 0.4)
    np.testing.assert_allclose(resolvent_T(s, [1.0]), np.eye(3) / (2 * 0.4), atol=1e-15)
    np.testing.assert_allclose(resolvent_T(s, [0.0]), np.eye(3) / 0.4, atol=1e-15)
    np.testing.assert_allclose(resolvent_T_tilde(s, [1.0], np.eye(3)), np.eye(3) / 0.8,
                               atol=1e-15)
    np.testing.assert_allclose(resolvent_T_tilde(s, [1.0], np.zeros((3, 3))),
                               np.eye(3) / 0.4, atol=1e-15)


def test_resolvents_multiply_back():
    rng = np.random.default_rng(4)
    s = random_stats(rng, 4, 3, 3, 0.7)
    dt = rng.uniform(0.1, 2, 3)
    T = resolvent_T(s, dt)
    assert np.abs(T @ (0.7 * (np.eye(3) + s.receive_sum(dt))) - np.eye(3)).max() <= 1e-12
    q = random_covariance(4, rng)
    d = rng.uniform(0.1, 2, 3)
    Tt = resolvent_T_tilde(s, d, q)
    w, v = np.linalg.eigh(q)
    qh = (v * np.sqrt(w)) @ v.conj().T
    m = 0.7 * (np.eye(4) + sum(dj * qh @ c @ qh for dj, c in zip(d, s.ct)))
    assert np.abs(Tt @ m - np.eye(4)).max() <= 1e-12


def test_resolvent_rejects_negative_weights():
    with pytest.raises(ValueError):
        resolvent_T(iid_stats(2, 2, 1.0), [-0.5])


def test_f_maps_iid_closed_form():
    s = iid_stats(4, 4, 0.5)
    f, ft = f_maps(s, np.eye(4), [0.3], [0.8])
    assert f[0] == pytest.approx(1 / (0.5 * 1.8), rel=1e-14)
    assert ft[0] == pytest.approx(1 / (0.5 * 1.3), rel=1e-14)


def test_f_maps_at_zero(five_cluster):
    q = random_covariance(4, np.random.default_rng(0))
    f, ft = f_maps(five_cluster, q, np.zeros(5), np.zeros(5))
    w, v = np.linalg.eigh(q)
    qh = (v * np.sqrt(w)) @ v.conj().T
    np.testing.assert_allclose(f, np.trace(five_cluster.cr, axis1=1, axis2=2).real / 4, rtol=1e-13)
    np.testing.assert_allclose(ft, [np.trace(qh @ c @ qh).real / 4 for c in five_cluster.ct],
                               rtol=1e-12)


def test_f_maps_positive(five_cluster):
    rng = np.random.default_rng(1)
    for _ in range(10):
        f, ft = f_maps(five_cluster, random_covariance(4, rng), rng.uniform(0, 3, 5),
                       rng.uniform(0, 3, 5))
        assert np.all(f > 0) and np.all(ft > 0)


def test_iid_golden_ratio(backend):
    sol = solve_canonical(iid_stats(4, 4, 1.0), np.eye(4), backend=backend)
    assert isinstance(sol, DeltaSolution)
    np.testing.assert_allclose(sol.delta, [GOLDEN], atol=1e-9)
    np.testing.assert_allclose(sol.delta_tilde, [GOLDEN], atol=1e-9)
    # the scalar root solves sigma2 delta (1 + delta) = 1
    assert GOLDEN * (1 + GOLDEN) == pytest.approx(1.0, abs=1e-15)


def test_high_noise_first_order(five_cluster):
    s = five_cluster.with_sigma2(1e6)
    sol = solve_canonical(s, np.eye(4))
    first_order = np.trace(s.cr, axis1=1, axis2=2).real / s.t / s.sigma2
    np.testing.assert_allclose(sol.delta / first_order, 1.0, rtol=1e-2)


def test_table_scenario_certificates(five_cluster, backend):
    sol = solve_canonical(five_cluster.with_sigma2(0.1), np.eye(4), backend=backend)
    assert sol.residual <= 1e-10
    assert sol.rho_M < 1
    assert np.all(sol.delta > 0) and np.all(sol.delta_tilde > 0)


def test_returned_resolvents_consistent(five_cluster):
    q = random_covariance(4, np.random.default_rng(2))
    sol = solve_canonical(five_cluster, q)
    np.testing.assert_allclose(sol.T, resolvent_T(five_cluster, sol.delta_tilde), atol=1e-10)
    np.testing.assert_allclose(sol.T_tilde, resolvent_T_tilde(five_cluster, sol.delta, q),
                               atol=1e-10)
    f, ft = f_maps(five_cluster, q, sol.delta, sol.delta_tilde)
    defect = np.abs(sol.delta - f).max() + np.abs(sol.delta_tilde - ft).max()
    assert defect <= 10 * sol.tol


def test_certificate_scalar_closed_form():
    s = iid_stats(4, 4, 1.0)
    sol = solve_canonical(s, np.eye(4))
    expected = 1 / (1 + GOLDEN) ** 4
    assert sol.rho_M == pytest.approx(expected, rel=1e-9)
    assert uniqueness_certificate(s, np.eye(4), sol) == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(0.1459, abs=1e-4)


def test_certificate_vanishes_at_high_noise(five_cluster):
    rhos = [solve_canonical(five_cluster.with_sigma2(s2), np.eye(4)).rho_M
            for s2 in (1.0, 1e2, 1e4, 1e6)]
    assert all(b < a for a, b in zip(rhos, rhos[1:]))
    assert rhos[-1] < 1e-10


def test_coupling_matrices_are_nonnegative(five_cluster):
    sol = solve_canonical(five_cluster, np.eye(4))
    a, at = coupling_matrices(five_cluster, np.eye(4), sol.T, sol.T_tilde)
    assert np.all(a >= 0) and np.all(at >= 0)
    np.testing.assert_allclose(a, a.T, rtol=1e-12)


def test_step_sequence_non_increasing_after_burn_in():
    # Jacobi updates interleave two chains, so the step is monotone per parity
    rng = np.random.default_rng(9)
    for _ in range(20):
        s = random_stats(rng, 4, 4, 3, 10 ** rng.uniform(-2, 2))
        sol = solve_canonical(s, random_covariance(4, rng))
        for parity in (0, 1):
            steps = sol.steps[10 + parity::2]
            assert np.all(np.diff(steps) <= 1e-15)


def test_solution_independent_of_initialization(five_cluster):
    rng = np.random.default_rng(12)
    for s2 in (0.01, 1.0, 10.0):
        q = random_covariance(4, rng)
        a = solve_canonical(five_cluster.with_sigma2(s2), q, init=1.0)
        b = solve_canonical(five_cluster.with_sigma2(s2), q, init=0.1)
        c = solve_canonical(five_cluster.with_sigma2(s2), q, init=(rng.uniform(0.1, 5, 5),
                                                             rng.uniform(0.1, 5, 5)))
        np.testing.assert_allclose(a.delta, b.delta, atol=100 * a.tol)
        np.testing.assert_allclose(a.delta, c.delta, atol=100 * a.tol)


def test_unitary_conjugation_invariance(five_cluster):
    rng = np.random.default_rng(13)
    u = unitary_group.rvs(4, random_state=14)
    q = random_covariance(4, rng)
    rotated = ChannelStats(u @ five_cluster.ct @ u.conj().T, five_cluster.cr, five_cluster.sigma2)
    a = solve_canonical(five_cluster, q)
    b = solve_canonical(rotated, u @ q @ u.conj().T)
    np.testing.assert_allclose(a.delta, b.delta, atol=1e-9)
    np.testing.assert_allclose(a.delta_tilde, b.delta_tilde, atol=1e-9)


def test_rank_deficient_covariance_is_allowed(five_cluster):
    q = np.zeros((4, 4), complex)
    q[0, 0], q[1, 1] = 3.0, 1.0
    sol = solve_canonical(five_cluster, q)
    assert sol.rho_M < 1 and np.all(sol.delta > 0)


def test_iteration_cap_raises(five_cluster):
    with pytest.raises(MaxIterationsExceeded) as info:
        solve_canonical(five_cluster, np.eye(4), tol=1e-15, max_iter=3)
    assert info.value.iterations == 3


def test_bad_arguments(five_cluster):
    with pytest.raises(ValueError):
        solve_canonical(five_cluster, np.eye(4), init=0.0)
    with pytest.raises(ValueError):
        solve_canonical(five_cluster, np.eye(4), tol=0)
