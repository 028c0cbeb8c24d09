import numpy as np
import pytest

from ramec.beamforming import (
    bisection_beamforming,
    covariances,
    gaussian_randomization,
    max_feasible_sinr,
    mmse_beamformer,
    mmse_beamformers,
    rates_from_sinr,
    sdr_feasibility,
    sinr,
    sinr_all,
)
from ramec.channel import random_deflections
from ramec.compute_alloc import Allocation, kkt_edge_allocation, optimal_split, split_latency, task_arrays
from ramec.driver import draw_trial


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _unit_samples(rng, n, N):
    z = _cn(rng, n, N)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def test_sinr_matched_filter(rng):
    h = _cn(rng, 1, 5)
    w = h[0] / np.linalg.norm(h[0])
    assert sinr(w, h, 0, [2.0], 0.5) == pytest.approx(2.0 * np.linalg.norm(h) ** 2 / 0.5, rel=1e-12)


def test_sinr_orthogonal(rng):
    H = _cn(rng, 2, 3)
    w = np.cross(H[0], H[1]).conj()
    w /= np.linalg.norm(w)
    assert sinr(w, H, 0, [1.0, 1.0], 1.0) == pytest.approx(0.0, abs=1e-25)


def test_sinr_identical_channels_bound(rng):
    h = _cn(rng, 4)
    H = np.array([h, h, _cn(rng, 4)])
    P = [2.0, 0.5, 1.0]
    for w in _unit_samples(rng, 200, 4):
        assert sinr(w, H, 0, P, 1e-3) <= P[0] / P[1]
    assert sinr_all(_unit_samples(rng, 3, 4), H, P, 1e-3).shape == (3,)


def test_mmse_single_device(rng):
    H = _cn(rng, 1, 6)
    w, g = mmse_beamformer(H, 0, [3.0], 0.1)
    assert g == pytest.approx(3.0 * np.linalg.norm(H) ** 2 / 0.1, rel=1e-12)
    assert abs(abs(np.vdot(w, H[0])) - np.linalg.norm(H)) <= 1e-12 * np.linalg.norm(H)


def test_mmse_two_by_two_sampling_oracle(rng):
    H = np.array([[1.0 + 0.5j, 0.3 - 0.2j], [0.6 + 0.1j, -0.4 + 0.9j]])
    P, s2 = [1.0, 0.8], 0.05
    _, g = mmse_beamformer(H, 0, P, s2)
    best = max(sinr_all(np.tile(w, (2, 1)), H, P, s2)[0] for w in _unit_samples(rng, 100_000, 2))
    assert best <= g * (1 + 1e-12)
    assert best == pytest.approx(g, rel=1e-3)


def test_mmse_dominates_random_vectors(rng):
    H = _cn(rng, 4, 9)
    P = np.array([1.0, 2.0, 0.5, 1.0])
    W, g = mmse_beamformers(H, P, 0.01)
    assert np.abs(np.linalg.norm(W, axis=1) - 1).max() <= 1e-10
    assert sinr_all(W, H, P, 0.01) == pytest.approx(g, rel=1e-10)
    for w in _unit_samples(rng, 1000, 9):
        assert sinr(w, H, 2, P, 0.01) <= g[2] * (1 + 1e-12)


def test_mmse_noise_scaling(rng):
    H = _cn(rng, 2, 8)
    P = [1.0, 1e-9]  # negligible interference
    _, g1 = mmse_beamformer(H, 0, P, 1.0)
    _, g10 = mmse_beamformer(H, 0, P, 10.0)
    assert g10 == pytest.approx(g1 / 10, rel=1e-6)


def test_covariances_rank_one(rng):
    C = covariances(_cn(rng, 3, 5))
    assert np.abs(C - C.conj().transpose(0, 2, 1)).max() <= 1e-12
    ev = np.linalg.eigvalsh(C)
    assert np.all(ev[:, -2] <= 1e-10 * np.trace(C, axis1=1, axis2=2).real)


def test_sdr_single_device_threshold(rng):
    H = _cn(rng, 1, 4)
    C = covariances(H)
    thr = 2.0 * np.linalg.norm(H) ** 2 / 0.1
    assert sdr_feasibility([thr * (1 - 1e-9)], C, [2.0], 0.1).feasible
    assert not sdr_feasibility([thr * (1 + 1e-9)], C, [2.0], 0.1).feasible
    assert sdr_feasibility([0.0], C, [2.0], 0.1).feasible
    assert not sdr_feasibility([np.inf], C, [2.0], 0.1).feasible


def test_sdr_sampling_oracle(rng):
    H = _cn(rng, 3, 4)
    P, s2 = np.array([1.0, 1.5, 0.7]), 0.2
    C = covariances(H)
    samples = _unit_samples(rng, 100_000, 4)
    G = np.abs(samples.conj() @ H.T) ** 2 * P
    sampled = np.array([(G[:, k] / (G.sum(1) - G[:, k] + s2)).max() for k in range(3)])
    _, g = mmse_beamformers(H, P, s2)
    for scale, expect in ((0.9, True), (1.1, False)):
        res = sdr_feasibility(g * scale, C, P, s2)
        assert res.feasible == expect
        if expect:
            for k in range(3):
                assert sinr(res.vectors[k], H, k, P, s2) >= g[k] * scale * (1 - 1e-10)
        else:
            # no sampled unit vector reaches the infeasible targets
            assert np.all(sampled < g * scale)


def test_sdr_mmse_equivalence(scenario, rng):
    for seed in range(100):
        real, _ = draw_trial(scenario, seed)
        H = real.channels(random_deflections(real.N, scenario.theta_max_rad, rng))
        _, g = mmse_beamformers(H, scenario.powers_w, scenario.noise_w)
        g_sdr, vecs = max_feasible_sinr(covariances(H), scenario.powers_w, scenario.noise_w)
        assert np.all(np.abs(g_sdr - g) <= 1e-8 * g)


def test_gaussian_randomization_rank_one(rng):
    H = _cn(rng, 3, 4)
    v = _cn(rng, 4)
    v /= np.linalg.norm(v)
    w = gaussian_randomization(np.outer(v, v.conj()), H, 0, [1, 1, 1], 0.1, 16, rng)
    assert abs(abs(np.vdot(w, v)) - 1) <= 1e-12
    assert sinr(w, H, 0, [1, 1, 1], 0.1) == pytest.approx(sinr(v, H, 0, [1, 1, 1], 0.1), rel=1e-8)


def test_gaussian_randomization_full_rank(rng):
    H = _cn(rng, 3, 4)
    A = _cn(rng, 4, 4)
    W = A @ A.conj().T
    W /= np.trace(W).real
    P = [1.0, 1.0, 1.0]
    w = gaussian_randomization(W, H, 1, P, 0.1, 500, np.random.default_rng(5))
    assert abs(np.linalg.norm(w) - 1) <= 1e-10
    vals, vecs = np.linalg.eigh(W)
    z = _cn(np.random.default_rng(6), 10, 4)
    ten = (z * np.sqrt(np.clip(vals, 0, None))) @ vecs.T
    assert sinr(w, H, 1, P, 0.1) >= max(sinr(x / np.linalg.norm(x), H, 1, P, 0.1) for x in ten)
    again = gaussian_randomization(W, H, 1, P, 0.1, 500, np.random.default_rng(5))
    assert np.array_equal(w, again)
    with pytest.raises(ValueError):
        gaussian_randomization(W, H, 1, P, 0.1, 0, rng)


def _kkt_setup(scenario, seed):
    real, rng = draw_trial(scenario, seed)
    H = real.channels(random_deflections(real.N, scenario.theta_max_rad, rng))
    _, g = mmse_beamformers(H, scenario.powers_w, scenario.noise_w)
    alloc, _ = kkt_edge_allocation(rates_from_sinr(g, scenario.bandwidth_hz), scenario)
    return H, g, alloc, rng


def test_bisection_matches_mmse(scenario):
    L, c, fl = task_arrays(scenario)
    for seed in range(10):
        H, g, alloc, rng = _kkt_setup(scenario, seed)
        W, t2 = bisection_beamforming(scenario, H, alloc, rng)
        R = rates_from_sinr(g, scenario.bandwidth_hz)
        ell_r = optimal_split(L, c, fl, alloc.fe, R)
        direct = float(np.max(ell_r / R + alloc.ell * c / alloc.fe))
        assert t2 == pytest.approx(direct, rel=1e-6)
        assert np.abs(np.linalg.norm(W, axis=1) - 1).max() <= 1e-10
        # the returned beamformers keep every device at its MMSE SINR
        assert sinr_all(W, H, scenario.powers_w, scenario.noise_w) == pytest.approx(g, rel=1e-6)


def test_bisection_single_device_analytic(scenario):
    sc = scenario.replace(K=1)
    real, rng = draw_trial(sc, 3)
    H = real.channels(random_deflections(real.N, sc.theta_max_rad, rng))
    L, c, fl = task_arrays(sc)
    gamma = float(sc.powers_w[0] * np.linalg.norm(H) ** 2 / sc.noise_w)
    R = sc.bandwidth_hz * np.log2(1 + gamma)
    alloc = Allocation(optimal_split(L, c, fl, np.array([sc.fmax_cps]), np.array([R])), np.array([sc.fmax_cps]))
    _, t2 = bisection_beamforming(sc, H, alloc)
    # edge stage at the equal-latency split equals the local stage
    expected = (L[0] - alloc.ell[0]) * c[0] / fl[0]
    assert t2 == pytest.approx(expected, rel=1e-8)

    _, t2_hi = bisection_beamforming(sc.replace(power_dbm=sc.power_dbm + 3.0), H, alloc)
    assert t2_hi <= t2


def test_bisection_monotone_in_task_size(scenario):
    H, g, alloc, rng = _kkt_setup(scenario, 1)
    _, t_big = bisection_beamforming(scenario, H, alloc)
    smaller = scenario.replace(task_bits=(1e6, 1e6, 0.8e6, 1e6))
    _, t_small = bisection_beamforming(smaller, H, alloc)
    assert t_small <= t_big


def test_bisection_beamformers_without_rng(scenario):
    H, g, alloc, _ = _kkt_setup(scenario, 2)
    W, _ = bisection_beamforming(scenario, H, alloc, None)
    assert np.abs(np.linalg.norm(W, axis=1) - 1).max() <= 1e-10
