import math

import numpy as np
import pytest

from ramec.beamforming import mmse_beamformers, rates_from_sinr
from ramec.channel import boresight_deflections
from ramec.compute_alloc import (
    Allocation,
    evaluate_latency,
    integerize_allocation,
    integerize_split,
    kkt_edge_allocation,
    kkt_fe,
    latency_parts,
    minmax_oracle_allocation,
    optimal_split,
    split_latency,
    task_arrays,
)
from ramec.driver import draw_trial


def _equal_latency_root(L, c, fl, fe, R):
    """Bisection on ell for local == edge latency (independent of the closed form)."""
    lo, hi = 0.0, L
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        local = (L - mid) * c / fl
        edge = mid / R + mid * c / fe
        if local > edge:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_optimal_split_example():
    args = (1e6, 1e3, 6e8, 7.5e9, 4e6)
    ell = optimal_split(*args)
    assert ell == pytest.approx(_equal_latency_root(*args), rel=1e-12)
    assert ell == pytest.approx(8.13e5, rel=1e-3)


def test_optimal_split_limits():
    L, c, fl, R = 1e6, 1e3, 6e8, 4e6
    assert optimal_split(L, c, fl, 1e30, R) == pytest.approx(L * c * R / (c * R + fl), rel=1e-12)
    assert optimal_split(L, c, fl, 0.0, R) == 0.0
    assert optimal_split(L, c, fl, 1e9, 0.0) == 0.0


def test_equal_latency_identity(rng):
    n = 10_000
    L = rng.uniform(1e5, 1e7, n)
    c = rng.uniform(1e2, 1e4, n)
    fl = rng.uniform(1e8, 2e9, n)
    fe = rng.uniform(1e8, 3e10, n)
    R = rng.uniform(1e4, 1e8, n)
    ell = optimal_split(L, c, fl, fe, R)
    local, edge = latency_parts(L, c, fl, fe, R, ell)
    assert np.max(np.abs(local - edge) / local) <= 1e-9
    assert split_latency(L, c, fl, fe, R) == pytest.approx(local, rel=1e-12)


def test_split_latency_degenerate():
    assert split_latency(1e6, 1e3, 6e8, 0.0, 1e6) == pytest.approx(1e6 * 1e3 / 6e8)
    assert split_latency(1e6, 1e3, 6e8, 1e9, 0.0) == pytest.approx(1e6 * 1e3 / 6e8)


def test_integerize_split_integral():
    assert integerize_split(5.0, lambda x: 0.0) == 5


def test_integerize_split_tie_goes_down():
    assert integerize_split(4.5, lambda x: 1.0) == 4


def test_integerize_split_brute_force(rng):
    for _ in range(100):
        L, c, fl = rng.uniform(1e5, 1e7), rng.uniform(1e2, 1e4), rng.uniform(1e8, 2e9)
        fe, R = rng.uniform(1e8, 3e10), rng.uniform(1e4, 1e8)
        ell_hat = float(optimal_split(L, c, fl, fe, R)) + rng.uniform(-0.5, 0.5)

        def D(x):
            local, edge = latency_parts(L, c, fl, fe, R, x)
            return max(float(local), float(edge))

        chosen = integerize_split(ell_hat, D)
        # every integer within two bits; only floor and ceil are admissible
        window = range(math.floor(ell_hat) - 2, math.ceil(ell_hat) + 3)
        pair = [x for x in window if abs(x - ell_hat) < 1]
        assert chosen in pair
        assert D(chosen) == min(D(x) for x in pair)


def test_kkt_upper_endpoint_kills_allocation(scenario):
    L, c, fl = task_arrays(scenario)
    R = np.full(4, 3e6)
    assert np.all(kkt_fe(L * c / fl**2, L, c, fl, R) <= 1e-6 * fl)


def test_kkt_sum_decreasing_in_mu(scenario):
    L, c, fl = task_arrays(scenario)
    R = np.array([1e6, 3e6, 5e6, 7e5])
    mus = np.geomspace(1e-16, 1e-2, 200)
    totals = np.array([kkt_fe(m, L, c, fl, R).sum() for m in mus])
    assert np.all(np.diff(totals) <= 0)


def test_kkt_single_device(scenario):
    sc = scenario.replace(K=1)
    L, c, fl = task_arrays(sc)
    alloc, mu = kkt_edge_allocation(np.array([2e6]), sc)
    assert alloc.fe[0] == pytest.approx(sc.fmax_cps, rel=1e-6)
    assert kkt_fe(mu, L, c, fl, np.array([2e6]))[0] == pytest.approx(alloc.fe[0], rel=1e-12)


def _seeded_rates(scenario, seed=0):
    real, _ = draw_trial(scenario, seed)
    _, g = mmse_beamformers(real.channels(boresight_deflections(real.N)), scenario.powers_w, scenario.noise_w)
    return rates_from_sinr(g, scenario.bandwidth_hz)


def test_kkt_stationarity_defaults(scenario):
    R = _seeded_rates(scenario)
    L, c, fl = task_arrays(scenario)
    alloc, mu = kkt_edge_allocation(R, scenario)
    assert alloc.binding
    assert alloc.fe.sum() == pytest.approx(30e9, rel=1e-6)
    x = c * R
    slope = -L * c**3 * R**2 / (alloc.fe * (fl + x) + x * fl) ** 2
    # the derivative formula itself against central differences
    h = 1e3
    fd = (split_latency(L, c, fl, alloc.fe + h, R) - split_latency(L, c, fl, alloc.fe - h, R)) / (2 * h)
    assert fd == pytest.approx(slope, rel=1e-6)
    act = alloc.fe > 0
    assert np.all(np.abs(slope[act] + mu) <= 1e-6 * mu)


def test_kkt_zero_rates(scenario):
    alloc, mu = kkt_edge_allocation(np.zeros(4), scenario)
    assert not alloc.binding and np.all(alloc.fe == 0)


def test_oracle_single_device_matches_kkt(scenario):
    sc = scenario.replace(K=1)
    L, c, fl = task_arrays(sc)
    R = np.array([2e6])
    alloc, _ = kkt_edge_allocation(R, sc)
    _, tau = minmax_oracle_allocation(R, sc)
    assert tau == pytest.approx(float(split_latency(L, c, fl, alloc.fe, R)[0]), rel=1e-8)


def test_oracle_below_kkt(scenario, rng):
    L, c, fl = task_arrays(scenario)
    for _ in range(100):
        R = rng.uniform(1e5, 2e7, 4)
        alloc, _ = kkt_edge_allocation(R, scenario)
        _, tau = minmax_oracle_allocation(R, scenario)
        assert tau <= float(np.max(split_latency(L, c, fl, alloc.fe, R))) + 1e-9


def test_oracle_equalizes_latency(scenario, rng):
    L, c, fl = task_arrays(scenario)
    for _ in range(20):
        R = rng.uniform(1e5, 2e7, 4)
        alloc, tau = minmax_oracle_allocation(R, scenario)
        D = split_latency(L, c, fl, alloc.fe, R)
        act = alloc.fe > 0
        assert np.all(np.abs(D[act] / tau - 1) <= 1e-6)
        assert alloc.fe.sum() <= scenario.fmax_cps * (1 + 1e-6)


def test_oracle_grid_two_devices(scenario):
    sc = scenario.replace(K=2)
    L, c, fl = task_arrays(sc)
    R = np.array([5e5, 4e6])
    fe1 = np.linspace(0.0, sc.fmax_cps, 100_001)
    D1 = split_latency(L[0], c[0], fl[0], fe1, R[0])
    D2 = split_latency(L[1], c[1], fl[1], sc.fmax_cps - fe1, R[1])
    grid_tau = float(np.min(np.maximum(D1, D2)))
    _, tau = minmax_oracle_allocation(R, sc)
    assert tau == pytest.approx(grid_tau, rel=1e-4)


def test_oracle_monotone_in_fmax(scenario):
    R = np.array([5e5, 4e6, 1e6, 2e6])
    taus = [minmax_oracle_allocation(R, scenario.replace(fmax_cps=f))[1] for f in np.linspace(1e9, 60e9, 30)]
    assert np.all(np.diff(taus) <= 0)


def test_evaluate_latency_cases(scenario):
    R = np.full(4, 2e6)
    local_only = Allocation(np.zeros(4), np.full(4, 7.5e9))
    rep = evaluate_latency(scenario, R, local_only)
    assert rep.tau == pytest.approx(1e6 * 1e3 / 6e8, rel=1e-12)
    assert rep.tau == pytest.approx(1.667, rel=1e-3)
    assert np.all(rep.edge == 0)

    all_edge = Allocation(np.full(4, 1e6), np.full(4, 7.5e9))
    rep = evaluate_latency(scenario, np.full(4, 1e30), all_edge)
    assert rep.total == pytest.approx(np.full(4, 1e6 * 1e3 / 7.5e9), rel=1e-12)

    stuck = Allocation(np.full(4, 10.0), np.zeros(4))
    assert math.isinf(evaluate_latency(scenario, R, stuck).tau)


def test_integerize_allocation(scenario):
    R = _seeded_rates(scenario)
    alloc, _ = kkt_edge_allocation(R, scenario)
    final = integerize_allocation(scenario, R, alloc)
    assert np.all(final.ell == np.round(final.ell))
    assert np.all(np.abs(final.ell - alloc.ell) <= 1.0)
    real_tau = evaluate_latency(scenario, R, alloc).tau
    assert evaluate_latency(scenario, R, final).tau == pytest.approx(real_tau, rel=1e-5)
