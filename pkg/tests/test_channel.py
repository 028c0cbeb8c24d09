import csv
import math
from pathlib import Path

import numpy as np
import pytest

from ramec.channel import (
    E1,
    as_isotropic,
    boresight_deflections,
    channel_gradient,
    channel_vector,
    check_deflections,
    directional_gain,
    large_scale_gain,
    peak_gain,
    random_deflections,
    realize_channel,
)
from ramec.driver import draw_trial
from ramec.scenario import build_geometry, pointing_vector
from ramec.validate import check_power_conservation

DATA = Path(__file__).resolve().parent / "data"


def test_directional_gain_values():
    assert directional_gain(1.0, 4) == pytest.approx(18.0)
    assert directional_gain(0.5, 4) == pytest.approx(18 * 0.5**8, rel=1e-12)
    assert directional_gain(0.5, 4) == pytest.approx(0.0703125, rel=1e-12)
    assert directional_gain(-0.3, 4) == 0.0
    assert directional_gain(0.0, 0) == 0.0
    assert peak_gain(0) == 2.0


def test_large_scale_gain():
    assert large_scale_gain(1.0, 1e-3, 2.8) == pytest.approx(1e-3)
    assert large_scale_gain(10.0, 1e-3, 2.8) == pytest.approx(1e-3 * 10 ** (-2.8), rel=1e-12)
    assert large_scale_gain(10.0, 1e-3, 2.8) == pytest.approx(1.5849e-6, rel=1e-4)
    d = np.linspace(1, 100, 50)
    assert np.all(np.diff(large_scale_gain(d, 1e-3, 2.8)) < 0)
    with pytest.raises(ValueError):
        large_scale_gain(0.0, 1e-3, 2.8)


def test_power_conservation():
    assert all(c.passed for c in check_power_conservation())


def _realization(scenario, angles, kappa=1.0, seed=0):
    sc = scenario.replace(kappa=kappa)
    return sc, realize_channel(sc, build_geometry(sc, angles), np.random.default_rng(seed))


def test_pure_los_limit(scenario):
    sc, real = _realization(scenario, [0.2, -0.5, 0.9, 0.0], kappa=1e12)
    F = random_deflections(sc.N, sc.theta_max_rad, np.random.default_rng(1))
    b = np.maximum(real.projections(F), 0.0)
    expect = np.sqrt(real.large_scale * peak_gain(4)) * b**4
    assert np.abs(real.channels(F)) == pytest.approx(expect, rel=1e-5)


def test_entry_formula(scenario):
    sc, real = _realization(scenario, [0.2, -0.5, 0.9, 0.0], kappa=2.0)
    F = random_deflections(sc.N, sc.theta_max_rad, np.random.default_rng(2))
    b = np.maximum(real.projections(F), 0.0)
    k = 2
    expect = np.sqrt(real.large_scale[k]) * (
        math.sqrt(2 / 3) * np.sqrt(18.0) * b[k] ** 4 * np.exp(-2j * np.pi * real.geometry.distances[k] / sc.wavelength_m)
        + math.sqrt(1 / 3) * real.nlos_draws[k]
    )
    assert channel_vector(real, k, F) == pytest.approx(expect, rel=1e-12)
    assert real.channels(F)[k] == pytest.approx(expect, rel=1e-12)
    assert np.abs(np.abs(real.los_phase) - 1).max() <= 1e-12


def test_orthogonal_boresight_kills_los(scenario):
    sc = scenario.replace(K=1, Ny=1, Nz=1, kappa=1e12, theta_max_rad=1.5)
    real = realize_channel(sc, build_geometry(sc, [1.2]), np.random.default_rng(0))
    q = real.unit_directions[0, 0]
    f = np.cross(q, [0.0, 0.0, 1.0])
    f /= np.linalg.norm(f)
    assert abs(float(f @ q)) < 1e-12
    assert np.linalg.norm(real.channels(f[None, :])) < 1e-6 * np.linalg.norm(real.channels(q[None, :]))


def test_infinite_kappa(scenario):
    sc, real = _realization(scenario, [0.0, 0.1, 0.2, 0.3], kappa=math.inf)
    assert np.all(real.nlos == 0)
    F = boresight_deflections(sc.N)
    assert np.all(np.isfinite(real.channels(F)))


def test_nlos_frozen(scenario):
    real, _ = draw_trial(scenario, 3)
    F = random_deflections(scenario.N, scenario.theta_max_rad, np.random.default_rng(3))
    assert np.array_equal(channel_vector(real, 1, F), channel_vector(real, 1, F))
    assert np.array_equal(real.channels(F), real.channels(F))


def test_isotropic_reduction(scenario, rng):
    real, _ = draw_trial(scenario, 4)
    iso = as_isotropic(real, scenario)
    ref = iso.channels(boresight_deflections(scenario.N))
    for _ in range(100):
        F = random_deflections(scenario.N, scenario.theta_max_rad, rng)
        assert np.abs(iso.channels(F) - ref).max() <= 1e-12
        assert np.abs(channel_vector(iso, 0, F) - ref[0]).max() <= 1e-12


def test_gradient_boresight_aligned(scenario):
    sc, real = _realization(scenario, [0.3, 0.0, 0.0, 0.0])
    q = real.unit_directions[0, 4]
    assert channel_gradient(real, 0, 4, q) == pytest.approx(4 * real.beta_tilde[0, 4] * q, rel=1e-12)


def test_gradient_back_lobe_zero(scenario):
    sc, real = _realization(scenario, [0.3, 0.0, 0.0, 0.0])
    q = real.unit_directions[0, 0]
    assert np.array_equal(channel_gradient(real, 0, 0, -q), np.zeros(3, dtype=complex))


def test_gradient_finite_differences(scenario, rng):
    sc, real = _realization(scenario, [0.3, -1.0, 0.8, 0.0])
    h = 1e-6
    for _ in range(20):
        F = random_deflections(sc.N, sc.theta_max_rad, rng)
        k, n = int(rng.integers(4)), int(rng.integers(9))
        g = channel_gradient(real, k, n, F[n])
        fd = np.empty(3, dtype=complex)
        for i in range(3):
            Fp, Fm = F.copy(), F.copy()
            Fp[n, i] += h
            Fm[n, i] -= h
            fd[i] = (channel_vector(real, k, Fp)[n] - channel_vector(real, k, Fm)[n]) / (2 * h)
        assert np.abs(fd - g).max() <= 1e-5 * np.abs(g).max()


def test_random_deflections_feasible(scenario, rng):
    F = random_deflections(50, scenario.theta_max_rad, rng)
    check_deflections(F, scenario.theta_max_rad)
    assert np.array_equal(random_deflections(9, 0.0, rng), boresight_deflections(9))
    with pytest.raises(ValueError):
        check_deflections(np.array([[0.0, 1.0, 0.0]]), scenario.theta_max_rad)
    with pytest.raises(ValueError):
        check_deflections(np.array([[2.0, 0.0, 0.0]]), scenario.theta_max_rad)
    assert np.array_equal(boresight_deflections(2), np.array([E1, E1]))


def test_realize_needs_source(scenario):
    geo = build_geometry(scenario, [0.0] * 4)
    with pytest.raises(ValueError):
        realize_channel(scenario, geo)


def test_golden_channel(scenario):
    real, _ = draw_trial(scenario, 0)
    H = real.channels(boresight_deflections(real.N))
    with open(DATA / "channel_seed0.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == H.size
    for r in rows:
        want = complex(float(r["re"]), float(r["im"]))
        assert H[int(r["k"]), int(r["n"])] == pytest.approx(want, rel=1e-12, abs=0)


def test_pointing_agrees_with_projection(scenario):
    sc, real = _realization(scenario, [0.0, 0.5, -0.5, 1.0])
    f = pointing_vector(0.2, 1.0)
    F = np.tile(f, (sc.N, 1))
    assert real.projections(F) == pytest.approx(real.unit_directions @ f)
