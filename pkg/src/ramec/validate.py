"""Oracle-backed self checks.

Every check recomputes a quantity by an independent route (finite
differences, quadrature, dense grids, direct eigen-solves) and compares it
with the production code.  ``run_validation`` returns one :class:`Check` per
item; the two corruption knobs exist so that tests can confirm the checks
actually bite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _mmpass_py
from .beamforming import (
    bisection_beamforming,
    covariances,
    edge_stage_latency,
    max_feasible_sinr,
    mmse_beamformers,
    rates_from_sinr,
    sinr_all,
)
from .channel import (
    as_isotropic,
    boresight_deflections,
    channel_gradient,
    peak_gain,
    random_deflections,
    realize_channel,
)
from .compute_alloc import (
    Allocation,
    kkt_edge_allocation,
    latency_parts,
    minmax_oracle_allocation,
    optimal_split,
    split_latency,
    task_arrays,
)
from .deflection import (
    BACKEND,
    MajorizerCoeffs,
    majorand_gradient_hessian,
    lipschitz_delta,
    majorizer_coeffs,
    optimize_deflections,
    project_cap,
    quadratic_transform,
    sca_linearize_numerator,
    update_eta,
)
from .scenario import Scenario, build_geometry, pointing_vector, sample_device_angles


@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: residual={self.residual:.3e} tol={self.tol:.1e}"
        return text + (f" ({self.detail})" if self.detail else "")


def _check(name, residual, tol, detail="") -> Check:
    residual = float(residual)
    return Check(name, bool(residual <= tol), residual, tol, detail)


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


def _random_instance(scenario: Scenario, rng: np.random.Generator):
    angles = sample_device_angles(rng, scenario.K)
    real = realize_channel(scenario, build_geometry(scenario, angles), rng)
    F = random_deflections(real.N, scenario.theta_max_rad, rng)
    return real, F


# --- geometry and channel -------------------------------------------------


def check_pointing(rng) -> Check:
    te = rng.uniform(0.0, math.pi / 2 - 1e-6, 500)
    ta = rng.uniform(0.0, 2 * math.pi, 500)
    worst = 0.0
    for a, b in zip(te, ta):
        f = pointing_vector(a, b)
        back_e = math.acos(min(1.0, f[0]))
        back_a = math.atan2(f[1], f[2]) % (2 * math.pi)
        err_a = abs((back_a - b + math.pi) % (2 * math.pi) - math.pi) * math.sin(a)
        worst = max(worst, abs(np.linalg.norm(f) - 1.0), abs(back_e - a), err_a)
    return _check("pointing vector norm and angle round trip", worst, 1e-10)


def check_power_conservation(gain: Callable[[float], float] | None = None) -> list[Check]:
    """Midpoint quadrature of the pattern over the sphere (2e6 nodes) against ``4 pi``.

    The pattern is centred on a tilted boresight so the grid is not aligned with it.
    """
    gain = gain or peak_gain
    n_t, n_p = 2000, 1000
    theta = (np.arange(n_t) + 0.5) * (math.pi / n_t)
    phi = (np.arange(n_p) + 0.5) * (2 * math.pi / n_p)
    st = np.sin(theta)[:, None]
    dirs = np.stack(
        [np.cos(theta)[:, None] * np.ones(n_p), st * np.cos(phi), st * np.sin(phi)], axis=-1
    )
    cos_eps = dirs @ pointing_vector(0.4, 1.1)
    weight = st * (math.pi / n_t) * (2 * math.pi / n_p)
    out = []
    for p in (0.0, 1.0, 2.0, 4.0):
        G = np.where(cos_eps > 0, gain(p) * np.maximum(cos_eps, 0.0) ** (2 * p), 0.0)
        integral = float(np.sum(G * weight))
        out.append(_check(f"pattern integrates to 4pi (p={p:g})", abs(integral / (4 * math.pi) - 1.0), 1e-2))
    return out


def check_isotropic(scenario, rng) -> Check:
    real, _ = _random_instance(scenario, rng)
    iso = as_isotropic(real, scenario)
    ref = iso.channels(boresight_deflections(real.N))
    worst = 0.0
    for _ in range(10):
        F = random_deflections(real.N, scenario.theta_max_rad, rng)
        worst = max(worst, float(np.max(np.abs(iso.channels(F) - ref))))
    kappa = scenario.per_device("kappa")[:, None]
    w_los = np.where(np.isinf(kappa), 1.0, np.sqrt(kappa / (1.0 + np.where(np.isinf(kappa), 0.0, kappa))))
    w_nlos = np.where(np.isinf(kappa), 0.0, 1.0 / np.sqrt(1.0 + np.where(np.isinf(kappa), 0.0, kappa)))
    direct = np.sqrt(iso.large_scale) * (w_nlos * iso.nlos_draws + w_los * iso.los_phase)
    worst = max(worst, float(np.max(_rel(ref, direct))))
    return _check("isotropic channel ignores deflections", worst, 1e-12)


def check_channel_gradient(scenario, rng) -> Check:
    real, F = _random_instance(scenario, rng)
    h = 1e-6
    worst = 0.0
    for k in range(real.K):
        for n in range(real.N):
            g = channel_gradient(real, k, n, F[n])
            fd = np.empty(3, dtype=complex)
            for i in range(3):
                Fp, Fm = F.copy(), F.copy()
                Fp[n, i] += h
                Fm[n, i] -= h
                fd[i] = (real.channels(Fp)[k, n] - real.channels(Fm)[k, n]) / (2 * h)
            scale = max(np.abs(g).max(), np.abs(real.beta_tilde[k, n]) * 1e-3)
            worst = max(worst, float(np.abs(fd - g).max() / scale))
    return _check("channel gradient vs central differences", worst, 1e-6)


# --- computation allocation -----------------------------------------------


def check_equal_latency(rng, draws: int = 10_000) -> Check:
    L = rng.uniform(1e5, 1e7, draws)
    c = rng.uniform(1e2, 1e4, draws)
    fl = rng.uniform(1e8, 2e9, draws)
    fe = rng.uniform(1e8, 3e10, draws)
    R = rng.uniform(1e4, 1e8, draws)
    ell = optimal_split(L, c, fl, fe, R)
    local, edge = latency_parts(L, c, fl, fe, R, ell)
    return _check("local and edge latency equal at the optimal split", np.max(_rel(local, edge)), 1e-9)


def check_kkt(scenario, rng, count: int = 100) -> list[Check]:
    L, c, fl = task_arrays(scenario)
    stat, total = 0.0, 0.0
    gaps = []
    oracle_excess = 0.0
    for _ in range(count):
        R = rng.uniform(1e5, 2e7, scenario.K)
        alloc, mu = kkt_edge_allocation(R, scenario)
        x = c * R
        den = alloc.fe * (fl + x) + x * fl
        slope = -L * c * x**2 / den**2  # derivative of split latency in fe
        act = alloc.fe > 0
        stat = max(stat, float(np.max(_rel(-slope[act], mu))))
        # inactive devices must not want capacity at this price
        if np.any(~act):
            stat = max(stat, float(np.max(np.maximum(0.0, (-slope[~act] - mu) / mu))))
        total = max(total, abs(alloc.fe.sum() / scenario.fmax_cps - 1.0))
        kkt_tau = float(np.max(split_latency(L, c, fl, alloc.fe, R)))
        _, oracle_tau = minmax_oracle_allocation(R, scenario)
        gaps.append(kkt_tau - oracle_tau)
        oracle_excess = max(oracle_excess, oracle_tau - kkt_tau)
    return [
        _check("edge shares stationary at the common multiplier", stat, 1e-6),
        _check("edge shares exhaust the capacity", total, 1e-6),
        _check(
            "min-max oracle never above the closed form",
            max(oracle_excess, 0.0),
            1e-9,
            f"mean gap {np.mean(gaps):.3e} s, max gap {np.max(gaps):.3e} s",
        ),
    ]


# --- beamforming ----------------------------------------------------------


def check_sdr_vs_mmse(scenario, rng, count: int = 100) -> Check:
    P, s2 = scenario.powers_w, scenario.noise_w
    worst = 0.0
    for _ in range(count):
        real, F = _random_instance(scenario, rng)
        H = real.channels(F)
        _, g_mmse = mmse_beamformers(H, P, s2)
        g_sdr, _ = max_feasible_sinr(covariances(H), P, s2)
        worst = max(worst, float(np.max(_rel(g_sdr, g_mmse))))
    return _check("relaxed feasibility SINR equals the MMSE SINR", worst, 1e-8)


def check_bisection(scenario, rng, count: int = 20) -> Check:
    P, s2 = scenario.powers_w, scenario.noise_w
    L, c, fl = task_arrays(scenario)
    worst = 0.0
    for _ in range(count):
        real, F = _random_instance(scenario, rng)
        H = real.channels(F)
        _, g = mmse_beamformers(H, P, s2)
        alloc, _ = kkt_edge_allocation(rates_from_sinr(g, scenario.bandwidth_hz), scenario)
        W, t2 = bisection_beamforming(scenario, H, alloc, rng)
        t3 = alloc.ell * c / alloc.fe
        direct = float(np.max(edge_stage_latency(t3, L, c, fl, alloc.fe, rates_from_sinr(g, scenario.bandwidth_hz))))
        achieved = rates_from_sinr(sinr_all(W, H, P, s2), scenario.bandwidth_hz)
        t2_w = float(np.max(edge_stage_latency(t3, L, c, fl, alloc.fe, achieved)))
        worst = max(worst, abs(t2 / direct - 1.0), abs(t2_w / direct - 1.0))
    return _check("bisection beamforming matches the MMSE latency bound", worst, 1e-6)


# --- deflection surrogates ------------------------------------------------


def check_tightness(scenario, rng, count: int = 1000) -> Check:
    P, s2 = scenario.powers_w, scenario.noise_w
    worst = 0.0
    real, _ = _random_instance(scenario, rng)
    for _ in range(count):
        F = random_deflections(real.N, scenario.theta_max_rad, rng)
        H = real.channels(F)
        W = rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        eta = update_eta(H, W, P, s2)
        worst = max(worst, float(np.max(_rel(quadratic_transform(H, W, eta, P, s2), sinr_all(W, H, P, s2)))))
    return _check("quadratic transform tight at the optimal auxiliaries", worst, 1e-10)


def _random_coeffs(rng, p=4.0) -> MajorizerCoeffs:
    d = complex(rng.standard_normal(), rng.standard_normal())
    c = complex(rng.standard_normal(), rng.standard_normal())
    q = rng.standard_normal(3)
    return MajorizerCoeffs(abs(d) ** 2, 2 * (d * c.conjugate()).real, abs(c) ** 2, p, q / np.linalg.norm(q))


def check_derivatives(rng, count: int = 200) -> Check:
    h = 1e-5
    b = 0.7
    worst = 0.0
    for _ in range(count):
        co = _random_coeffs(rng)
        grad, hess = majorand_gradient_hessian(co, b)
        # differences in extended precision so rounding stays far below the tolerance
        A, B, C, p = (np.longdouble(x) for x in (co.A, co.B, co.C, co.p))
        u = lambda x: A + B * x**p + C * x ** (2 * p)
        bl, hl = np.longdouble(b), np.longdouble(h)
        d1 = float((u(bl + hl) - u(bl - hl)) / (2 * hl))
        d2 = float((u(bl + hl) - 2 * u(bl) + u(bl - hl)) / hl**2)
        scale = abs(co.B) + co.C
        worst = max(worst, float(np.max(np.abs(grad - d1 * co.qhat))) / max(abs(d1), scale))
        worst = max(worst, abs(hess - d2) / max(abs(d2), scale))
    return _check("majorand gradient and curvature vs central differences", worst, 1e-6)


def check_delta(rng, count: int = 200, delta_scale: float = 1.0) -> Check:
    worst = 0.0
    for _ in range(count):
        co = _random_coeffs(rng)
        delta = lipschitz_delta(co) * delta_scale
        b = np.concatenate([rng.uniform(-1.0, 1.0, 100), np.linspace(-1.0, 1.0, 2001)])
        curv = np.abs(co.p * (co.p - 1) * co.B * b ** (co.p - 2) + 2 * co.p * (2 * co.p - 1) * co.C * b ** (2 * co.p - 2))
        worst = max(worst, float(np.max(curv - delta)) / (abs(co.B) + co.C))
    return _check("curvature bound dominates the second derivative", max(worst, 0.0), 1e-12)


def check_majorizer(rng, count: int = 1000, delta_scale: float = 1.0) -> Check:
    worst = 0.0
    for _ in range(count):
        co = _random_coeffs(rng)
        anchor = rng.standard_normal(3)
        anchor *= rng.uniform() ** (1 / 3) / np.linalg.norm(anchor)
        f = rng.standard_normal(3)
        f *= rng.uniform() ** (1 / 3) / np.linalg.norm(f)
        b0 = float(anchor @ co.qhat)
        grad, _ = majorand_gradient_hessian(co, b0)
        delta = lipschitz_delta(co) * delta_scale
        diff = f - anchor
        bound = co.u(b0) + grad @ diff + 0.5 * delta * (diff @ diff)
        worst = max(worst, (co.u_at(f) - bound) / (co.A + abs(co.B) + co.C))
    return _check("quadratic majorizer stays above the interference term", max(worst, 0.0), 1e-12)


def check_coeffs(scenario, rng) -> Check:
    real, F = _random_instance(scenario, rng)
    H = real.channels(F)
    W, _ = mmse_beamformers(H, scenario.powers_w, scenario.noise_w)
    worst = 0.0
    for k in range(real.K):
        for j in range(real.K):
            exact = abs(np.vdot(W[k], H[j])) ** 2
            for n in range(real.N):
                co = majorizer_coeffs(real, F, W, k, j, n)
                b = float(F[n] @ co.qhat)
                if b <= 0:
                    continue
                worst = max(worst, abs(co.u(b) / exact - 1.0))
    return _check("interference term rebuilt from its per-antenna split", worst, 1e-10)


def check_linearization(scenario, rng, count: int = 50) -> Check:
    real, _ = _random_instance(scenario, rng)
    W = rng.standard_normal((real.K, real.N)) + 1j * rng.standard_normal((real.K, real.N))
    worst = 0.0
    for _ in range(count):
        F = random_deflections(real.N, scenario.theta_max_rad * 0.9, rng)
        k = int(rng.integers(real.K))
        phi = sca_linearize_numerator(F, real, W, k)
        step = rng.standard_normal(F.shape)
        F2 = F + 1e-4 * step / np.linalg.norm(step)
        exact = np.vdot(W[k], real.channels(F2)[k])
        worst = max(worst, abs(phi(F2) - exact) / abs(exact))
    return _check("linearized numerator accurate to first order", worst, 1e-6)


def check_projection(rng, theta_max: float, count: int = 100) -> Check:
    """Projection distance vs the best point of a dense grid over the set."""
    cos_max = math.cos(theta_max)
    r = np.linspace(0.0, 1.0, 41)
    te = np.linspace(0.0, math.pi, 61)
    ta = np.linspace(0.0, 2 * math.pi, 72, endpoint=False)
    R, T, A = np.meshgrid(r, te, ta, indexing="ij")
    grid = np.stack([R * np.cos(T), R * np.sin(T) * np.sin(A), R * np.sin(T) * np.cos(A)], -1).reshape(-1, 3)
    grid = grid[grid[:, 0] >= cos_max]
    resolution = 0.06
    worst = 0.0
    vs = np.vstack([-np.eye(3)[0], rng.standard_normal((count, 3)) * 1.5])
    for v in vs:
        x = project_cap(v, theta_max)
        inside = max(np.linalg.norm(x) - 1.0, cos_max - x[0], 0.0)
        best = float(np.min(np.linalg.norm(grid - v, axis=1)))
        excess = np.linalg.norm(x - v) - best
        worst = max(worst, inside * 1e6, excess - resolution)
    x = project_cap(-np.eye(3)[0], theta_max)
    worst = max(worst, float(np.max(np.abs(x - np.array([cos_max, 0.0, 0.0])))))
    return _check("cap projection no farther than the grid optimum", max(worst, 0.0), 1e-12)


def check_single_link_deflection(scenario) -> Check:
    """K=1, N=1, near pure LoS: boresight vs a 100x100 grid over the cap."""
    sc = scenario.replace(K=1, Ny=1, Nz=1, kappa=1e12)
    best = -1.0
    worst = 0.0
    te_grid = np.linspace(0.0, sc.theta_max_rad, 100)
    ta_grid = np.linspace(0.0, 2 * math.pi, 100, endpoint=False)
    cap = np.array([pointing_vector(a, b) for a in te_grid for b in ta_grid])
    for angle in (0.0, 0.4, 0.9, -1.3):
        real = realize_channel(sc, build_geometry(sc, [angle]), nlos_draws=np.zeros((1, 1)))
        F0 = boresight_deflections(1)
        H = real.channels(F0)
        W = H / np.abs(H)
        alloc, _ = kkt_edge_allocation(rates_from_sinr(sinr_all(W, H, sc.powers_w, sc.noise_w), sc.bandwidth_hz), sc)
        F, _ = optimize_deflections(F0, real, W, alloc, sc)
        q = real.unit_directions[0, 0]
        best = float(np.max(cap @ q))
        worst = max(worst, best - float(F[0] @ q))
    return _check("single-link boresight reaches the grid optimum", max(worst, 0.0), 1e-3)


def check_kernels(scenario, rng) -> Check:
    if BACKEND != "cython":
        return Check("compiled and Python kernels agree", True, 0.0, 1e-6, "compiled kernel not built, skipped")
    from . import _mmpass

    real, _ = _random_instance(scenario, rng)
    F0 = boresight_deflections(real.N)
    H = real.channels(F0)
    W, g = mmse_beamformers(H, scenario.powers_w, scenario.noise_w)
    alloc, _ = kkt_edge_allocation(rates_from_sinr(g, scenario.bandwidth_hz), scenario)
    _, s_c = optimize_deflections(F0, real, W, alloc, scenario, kernel=_mmpass)
    _, s_p = optimize_deflections(F0, real, W, alloc, scenario, kernel=_mmpass_py)
    # same arithmetic in a different order; accept/reject decisions amplify rounding
    return _check("compiled and Python kernels agree", abs(s_c.objective[-1] / s_p.objective[-1] - 1.0), 1e-6)


def run_validation(
    scenario: Scenario | None = None,
    *,
    seed: int = 12345,
    delta_scale: float = 1.0,
    gain: Callable[[float], float] | None = None,
) -> list[Check]:
    """Run every check; ``delta_scale`` and ``gain`` corrupt the curvature bound and peak gain."""
    scenario = scenario or Scenario()
    rng = np.random.default_rng(seed)
    checks = [check_pointing(rng)]
    checks += check_power_conservation(gain)
    checks.append(check_isotropic(scenario, rng))
    checks.append(check_channel_gradient(scenario, rng))
    checks.append(check_equal_latency(rng))
    checks += check_kkt(scenario, rng)
    checks.append(check_sdr_vs_mmse(scenario, rng))
    checks.append(check_bisection(scenario, rng))
    checks.append(check_tightness(scenario, rng))
    checks.append(check_derivatives(rng))
    checks.append(check_delta(rng, delta_scale=delta_scale))
    checks.append(check_majorizer(rng, delta_scale=delta_scale))
    checks.append(check_coeffs(scenario, rng))
    checks.append(check_linearization(scenario, rng))
    checks.append(check_projection(rng, scenario.theta_max_rad))
    checks.append(check_single_link_deflection(scenario))
    checks.append(check_kernels(scenario, rng))
    return checks
