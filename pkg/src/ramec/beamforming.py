"""Receive beamforming for fixed deflections.

Channels are passed as a ``(K, N)`` array ``H`` whose row ``k`` is ``h_k``;
beamformers likewise as ``(K, N)`` with row ``k`` equal to ``w_k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compute_alloc import Allocation, task_arrays
from .scenario import Scenario

BISECT_RTOL = 1e-8
UPPER_MARGIN = 1e-6


def sinr(w, H, k: int, powers, sigma2: float) -> float:
    """SINR of device ``k`` after combining with ``w``."""
    g = np.abs(np.conj(w) @ H.T) ** 2 * np.asarray(powers)
    return float(g[k] / (g.sum() - g[k] + sigma2))


def sinr_all(W, H, powers, sigma2: float) -> np.ndarray:
    """SINR of every device, device ``k`` decoded with row ``k`` of ``W``."""
    G = np.abs(np.conj(W) @ H.T) ** 2 * np.asarray(powers)[None, :]
    sig = np.diag(G)
    return sig / (G.sum(axis=1) - sig + sigma2)


def rates_from_sinr(gamma, bandwidth: float) -> np.ndarray:
    return bandwidth * np.log2(1.0 + np.asarray(gamma))


def _interference_cov(H, k, powers, sigma2):
    N = H.shape[1]
    mask = np.arange(H.shape[0]) != k
    Hi = H[mask] * np.sqrt(np.asarray(powers)[mask])[:, None]
    return Hi.T @ Hi.conj() + sigma2 * np.eye(N)


def mmse_beamformer(H, k: int, powers, sigma2: float) -> tuple[np.ndarray, float]:
    """Unit-norm SINR-maximizing combiner for device ``k`` and its SINR.

    ``w ~ (sum_{j!=k} P_j h_j h_j^H + sigma2 I)^{-1} h_k`` with
    ``gamma = P_k h_k^H (...)^{-1} h_k``.
    """
    Q = _interference_cov(H, k, powers, sigma2)
    v = np.linalg.solve(Q, H[k])
    gamma = float(np.real(np.vdot(H[k], v))) * float(np.asarray(powers)[k])
    return v / np.linalg.norm(v), gamma


def mmse_beamformers(H, powers, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    K = H.shape[0]
    out = [mmse_beamformer(H, k, powers, sigma2) for k in range(K)]
    return np.array([w for w, _ in out]), np.array([g for _, g in out])


def covariances(H) -> np.ndarray:
    """Rank-one ``H_k = h_k h_k^H`` stacked as ``(K, N, N)``."""
    return H[:, :, None] * H[:, None, :].conj()


@dataclass
class SdrResult:
    feasible: bool
    device_feasible: np.ndarray  # (K,) bool
    vectors: np.ndarray  # (K, N) top eigenvector; W_k = v v^H is optimal
    margins: np.ndarray  # lambda_max - gamma sigma2


def sdr_feasibility(gammas, covs, powers, sigma2: float) -> SdrResult:
    """Decide the relaxed SINR feasibility problem for every device.

    For device ``k`` the set ``{W >= 0, tr W = 1, P_k tr(W H_k) >= g (sum P_j
    tr(W H_j) + sigma2)}`` is nonempty exactly when the top eigenvalue of
    ``P_k H_k - g sum_{j!=k} P_j H_j`` reaches ``g sigma2``: a linear function
    over the unit-trace PSD cone peaks at the top eigenvector.
    """
    gammas = np.asarray(gammas, dtype=float)
    finite = np.isfinite(gammas)
    g = np.where(finite, gammas, 0.0)
    P = np.asarray(powers, dtype=float)
    weighted = covs * P[:, None, None]
    total = weighted.sum(axis=0)
    M = (1.0 + g)[:, None, None] * weighted - g[:, None, None] * total[None]
    vals, vecs = np.linalg.eigh(M)
    margins = np.where(finite, vals[:, -1] - g * sigma2, -np.inf)
    ok = margins >= 0
    return SdrResult(bool(np.all(ok)), ok, vecs[:, :, -1], margins)


def max_feasible_sinr(covs, powers, sigma2: float, lower=None, rtol: float = 1e-13):
    """Largest per-device SINR target passing :func:`sdr_feasibility`.

    Bisects every device at once between ``lower`` (default 0, feasible) and
    the interference-free bound ``P_k ||h_k||^2 / sigma2``.  Returns the
    targets and the corresponding top eigenvectors.
    """
    P = np.asarray(powers, dtype=float)
    K = covs.shape[0]
    lo = np.zeros(K) if lower is None else np.array(lower, dtype=float)
    hi = P * np.real(np.trace(covs, axis1=1, axis2=2)) / sigma2 * (1.0 + 1e-9)
    res = sdr_feasibility(lo, covs, P, sigma2)
    vectors = res.vectors.copy()
    for _ in range(200):
        if np.all(hi - lo <= rtol * hi):
            break
        mid = 0.5 * (lo + hi)
        probe = sdr_feasibility(mid, covs, P, sigma2)
        ok = probe.device_feasible
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
        vectors[ok] = probe.vectors[ok]
    return lo, vectors


def gaussian_randomization(
    W_k,
    H,
    k: int,
    powers,
    sigma2: float,
    samples: int,
    rng: np.random.Generator,
    candidate=None,
) -> np.ndarray:
    """Rank-one recovery from a PSD matrix ``W_k``.

    Draws ``samples`` circular Gaussian vectors with covariance ``W_k``,
    normalizes them and keeps the best SINR.  ``candidate`` (default: the top
    eigenvector of ``W_k``) is always scored first and is replaced only by a
    strictly better sample.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    vals, vecs = np.linalg.eigh(W_k)
    # round-off eigenvalues would otherwise let samples drift off a rank-one W
    vals = np.where(vals > 1e-12 * vals[-1], vals, 0.0)
    if candidate is None:
        candidate = vecs[:, -1]
    N = W_k.shape[0]
    z = (rng.standard_normal((samples, N)) + 1j * rng.standard_normal((samples, N))) / np.sqrt(2.0)
    draws = (z * np.sqrt(vals)[None, :]) @ vecs.T
    norms = np.linalg.norm(draws, axis=1)
    draws = draws[norms > 0] / norms[norms > 0, None]

    best = candidate / np.linalg.norm(candidate)
    best_val = sinr(best, H, k, powers, sigma2)
    if len(draws):
        G = np.abs(draws.conj() @ H.T) ** 2 * np.asarray(powers)[None, :]
        vals_s = G[:, k] / (G.sum(axis=1) - G[:, k] + sigma2)
        i = int(np.argmax(vals_s))
        if vals_s[i] > best_val * (1.0 + 1e-12):
            best = draws[i]
    return best


def edge_stage_latency(t3, L, c, fl, fe, R):
    """Offload-plus-compute bound of the slack formulation: ``ell_hat(R)/R + t3``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(fe > 0, L * c * fe / (fe * fl + c * R * (fe + fl)), 0.0)
    return first + t3


def bisection_beamforming(
    scenario: Scenario,
    H,
    allocation: Allocation,
    rng: np.random.Generator | None = None,
    samples: int = 32,
) -> tuple[np.ndarray, float]:
    """Minimize the latency bound ``t2`` over the beamformers by bisection.

    Each probe converts ``t2`` into per-device SINR targets and tests them with
    :func:`sdr_feasibility`; the smallest feasible ``t2`` (to ``BISECT_RTOL``)
    and the recovered unit beamformers are returned.
    """
    P = scenario.powers_w
    sigma2 = scenario.noise_w
    bw = scenario.bandwidth_hz
    L, c, fl = task_arrays(scenario)
    fe = np.asarray(allocation.fe, dtype=float)
    ell = np.asarray(allocation.ell, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t3 = np.where(ell > 0, ell * c / fe, 0.0)

    W_mmse, g_mmse = mmse_beamformers(H, P, sigma2)
    covs = covariances(H)

    def required_sinr(t2):
        slack = t2 - t3
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            R_req = (L * c * fe / slack - fe * fl) / (c * (fe + fl))
            R_req = np.where(slack > 0, np.maximum(R_req, 0.0), np.inf)
            return np.expm1(R_req / bw * np.log(2.0))

    lo = float(np.max(t3))
    hi = float(np.max(edge_stage_latency(t3, L, c, fl, fe, rates_from_sinr(g_mmse, bw))))
    hi *= 1.0 + UPPER_MARGIN
    res = sdr_feasibility(required_sinr(hi), covs, P, sigma2)
    if not res.feasible:
        # numerical corner: the MMSE beamformers are optimal, fall back to them
        return W_mmse, hi
    while hi - lo > BISECT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        probe = sdr_feasibility(required_sinr(mid), covs, P, sigma2)
        if probe.feasible:
            hi, res = mid, probe
        else:
            lo = mid

    # each device then takes its own largest feasible target, which is still
    # feasible at t2 and never lowers any device's SINR
    _, vectors = max_feasible_sinr(covs, P, sigma2, lower=required_sinr(hi))
    W = np.empty_like(H)
    for k in range(H.shape[0]):
        v = vectors[k]
        if rng is not None:
            W[k] = gaussian_randomization(np.outer(v, v.conj()), H, k, P, sigma2, samples, rng, candidate=v)
        else:
            W[k] = v / np.linalg.norm(v)
    return W, hi
