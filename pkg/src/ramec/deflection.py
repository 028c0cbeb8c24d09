"""Boresight optimization for fixed beamformers and edge allocation.

The SINR ratio is handled by the quadratic transform; inside it the desired
term is linearized and every interference term ``u_{k,j} = |w_k^H h_j|^2`` is
majorized by a quadratic with curvature ``delta``.  Antennas are updated one at
a time (block-coordinate MM) and a candidate boresight is kept only if the true
worst-device latency drops.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, channel_gradient
from .compute_alloc import Allocation, split_latency, task_arrays
from .scenario import Scenario
from . import _mmpass_py

log = logging.getLogger(__name__)

if os.environ.get("RAMEC_PURE_PYTHON") == "1":
    _kernel = _mmpass_py
else:
    try:
        from . import _mmpass as _kernel
    except ImportError:  # extension not built
        _kernel = _mmpass_py

BACKEND = "cython" if _kernel is not _mmpass_py else "python"

MAX_OUTER = 30
OUTER_RTOL = 1e-4
SUBGRAD_STEPS = 200
STEP0 = 0.1


def update_eta(H, W, powers, sigma2: float) -> np.ndarray:
    """Optimal quadratic-transform auxiliaries ``sqrt(P_k) w_k^H h_k / (I_k + sigma2)``."""
    P = np.asarray(powers, dtype=float)
    Y = np.conj(W) @ H.T
    G = np.abs(Y) ** 2 * P[None, :]
    interference = G.sum(axis=1) - np.diag(G)
    return np.sqrt(P) * np.diag(Y) / (interference + sigma2)


def quadratic_transform(H, W, eta, powers, sigma2: float) -> np.ndarray:
    """``2 Re{conj(eta_k) sqrt(P_k) w_k^H h_k} - |eta_k|^2 (I_k + sigma2)``.

    With ``eta`` from :func:`update_eta` this equals the SINR exactly.
    """
    P = np.asarray(powers, dtype=float)
    Y = np.conj(W) @ H.T
    G = np.abs(Y) ** 2 * P[None, :]
    interference = G.sum(axis=1) - np.diag(G)
    return 2 * np.real(np.conj(eta) * np.sqrt(P) * np.diag(Y)) - np.abs(eta) ** 2 * (interference + sigma2)


@dataclass
class MajorizerCoeffs:
    """``u(b) = A + B b^p + C b^(2p)`` for one (receiver k, source j, antenna n).

    ``b`` is the projection of the boresight on ``qhat``.
    """

    A: float
    B: float
    C: float
    p: float
    qhat: np.ndarray

    def u(self, b):
        return self.A + self.B * b**self.p + self.C * b ** (2 * self.p)

    def u_at(self, f):
        return self.u(float(np.dot(f, self.qhat)))


def majorizer_coeffs(real: ChannelRealization, F, W, k: int, j: int, n: int) -> MajorizerCoeffs:
    """Split ``|w_k^H h_j(F)|^2`` into its dependence on antenna ``n``."""
    wc = np.conj(W[k])
    h = real.channels(F)[j]
    c = wc[n] * real.beta_tilde[j, n]
    xi = wc[n] * real.nlos[j, n]
    others = np.dot(np.delete(wc, n), np.delete(h, n))
    dbar = others + xi
    return MajorizerCoeffs(
        A=float(abs(dbar) ** 2),
        B=float(2 * np.real(dbar * np.conj(c))),
        C=float(abs(c) ** 2),
        p=real.p,
        qhat=real.geometry.unit_directions[j, n].copy(),
    )


def majorand_gradient_hessian(coeffs: MajorizerCoeffs, b: float) -> tuple[np.ndarray, float]:
    """Gradient in ``f`` and the scalar multiplying ``qhat qhat^T`` in the Hessian."""
    p, B, C = coeffs.p, coeffs.B, coeffs.C
    if p < 1:
        raise ValueError("p must be >= 1")
    if b == 0 and p < 2:
        raise ValueError("second derivative is singular at b = 0 for p < 2")
    if B == 0 and C == 0:
        return np.zeros(3), 0.0
    du = p * b ** (p - 1) * (B + 2 * C * b**p)
    d2u = p * (p - 1) * B * b ** (p - 2) + 2 * p * (2 * p - 1) * C * b ** (2 * p - 2)
    return du * coeffs.qhat, float(d2u)


def lipschitz_delta(coeffs: MajorizerCoeffs) -> float:
    """Bound on ``|d^2u/db^2|`` over ``b`` in [-1, 1]: ``p(p-1)|B| + 2p(2p-1)C``."""
    p = coeffs.p
    return p * (p - 1) * abs(coeffs.B) + 2 * p * (2 * p - 1) * coeffs.C


def majorizer_value(coeffs: MajorizerCoeffs, f, anchor, delta: float | None = None) -> float:
    """Quadratic upper bound of ``u`` built at ``anchor`` and evaluated at ``f``."""
    if delta is None:
        delta = lipschitz_delta(coeffs)
    f = np.asarray(f, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    b0 = float(np.dot(anchor, coeffs.qhat))
    grad, _ = majorand_gradient_hessian(coeffs, b0)
    diff = f - anchor
    return coeffs.u(b0) + float(grad @ diff) + 0.5 * delta * float(diff @ diff)


@dataclass
class LinearizedNumerator:
    """Affine model ``value0 + sum_n jac[n] . (f_n - anchor[n])`` of ``w_k^H h_k(F)``."""

    value0: complex
    jac: np.ndarray  # (N, 3) complex
    anchor: np.ndarray  # (N, 3)

    def __call__(self, F) -> complex:
        return complex(self.value0 + np.sum(self.jac * (np.asarray(F) - self.anchor)))


def sca_linearize_numerator(F_anchor, real: ChannelRealization, W, k: int) -> LinearizedNumerator:
    F_anchor = np.asarray(F_anchor, dtype=float)
    wc = np.conj(W[k])
    h = real.channels(F_anchor)[k]
    jac = np.array([wc[n] * channel_gradient(real, k, n, F_anchor[n]) for n in range(real.N)])
    return LinearizedNumerator(complex(wc @ h), jac, F_anchor.copy())


def project_cap(v, theta_max: float) -> np.ndarray:
    """Euclidean projection onto ``{||f|| <= 1, f . e1 >= cos(theta_max)}``."""
    return _mmpass_py.project_cap(np.asarray(v, dtype=float), np.cos(theta_max))


@dataclass
class FpState:
    eta: np.ndarray
    objective: list = field(default_factory=list)
    outer_iterations: int = 0


def deflection_objective(real: ChannelRealization, F, W, allocation: Allocation, scenario: Scenario) -> float:
    """Worst-device latency with the offload split re-balanced for the current rates."""
    from .beamforming import rates_from_sinr, sinr_all

    H = real.channels(F)
    gamma = sinr_all(W, H, scenario.powers_w, scenario.noise_w)
    L, c, fl = task_arrays(scenario)
    R = rates_from_sinr(gamma, scenario.bandwidth_hz)
    return float(np.max(split_latency(L, c, fl, allocation.fe, R)))


def optimize_deflections(
    F_init,
    real: ChannelRealization,
    W,
    allocation: Allocation,
    scenario: Scenario,
    *,
    max_outer: int = MAX_OUTER,
    rtol: float = OUTER_RTOL,
    steps: int = SUBGRAD_STEPS,
    step0: float = STEP0,
    kernel=None,
) -> tuple[np.ndarray, FpState]:
    """Fractional-programming outer loop around block MM passes.

    Each pass refreshes the auxiliaries, builds a concave per-device surrogate
    for every antenna and minimizes the worst resulting latency by projected
    subgradient.  The returned deflections never score worse than ``F_init``.
    """
    kernel = kernel or _kernel
    F = np.array(F_init, dtype=float, order="C")
    L, c, fl = task_arrays(scenario)
    P = np.ascontiguousarray(scenario.powers_w, dtype=float)
    args = (
        np.ascontiguousarray(real.geometry.unit_directions),
        np.ascontiguousarray(real.beta_tilde),
        np.ascontiguousarray(real.nlos),
        np.ascontiguousarray(W, dtype=complex),
        P,
        float(scenario.noise_w),
        float(real.p),
        float(np.cos(scenario.theta_max_rad)),
        np.ascontiguousarray(L * c),
        np.ascontiguousarray(c * scenario.bandwidth_hz),
        np.ascontiguousarray(allocation.fe, dtype=float),
        np.ascontiguousarray(fl),
        int(steps),
        float(step0),
    )
    H = real.channels(F)
    state = FpState(eta=update_eta(H, W, P, scenario.noise_w))
    prev = deflection_objective(real, F, W, allocation, scenario)
    state.objective.append(prev)
    if real.isotropic or real.p == 0:
        return F, state
    for it in range(max_outer):
        obj = kernel.mm_pass(F, *args)
        state.objective.append(obj)
        state.outer_iterations = it + 1
        if prev - obj <= rtol * prev:
            break
        prev = obj
    state.eta = update_eta(real.channels(F), W, P, scenario.noise_w)
    return F, state
