"""Directional Rician channel between the devices and the rotatable-antenna array.

The deflection matrix ``F`` is stored as an ``(N, 3)`` array whose row ``n``
is the boresight of antenna ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Geometry, Scenario

E1 = np.array([1.0, 0.0, 0.0])


def peak_gain(p: float) -> float:
    """Boresight gain G0 = 2(2p+1) of the cos^(2p) pattern."""
    return 2.0 * (2.0 * p + 1.0)


def directional_gain(cos_eps, p: float):
    """Power gain ``G0 cos^(2p)(eps)`` in the front half-space, zero behind."""
    cos_eps = np.asarray(cos_eps, dtype=float)
    front = np.maximum(cos_eps, 0.0)
    gain = peak_gain(p) * front ** (2.0 * p)
    return np.where(cos_eps > 0, gain, 0.0)


def large_scale_gain(d, zeta0_linear: float, alpha0: float):
    """Path gain ``zeta0 * (1 m / d) ** alpha0``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return zeta0_linear * d ** (-alpha0)


def boresight_deflections(N: int) -> np.ndarray:
    """Every antenna at its reference orientation +x."""
    return np.tile(E1, (N, 1))


def random_deflections(N: int, theta_max: float, rng: np.random.Generator) -> np.ndarray:
    """Azimuth uniform on [0, 2pi), zenith uniform on [0, theta_max]."""
    theta_a = rng.uniform(0.0, 2 * np.pi, size=N)
    theta_e = rng.uniform(0.0, theta_max, size=N)
    s = np.sin(theta_e)
    return np.column_stack([np.cos(theta_e), s * np.sin(theta_a), s * np.cos(theta_a)])


def check_deflections(F: np.ndarray, theta_max: float, tol: float = 1e-10) -> None:
    """Raise ``ValueError`` unless every row is a unit vector inside the zenith cone."""
    F = np.asarray(F, dtype=float)
    norms = np.linalg.norm(F, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError("deflection rows must be unit vectors")
    zenith = np.arccos(np.clip(F[:, 0], -1.0, 1.0))
    if np.any(zenith > theta_max + tol):
        raise ValueError("deflection exceeds the maximum zenith angle")


@dataclass(frozen=True)
class ChannelRealization:
    """Geometry plus frozen small-scale fading for one trial.

    ``h_{k,n}(f) = beta_tilde[k,n] * max(f . q_hat[k,n], 0) ** p + nlos[k,n]``,
    where ``beta_tilde`` carries the LoS amplitude and phase and ``nlos`` the
    scaled Rayleigh component.  With ``isotropic`` set the pattern factor is
    one for every direction and ``F`` has no effect.
    """

    geometry: Geometry
    nlos_draws: np.ndarray  # (K, N) standard circular Gaussian
    large_scale: np.ndarray  # (K, N)
    los_phase: np.ndarray  # (K, N) unit modulus
    beta_tilde: np.ndarray  # (K, N)
    nlos: np.ndarray  # (K, N) sqrt(L / (kappa+1)) * nlos_draws
    p: float
    isotropic: bool = False

    @property
    def K(self) -> int:
        return self.nlos.shape[0]

    @property
    def N(self) -> int:
        return self.nlos.shape[1]

    @property
    def unit_directions(self) -> np.ndarray:
        return self.geometry.unit_directions

    def projections(self, F: np.ndarray) -> np.ndarray:
        """``b[k, n] = f_n . q_hat[k, n]``."""
        return np.einsum("knd,nd->kn", self.geometry.unit_directions, F)

    def pattern(self, F: np.ndarray) -> np.ndarray:
        """Amplitude pattern factor ``max(b, 0) ** p`` for every link."""
        if self.isotropic:
            return np.ones_like(self.nlos, dtype=float)
        return np.maximum(self.projections(F), 0.0) ** self.p

    def channels(self, F: np.ndarray) -> np.ndarray:
        """All channel vectors as a ``(K, N)`` array (row k is ``h_k(F)``)."""
        return self.beta_tilde * self.pattern(F) + self.nlos


def _rician_weights(kappa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inf = np.isinf(kappa)
    finite = np.where(inf, 0.0, kappa)
    los = np.where(inf, 1.0, np.sqrt(finite / (finite + 1.0)))
    nlos = np.where(inf, 0.0, np.sqrt(1.0 / (finite + 1.0)))
    return los, nlos


def realize_channel(
    scenario: Scenario,
    geometry: Geometry,
    rng: np.random.Generator | None = None,
    *,
    nlos_draws: np.ndarray | None = None,
    isotropic: bool = False,
) -> ChannelRealization:
    """Draw (or reuse) NLoS fading and assemble the per-link coefficients.

    The isotropic variant models an omnidirectional element (unit gain, no
    pattern) and is used by the isotropic benchmark.
    """
    K, N = geometry.distances.shape
    if nlos_draws is None:
        if rng is None:
            raise ValueError("either rng or nlos_draws is required")
        nlos_draws = (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / np.sqrt(2.0)
    nlos_draws = np.asarray(nlos_draws, dtype=complex)

    L = large_scale_gain(geometry.distances, scenario.zeta0_linear, scenario.alpha0)
    phase = np.exp(-2j * np.pi * geometry.distances / scenario.wavelength_m)
    w_los, w_nlos = _rician_weights(scenario.per_device("kappa"))
    if isotropic:
        g0, p = 1.0, 0.0
    else:
        g0, p = peak_gain(scenario.p_exponent), scenario.p_exponent
    beta = w_los[:, None] * np.sqrt(L * g0) * phase
    nlos = w_nlos[:, None] * np.sqrt(L) * nlos_draws
    arrays = [nlos_draws, L, phase, beta, nlos]
    for a in arrays:
        a.setflags(write=False)
    return ChannelRealization(geometry, *arrays, p=p, isotropic=isotropic)


def as_isotropic(real: ChannelRealization, scenario: Scenario) -> ChannelRealization:
    """Same geometry and fading draws with omnidirectional elements."""
    return realize_channel(scenario, real.geometry, nlos_draws=real.nlos_draws, isotropic=True)


def channel_vector(real: ChannelRealization, k: int, F: np.ndarray) -> np.ndarray:
    """Channel ``h_k(F)`` of device ``k`` across the N antennas."""
    q = real.geometry.unit_directions[k]
    if real.isotropic:
        amp = np.ones(real.N)
    else:
        amp = np.maximum(np.einsum("nd,nd->n", q, F), 0.0) ** real.p
    return real.beta_tilde[k] * amp + real.nlos[k]


def channel_gradient(real: ChannelRealization, k: int, n: int, f_n: np.ndarray) -> np.ndarray:
    """Derivative of ``h_{k,n}`` with respect to the boresight ``f_n``.

    Returns ``beta_tilde * p * b^(p-1) * q_hat`` for ``b = f_n . q_hat > 0`` and
    the zero vector in the back-lobe region, where the channel is flat.
    """
    q = real.geometry.unit_directions[k, n]
    b = float(np.dot(f_n, q))
    if real.isotropic or b <= 0.0 or real.p == 0:
        return np.zeros(3, dtype=complex)
    return real.beta_tilde[k, n] * real.p * b ** (real.p - 1.0) * q
