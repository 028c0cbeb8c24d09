"""System configuration, array/device geometry and random-source handling."""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PerDevice = Union[float, tuple]

# fields that may be given either as one value for every device or as a K-list
PER_DEVICE_FIELDS = ("kappa", "power_dbm", "task_bits", "cycles_per_bit", "local_cps")


class ConfigError(ValueError):
    """Raised for malformed configuration files or invalid scenario values."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Full system configuration.

    Defaults reproduce the simulation setup of the reference system: a 3x3
    rotatable-antenna array at 2.4 GHz serving four devices on a 40 m
    semicircle.  dB/dBm quantities are stored as given and converted by the
    ``*_linear`` / ``*_w`` accessors.
    """

    K: int = 4
    Ny: int = 3
    Nz: int = 3
    wavelength_m: float = 0.125
    spacing_m: float = 0.0625
    p_exponent: float = 4.0
    theta_max_rad: float = math.pi / 6
    zeta0_db: float = -30.0
    alpha0: float = 2.8
    kappa: PerDevice = 1.0
    bandwidth_hz: float = 2e6
    noise_dbm: float = -60.0
    power_dbm: PerDevice = 3.0
    task_bits: PerDevice = 1e6
    cycles_per_bit: PerDevice = 1e3
    local_cps: PerDevice = 6e8
    fmax_cps: float = 30e9
    radius_m: float = 40.0
    base_seed: int = 0

    def __post_init__(self):
        for name in PER_DEVICE_FIELDS:
            value = getattr(self, name)
            if isinstance(value, (list, tuple, np.ndarray)):
                value = tuple(float(v) for v in value)
                object.__setattr__(self, name, value)
                if len(value) != self.K:
                    raise ConfigError(f"{name}: expected {self.K} entries, got {len(value)}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.Ny < 1 or self.Nz < 1:
            raise ConfigError("Ny and Nz must be >= 1")
        if not 0.0 <= self.theta_max_rad < math.pi / 2:
            raise ConfigError("theta_max_rad must lie in [0, pi/2)")
        if self.p_exponent < 0:
            raise ConfigError("p_exponent must be >= 0")
        for name in ("bandwidth_hz", "fmax_cps", "wavelength_m", "radius_m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.spacing_m <= 0 and self.N > 1:
            raise ConfigError("spacing_m must be > 0")
        for name in ("task_bits", "cycles_per_bit", "local_cps"):
            if np.any(self.per_device(name) <= 0):
                raise ConfigError(f"{name} must be > 0")
        if np.any(self.per_device("kappa") < 0):
            raise ConfigError("kappa must be >= 0")

    @property
    def N(self) -> int:
        return self.Ny * self.Nz

    def per_device(self, name: str) -> np.ndarray:
        """Return a per-device field as a length-K float array."""
        value = getattr(self, name)
        if isinstance(value, tuple):
            return np.array(value, dtype=float)
        return np.full(self.K, float(value))

    @property
    def zeta0_linear(self) -> float:
        return float(db_to_linear(self.zeta0_db))

    @property
    def noise_w(self) -> float:
        return float(dbm_to_watt(self.noise_dbm))

    @property
    def powers_w(self) -> np.ndarray:
        return dbm_to_watt(self.per_device("power_dbm"))

    def replace(self, **changes) -> "Scenario":
        """Copy with some fields changed.

        Changing ``K`` broadcasts per-device fields that were given as
        uniform lists so sweeps over the device count keep working.
        """
        if "K" in changes and changes["K"] != self.K:
            for name in PER_DEVICE_FIELDS:
                value = getattr(self, name)
                if name not in changes and isinstance(value, tuple):
                    if len(set(value)) != 1:
                        raise ConfigError(f"cannot resize non-uniform {name} to K={changes['K']}")
                    changes[name] = value[0]
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Geometry:
    antenna_positions: np.ndarray  # (N, 3)
    device_positions: np.ndarray  # (K, 3)
    unit_directions: np.ndarray  # (K, N, 3), device k seen from antenna n
    distances: np.ndarray  # (K, N)

    def __post_init__(self):
        for f in dataclasses.fields(self):
            getattr(self, f.name).setflags(write=False)


def build_geometry(scenario: Scenario, device_angles: Sequence[float]) -> Geometry:
    """Place the antenna grid on the y-z plane and devices on the x-y semicircle.

    Antenna ``n = iy * Nz + iz`` sits at ``(0, (iy - (Ny-1)/2) d, (iz - (Nz-1)/2) d)``;
    device ``k`` at ``(r cos a_k, r sin a_k, 0)``.
    """
    angles = np.asarray(device_angles, dtype=float)
    if angles.shape != (scenario.K,):
        raise ValueError(f"expected {scenario.K} device angles, got shape {angles.shape}")
    if np.any(np.abs(angles) > math.pi / 2):
        raise ValueError("device angles must lie in [-pi/2, pi/2]")

    d = scenario.spacing_m
    iy, iz = np.meshgrid(np.arange(scenario.Ny), np.arange(scenario.Nz), indexing="ij")
    ant = np.zeros((scenario.N, 3))
    ant[:, 1] = ((iy - (scenario.Ny - 1) / 2.0) * d).ravel()
    ant[:, 2] = ((iz - (scenario.Nz - 1) / 2.0) * d).ravel()

    dev = np.zeros((scenario.K, 3))
    dev[:, 0] = scenario.radius_m * np.cos(angles)
    dev[:, 1] = scenario.radius_m * np.sin(angles)

    diff = dev[:, None, :] - ant[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist <= 0):
        raise ValueError("device coincides with an antenna")
    return Geometry(ant, dev, diff / dist[..., None], dist)


def sample_device_angles(rng: np.random.Generator, K: int) -> np.ndarray:
    """K i.i.d. angles, uniform on the arc [-pi/2, pi/2] facing the array."""
    return rng.uniform(-math.pi / 2, math.pi / 2, size=K)


def pointing_vector(theta_e: float, theta_a: float) -> np.ndarray:
    """Unit boresight for zenith ``theta_e`` (from +x) and azimuth ``theta_a`` (from +z)."""
    if not 0.0 <= theta_e < math.pi / 2:
        raise ValueError(f"zenith angle {theta_e} outside [0, pi/2)")
    if not 0.0 <= theta_a < 2 * math.pi:
        raise ValueError(f"azimuth angle {theta_a} outside [0, 2pi)")
    s = math.sin(theta_e)
    return np.array([math.cos(theta_e), s * math.sin(theta_a), s * math.cos(theta_a)])


def trial_rng(scenario: Scenario, trial: int) -> tuple[int, np.random.Generator]:
    """Seed and generator for one trial; every random draw of the trial uses it."""
    seed = scenario.base_seed + trial
    return seed, np.random.default_rng(seed)


def load_config(path: str | Path) -> Scenario:
    """Read a TOML file whose keys mirror :class:`Scenario` fields.

    Unknown keys are an error; missing keys keep their defaults.
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    known = {f.name: f for f in dataclasses.fields(Scenario)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    kwargs = {}
    for key, value in raw.items():
        if key in ("K", "Ny", "Nz", "base_seed"):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{path}: {key} must be an integer")
        elif isinstance(value, list):
            if key not in PER_DEVICE_FIELDS:
                raise ConfigError(f"{path}: {key} must be a scalar")
            value = tuple(value)
        elif not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{path}: {key} must be numeric")
        kwargs[key] = value
    return Scenario(**kwargs)
