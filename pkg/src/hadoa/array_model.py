"""Narrowband far-field signal model for a uniform linear array.

Conventions used everywhere in the package:

* broadside is 0 degrees, angles live in the open interval (-90, 90);
* element ``m`` (0-based) of the steering vector is
  ``exp(1j * 2 * pi * spacing * m * sin(theta))``;
* SNR is per source per element, ``snr = power / noise_variance``.

Random streams come from :func:`make_rng`, which feeds a
:class:`numpy.random.SeedSequence` with the master seed and an integer
spawn key (for example ``(snr_index, trial_index)``) into a PCG64 bit
generator. Streams for different keys are statistically independent, so
Monte Carlo trials can run in any order or in parallel and still
reproduce bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

SEED_MASK = (1 << 64) - 1


def make_rng(seed, *key: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` and an optional spawn key.

    ``seed`` may already be a :class:`numpy.random.Generator`, in which case
    it is returned unchanged (the key is ignored).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed, *key: int) -> int:
    """A 63-bit integer seed derived from ``seed`` and a spawn key, for APIs that take plain ints."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array.

    Args:
        num_elements: antenna count ``M`` (at least 2).
        spacing_wavelengths: element spacing in carrier wavelengths.
    """

    num_elements: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 2:
            raise ConfigurationError(f"num_elements must be an integer >= 2, got {self.num_elements}")
        if not self.spacing_wavelengths > 0:
            raise ConfigurationError(f"spacing_wavelengths must be > 0, got {self.spacing_wavelengths}")

    @property
    def M(self) -> int:
        return self.num_elements


@dataclass(frozen=True)
class SourceScenario:
    angles_deg: tuple[float, ...]
    powers: tuple[float, ...]
    num_snapshots: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if len(self.angles_deg) != len(self.powers):
            raise ConfigurationError("angles_deg and powers must have the same length")
        for a in self.angles_deg:
            if not -90.0 < a < 90.0:
                raise DomainError(f"source angle {a} outside (-90, 90)")
        if len(set(self.angles_deg)) != len(self.angles_deg):
            raise ConfigurationError("source angles must be pairwise distinct")
        if any(p < 0 for p in self.powers):
            raise ConfigurationError("source powers must be non-negative")
        if int(self.num_snapshots) != self.num_snapshots or self.num_snapshots < 1:
            raise ConfigurationError("num_snapshots must be a positive integer")

    @property
    def num_sources(self) -> int:
        return len(self.angles_deg)

    @classmethod
    def equal_power(cls, angles_deg: Sequence[float], num_snapshots: int = 1000, power: float = 1.0):
        return cls(tuple(angles_deg), tuple(power for _ in angles_deg), num_snapshots)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-antenna circular complex white noise of power ``variance``."""

    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ConfigurationError(f"noise variance must be > 0, got {self.variance}")

    @classmethod
    def from_snr_db(cls, snr_db: float, power: float = 1.0) -> "NoiseSpec":
        """Noise level giving ``snr_db`` for sources of the given power."""
        return cls(power * 10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True)
class SnapshotMatrix:
    """Complex samples, rows are antennas or RF chains, columns are snapshots."""

    data: np.ndarray
    domain: Literal["antenna", "rf-chain"] = "antenna"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2:
            raise DomainError("snapshot data must be a 2-D array")
        if not np.all(np.isfinite(data)):
            raise DomainError("snapshot data contains non-finite entries")
        if self.domain not in ("antenna", "rf-chain"):
            raise DomainError(f"unknown snapshot domain {self.domain!r}")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def num_rows(self) -> int:
        return self.data.shape[0]

    @property
    def num_snapshots(self) -> int:
        return self.data.shape[1]


def _check_angles(angles) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    if np.any(~(np.abs(angles) < 90.0)):
        raise DomainError("steering angles must lie in the open interval (-90, 90)")
    return angles


def steering_vector(geometry: ArrayGeometry, angle_deg: float) -> np.ndarray:
    """Array response to a unit plane wave from ``angle_deg``."""
    return steering_matrix(geometry, [angle_deg])[:, 0]


def steering_matrix(geometry: ArrayGeometry, angles_deg) -> np.ndarray:
    """Steering vectors stacked as columns, shape ``(M, len(angles_deg))``."""
    angles = _check_angles(np.atleast_1d(angles_deg))
    return steering_from_sine(geometry, np.sin(np.deg2rad(angles)))


def steering_from_sine(geometry: ArrayGeometry, u) -> np.ndarray:
    """Steering columns parameterized by the direction sine ``u = sin(theta)``.

    No range check is done, which lets DFT beams sit at ``u = -1``.
    """
    m = np.arange(geometry.num_elements)[:, None]
    return np.exp(2j * np.pi * geometry.spacing_wavelengths * m * np.atleast_1d(u)[None, :])


def generate_snapshots(geometry: ArrayGeometry, scenario: SourceScenario, noise: NoiseSpec,
                       seed) -> SnapshotMatrix:
    """Draw ``X = A S + W`` with uncorrelated Gaussian sources and white noise."""
    rng = make_rng(seed)
    M, N, K = geometry.num_elements, scenario.num_snapshots, scenario.num_sources
    sig = np.sqrt(np.asarray(scenario.powers) / 2.0)[:, None]
    S = sig * (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N)))
    W = np.sqrt(noise.variance / 2.0) * (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N)))
    if K:
        X = steering_matrix(geometry, scenario.angles_deg) @ S + W
    else:
        X = W
    return SnapshotMatrix(X, "antenna")


def true_covariance(geometry: ArrayGeometry, scenario: SourceScenario, noise: NoiseSpec):
    """``A diag(powers) A^H + noise_variance * I``."""
    from .covariance import CovarianceMatrix

    M = geometry.num_elements
    R = noise.variance * np.eye(M, dtype=complex)
    if scenario.num_sources:
        A = steering_matrix(geometry, scenario.angles_deg)
        R = R + (A * np.asarray(scenario.powers)) @ A.conj().T
    return CovarianceMatrix(R, "true")
