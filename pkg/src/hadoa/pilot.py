"""Pilot-aided virtual-array estimation with random-phase combiners.

Over ``K_p`` pilot slots the receiver switches through ``K_p`` random
phase networks. Stacking the pilot-stripped outputs of all slots gives a
``K_p * L`` dimensional observation ``z_n = G A s_n + noise`` whose
steering is ``G a(theta)``, with ``G`` the row-stacked ``W_k^H`` blocks.

Signal model: the source amplitudes of frame ``n`` are shared by all slots
(angles and gains constant over the pilot window); slot ``k`` multiplies
them by the unit-modulus pilot ``p_k`` and adds fresh noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .array_model import ArrayGeometry, NoiseSpec, SourceScenario, make_rng, steering_matrix
from .errors import ConfigurationError, DomainError, PeakDeficitError
from .frontend import Combiner, FullyConnected, whitener
from .music import DoaEstimate, SpectrumGrid, find_peaks, grid_steering, parabolic_offset, subspace_spectrum


def random_phase_combiner(M: int, L: int, seed) -> Combiner:
    """Fully connected combiner with i.i.d. uniform phases and modulus ``1/sqrt(M)``."""
    if not 1 <= L <= M:
        raise ConfigurationError(f"need 1 <= L <= M, got L={L}, M={M}")
    rng = make_rng(seed)
    return Combiner(np.exp(2j * np.pi * rng.random((M, L))) / np.sqrt(M), FullyConnected())


def default_pilots(num_slots: int, seed) -> tuple[complex, ...]:
    """Unit-modulus pilots with uniform random phase."""
    ph = make_rng(seed, 1).random(num_slots)
    return tuple(complex(v) for v in np.exp(2j * np.pi * ph))


@dataclass(frozen=True, eq=False)
class PilotSchedule:
    """Pilot symbols and combiner seed for ``num_slots`` pilot slots.

    Slot ``k`` uses ``random_phase_combiner(M, L, make_rng(combiner_seed, 0, k))``
    unless explicit ``combiners`` are given.
    """

    num_slots: int
    pilot_symbols: tuple[complex, ...]
    combiner_seed: int = 0
    combiners: Optional[tuple[Combiner, ...]] = None

    def __post_init__(self):
        if int(self.num_slots) != self.num_slots or self.num_slots < 1:
            raise ConfigurationError("num_slots must be a positive integer")
        p = np.asarray(self.pilot_symbols, dtype=complex)
        if p.shape != (self.num_slots,):
            raise ConfigurationError(f"need {self.num_slots} pilot symbols, got {p.size}")
        if np.any(np.abs(np.abs(p) - 1.0) > 1e-12):
            raise ConfigurationError("pilot symbols must have unit modulus")
        object.__setattr__(self, "pilot_symbols", tuple(complex(v) for v in p))
        if self.combiners is not None:
            cs = tuple(self.combiners)
            if len(cs) != self.num_slots:
                raise ConfigurationError(f"need {self.num_slots} combiners, got {len(cs)}")
            if len({(c.M, c.L) for c in cs}) != 1:
                raise ConfigurationError("all pilot combiners must share one shape")
            object.__setattr__(self, "combiners", cs)

    @classmethod
    def random(cls, num_slots: int, seed: int = 0) -> "PilotSchedule":
        return cls(num_slots, default_pilots(num_slots, seed), seed)

    def slot_combiners(self, M: int, L: int) -> tuple[Combiner, ...]:
        if self.combiners is not None:
            if (self.combiners[0].M, self.combiners[0].L) != (M, L):
                raise ConfigurationError("explicit pilot combiners do not match (M, L)")
            return self.combiners
        return tuple(random_phase_combiner(M, L, make_rng(self.combiner_seed, 0, k))
                     for k in range(self.num_slots))


@dataclass(frozen=True, eq=False)
class VirtualObservation:
    """Stacked frames ``(K_p L) x F`` and the stacked combining matrix ``G``."""

    frames: np.ndarray
    G: np.ndarray
    block_size: int
    combiners: tuple[Combiner, ...] = field(default=())

    def __post_init__(self):
        if self.frames.shape[0] != self.G.shape[0]:
            raise DomainError("frame length and G row count disagree")
        if self.G.shape[0] % self.block_size:
            raise DomainError("G rows are not a whole number of blocks")

    @property
    def dimension(self) -> int:
        return self.G.shape[0]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[1]

    def whitened(self) -> tuple[np.ndarray, np.ndarray]:
        """``(Q z, Q G)`` with ``Q`` the block-diagonal per-slot noise whitener."""
        if not self.combiners:
            return self.frames, self.G
        Q = scipy.linalg.block_diag(*[whitener(c) for c in self.combiners])
        return Q @ self.frames, Q @ self.G


def collect_virtual_observation(geometry: ArrayGeometry, scenario: SourceScenario, noise: NoiseSpec,
                                schedule: PilotSchedule, L: int, frames_per_slot: int,
                                seed=0) -> VirtualObservation:
    """Simulate the pilot slots and stack ``conj(p_k) W_k^H x_{k,n}`` over ``k``.

    The stream draws the frame amplitudes first, then the noise of each slot
    in slot order.
    """
    M, F, K = geometry.num_elements, int(frames_per_slot), scenario.num_sources
    if F < 1:
        raise ConfigurationError("frames_per_slot must be >= 1")
    combiners = schedule.slot_combiners(M, L)
    rng = make_rng(seed)
    sig = np.sqrt(np.asarray(scenario.powers) / 2.0)[:, None]
    S = sig * (rng.standard_normal((K, F)) + 1j * rng.standard_normal((K, F)))
    AS = steering_matrix(geometry, scenario.angles_deg) @ S if K else np.zeros((M, F), complex)
    blocks = []
    for c, p in zip(combiners, schedule.pilot_symbols):
        Wn = np.sqrt(noise.variance / 2.0) * (rng.standard_normal((M, F)) + 1j * rng.standard_normal((M, F)))
        x = p * AS + Wn
        blocks.append(np.conj(p) * (c.matrix.conj().T @ x))
    G = np.vstack([c.matrix.conj().T for c in combiners])
    return VirtualObservation(np.vstack(blocks), G, L, combiners)


def virtual_spectrum(obs: VirtualObservation, geometry: ArrayGeometry, K: int, grid: SpectrumGrid) -> np.ndarray:
    if not 1 <= K < obs.dimension:
        raise DomainError(f"K={K} must satisfy 1 <= K < K_p*L={obs.dimension}")
    if obs.num_frames < K + 1:
        raise DomainError(f"{obs.num_frames} frames, need at least K+1={K + 1}")
    if obs.G.shape[1] != geometry.num_elements:
        raise DomainError("observation and geometry element counts disagree")
    Z, G = obs.whitened()
    R = Z @ Z.conj().T / obs.num_frames
    return subspace_spectrum((R + R.conj().T) / 2, G @ grid_steering(geometry, grid), K)


def virtual_music(obs: VirtualObservation, geometry: ArrayGeometry, K: int,
                  grid: SpectrumGrid = SpectrumGrid(), fallback: bool = False) -> DoaEstimate:
    """MUSIC on the sample covariance of the stacked frames, steering ``G a(theta)``."""
    P = virtual_spectrum(obs, geometry, K, grid)
    failed = False
    try:
        angles, vals = find_peaks(P, grid, K)
    except PeakDeficitError:
        if not fallback:
            raise
        angles, vals = find_peaks(P, grid, K, fallback=True)
        failed = True
    return DoaEstimate(tuple(float(a) for a in angles), tuple(float(v) for v in vals), "pilot", failed)


def matched_filter_spectrum(obs: VirtualObservation, geometry: ArrayGeometry, grid: SpectrumGrid) -> np.ndarray:
    """Mean over frames of ``|v^H z_n|^2 / ||v||^2`` with ``v = G a(theta)``.

    With one frame this is the squared matched-filter output on the frame
    itself. Averaging powers rather than frames keeps the response when the
    source amplitude changes from frame to frame.
    """
    Z, G = obs.whitened()
    V = G @ grid_steering(geometry, grid)
    num = np.mean(np.abs(V.conj().T @ Z) ** 2, axis=1)
    return np.maximum(num / np.sum(np.abs(V) ** 2, axis=0), 1e-300)


def matched_filter_estimate(obs: VirtualObservation, geometry: ArrayGeometry,
                            grid: SpectrumGrid = SpectrumGrid()) -> DoaEstimate:
    """Single-source estimate at the matched-filter maximum, parabolically refined."""
    P = matched_filter_spectrum(obs, geometry, grid)
    i = int(np.argmax(P))
    a = float(grid.angles[i])
    if grid.refine and 0 < i < P.size - 1:
        y = np.log(P[i - 1:i + 2])
        a += grid.coarse_step_deg * parabolic_offset(*y)
    return DoaEstimate((a,), (float(P[i]),), "pilot")


def pilot_estimate(geometry: ArrayGeometry, scenario: SourceScenario, noise: NoiseSpec,
                   schedule: PilotSchedule, L: int, frames_per_slot: int, seed=0,
                   grid: SpectrumGrid = SpectrumGrid(), estimator: str = "music",
                   fallback: bool = False) -> DoaEstimate:
    """Collect one virtual observation and run the chosen estimator on it."""
    obs = collect_virtual_observation(geometry, scenario, noise, schedule, L, frames_per_slot, seed)
    if estimator == "music":
        return virtual_music(obs, geometry, scenario.num_sources, grid, fallback)
    if estimator == "matched-filter":
        if scenario.num_sources != 1:
            raise ConfigurationError("the matched filter handles a single source only")
        return matched_filter_estimate(obs, geometry, grid)
    raise ConfigurationError(f"unknown pilot estimator {estimator!r}")
