"""Two-stage beam scanning: wide-beam sector screening, then a narrow local sweep.

Each training slot applies one combiner to a fresh block of antenna samples.
Every combiner column is one beam, so a slot measures up to ``L`` beams at
once. Beam power is the mean of ``|w^H x|^2`` over the slot samples,
averaged over the slots spent on that beam.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .array_model import (ArrayGeometry, NoiseSpec, SnapshotMatrix, SourceScenario, generate_snapshots,
                          make_rng, steering_from_sine)
from .errors import ConfigurationError, ScanUnderrunError
from .frontend import Combiner, DynamicSubarray, FullyConnected
from .music import DoaEstimate, parabolic_offset


class SnapshotSource:
    """Hands out one fresh antenna-domain block per training slot.

    Angles stay fixed for the life of the source. Block ``k`` is drawn from
    its own stream ``make_rng(seed, k)``, so consumption order is the only
    state. Single consumer.
    """

    def __init__(self, geometry: ArrayGeometry, scenario: SourceScenario, noise: NoiseSpec, seed,
                 snapshots_per_slot: int, max_slots: Optional[int] = None):
        if snapshots_per_slot < 1:
            raise ConfigurationError("snapshots_per_slot must be >= 1")
        self.geometry = geometry
        self.scenario = dataclasses.replace(scenario, num_snapshots=int(snapshots_per_slot))
        self.noise = noise
        self.seed = seed
        self.max_slots = max_slots
        self.slots_used = 0

    def next_block(self) -> SnapshotMatrix:
        if self.max_slots is not None and self.slots_used >= self.max_slots:
            raise ScanUnderrunError(f"snapshot source exhausted after {self.max_slots} slots")
        block = generate_snapshots(self.geometry, self.scenario, self.noise, make_rng(self.seed, self.slots_used))
        self.slots_used += 1
        return block


def half_power_width_sine(num_elements: int) -> float:
    """Full 3 dB beamwidth, in direction-sine units, of a uniform half-wavelength aperture."""
    if num_elements <= 1:
        return 2.0
    n = num_elements

    def gain(u):
        return (np.sin(n * np.pi * u / 2) / (n * np.sin(np.pi * u / 2))) ** 2 - 0.5

    return 2.0 * brentq(gain, 1e-12, 2.0 / n)


@dataclass(frozen=True, eq=False)
class ScanCodebook:
    stage: Literal["coarse", "fine"]
    combiners: tuple[Combiner, ...]
    beam_centers_deg: tuple[float, ...]
    beamwidth_sine: float

    def __post_init__(self):
        cols = sum(c.L for c in self.combiners)
        if cols != len(self.beam_centers_deg):
            raise ConfigurationError(f"{cols} combiner columns but {len(self.beam_centers_deg)} beam centers")
        u = np.sin(np.deg2rad(self.beam_centers_deg))
        if np.any(np.diff(u) <= 0):
            raise ConfigurationError("beam centers must be strictly increasing")
        if u.size > 1 and np.max(np.diff(u)) > self.beamwidth_sine + 1e-12:
            raise ConfigurationError(
                f"beam spacing {np.max(np.diff(u)):.4f} exceeds beamwidth {self.beamwidth_sine:.4f} (sine units)")

    @property
    def num_beams(self) -> int:
        return len(self.beam_centers_deg)


@dataclass(frozen=True)
class ScanResult:
    powers: tuple[float, ...]
    selected_sectors: tuple[int, ...]
    refined_angle_deg: Optional[float] = None
    slots_used: int = 0
    trace: tuple[tuple[int, float, float], ...] = ()


def _group(columns: list[np.ndarray], L: int):
    return [np.column_stack(columns[i:i + L]) for i in range(0, len(columns), L)]


def coarse_aperture(M: int, num_sectors: int) -> int:
    """Largest divisor of ``M`` whose 3 dB beam still spans one sector."""
    sector = 2.0 / num_sectors
    best = 1
    for d in range(1, M + 1):
        if M % d == 0 and half_power_width_sine(d) >= sector:
            best = d
    return best


def build_coarse_codebook(geometry: ArrayGeometry, L: int, num_sectors: int) -> ScanCodebook:
    """Wide beams, one per sector, centered uniformly in the sine domain.

    Each beam uses only the first subarray of ``M_w`` elements, with ``M_w``
    the largest divisor of ``M`` whose 3 dB width covers a sector. The
    hardware realization is a dynamic-subarray network with every chain
    switched onto that first subarray.
    """
    M = geometry.num_elements
    if num_sectors < 1:
        raise ConfigurationError("num_sectors must be >= 1")
    Mw = coarse_aperture(M, num_sectors)
    u = -1.0 + (2.0 * np.arange(num_sectors) + 1.0) / num_sectors
    sub = ArrayGeometry(Mw, geometry.spacing_wavelengths) if Mw > 1 else None
    cols = []
    for uc in u:
        w = np.zeros(M, dtype=complex)
        w[:Mw] = steering_from_sine(sub, [uc])[:, 0] if sub else 1.0
        cols.append(w / np.sqrt(Mw))
    ns = M // Mw
    combiners = []
    for W in _group(cols, L):
        n = W.shape[1]
        spec = DynamicSubarray(ns, 1.0 / ns, tuple((l, 0) for l in range(n)))
        combiners.append(Combiner(W, spec))
    return ScanCodebook("coarse", tuple(combiners), tuple(np.rad2deg(np.arcsin(u)).tolist()),
                        half_power_width_sine(Mw))


def build_fine_codebook(geometry: ArrayGeometry, L: int, sector_center_deg: float, span_deg: float,
                        step_deg: float) -> ScanCodebook:
    """Full-aperture steering beams at ``center + j * step`` for ``|j * step| <= span / 2``."""
    if step_deg <= 0 or span_deg < 0:
        raise ConfigurationError("step_deg must be > 0 and span_deg >= 0")
    h = int(math.floor(span_deg / 2 / step_deg + 1e-9))
    centers = np.round(sector_center_deg + step_deg * np.arange(-h, h + 1), 10)
    centers = centers[(centers > -90) & (centers < 90)]
    if centers.size == 0:
        raise ConfigurationError("fine window contains no valid beam direction")
    A = steering_from_sine(geometry, np.sin(np.deg2rad(centers))) / np.sqrt(geometry.num_elements)
    combiners = tuple(Combiner(W, FullyConnected()) for W in _group(list(A.T), L))
    return ScanCodebook("fine", combiners, tuple(centers.tolist()), half_power_width_sine(geometry.num_elements))


def scan_power(codebook: ScanCodebook, snapshot_source: SnapshotSource, slots_per_beam: int = 1,
               num_select: int = 1) -> ScanResult:
    """Measure every beam of ``codebook`` and pick the ``num_select`` strongest."""
    powers = []
    trace = []
    start = snapshot_source.slots_used
    beam = 0
    for c in codebook.combiners:
        acc = np.zeros(c.L)
        for _ in range(slots_per_beam):
            slot = snapshot_source.slots_used
            Y = c.matrix.conj().T @ snapshot_source.next_block().data
            p = np.mean(np.abs(Y) ** 2, axis=1)
            acc += p
            for j in range(c.L):
                trace.append((slot, codebook.beam_centers_deg[beam + j], float(p[j])))
        powers.extend((acc / slots_per_beam).tolist())
        beam += c.L
    order = np.argsort(-np.asarray(powers), kind="stable")[:num_select]
    return ScanResult(tuple(powers), tuple(int(i) for i in order), None,
                      snapshot_source.slots_used - start, tuple(trace))


@dataclass(frozen=True)
class CoarseConfig:
    num_sectors: int = 8
    slots_per_beam: int = 1


@dataclass(frozen=True)
class FineConfig:
    """Fine sweep settings.

    ``refine="quadratic"`` fits a parabola to the log-powers of the best beam
    and its two neighbours (uniform in degrees). ``refine="pattern"`` instead
    inverts the known beam pattern from the power ratio of the best beam and
    its stronger neighbour, which is exact for a noiseless source.
    """

    step_deg: float = 1.0
    overlap: float = 0.25
    slots_per_beam: int = 1
    refine: Literal["quadratic", "pattern", "none"] = "quadratic"

    def __post_init__(self):
        if self.refine not in ("quadratic", "pattern", "none"):
            raise ConfigurationError(f"unknown fine refinement {self.refine!r}")


def beam_power_pattern(num_elements: int, spacing: float, delta_u) -> np.ndarray:
    """Normalized power ``|w^H a|^2 / M^2`` of a steering beam, ``delta_u`` sine units off its center."""
    x = np.pi * spacing * np.asarray(delta_u, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sin(num_elements * x) / (num_elements * np.sin(x))
    return np.where(np.abs(np.sin(x)) < 1e-12, 1.0, r) ** 2


def pattern_refine(geometry: ArrayGeometry, u_best: float, u_next: float, p_best: float, p_next: float) -> float:
    """Direction sine between two beam centers whose pattern ratio matches the measured power ratio.

    The search stays between the best beam and the midpoint towards its
    stronger neighbour; a ratio below the on-center value clamps to the best
    beam.
    """
    M, d = geometry.num_elements, geometry.spacing_wavelengths
    r = min(max(p_next, 1e-300) / max(p_best, 1e-300), 1.0)
    mid = 0.5 * (u_best + u_next)

    def g(u):
        return (np.log(beam_power_pattern(M, d, u_next - u) + 1e-300)
                - np.log(beam_power_pattern(M, d, u_best - u) + 1e-300) - np.log(r))

    lo, hi = g(u_best), g(mid)
    if lo >= 0:
        return u_best
    if hi <= 0:
        return mid
    return brentq(g, u_best, mid, xtol=1e-15)


def fine_window(num_sectors: int, sector: int, overlap: float, step_deg: float) -> tuple[float, float]:
    """``(center_deg, span_deg)`` of the fine sweep for one coarse sector.

    The window spans the sector widened by ``overlap`` sector widths on each
    side and the center snaps to a multiple of ``step_deg``.
    """
    w = 2.0 / num_sectors
    lo = max(-1.0 + sector * w - overlap * w, -1.0)
    hi = min(-1.0 + (sector + 1) * w + overlap * w, 1.0)
    lo_deg, hi_deg = np.rad2deg(np.arcsin([lo, hi]))
    center = round(0.5 * (lo_deg + hi_deg) / step_deg) * step_deg
    half = max(hi_deg - center, center - lo_deg)
    span = 2.0 * math.ceil(half / step_deg - 1e-9) * step_deg
    return float(center), float(span)


def planned_slots(geometry: ArrayGeometry, L: int, coarse: CoarseConfig, fine: FineConfig,
                  num_select: int = 1) -> int:
    """Worst-case slot count of :func:`two_stage_estimate` for these settings."""
    n_coarse = math.ceil(coarse.num_sectors / L) * coarse.slots_per_beam
    n_fine = 0
    for s in range(coarse.num_sectors):
        center, span = fine_window(coarse.num_sectors, s, fine.overlap, fine.step_deg)
        cb = build_fine_codebook(geometry, L, center, span, fine.step_deg)
        n_fine = max(n_fine, len(cb.combiners) * fine.slots_per_beam)
    return n_coarse + num_select * n_fine


def two_stage_estimate(geometry: ArrayGeometry, L: int, snapshot_source: SnapshotSource,
                       coarse: CoarseConfig = CoarseConfig(), fine: FineConfig = FineConfig(),
                       num_sources: int = 1) -> DoaEstimate:
    """Coarse sector screening, then a fine sweep and parabolic refinement per selected sector."""
    start = snapshot_source.slots_used
    cb = build_coarse_codebook(geometry, L, coarse.num_sectors)
    res = scan_power(cb, snapshot_source, coarse.slots_per_beam, num_sources)
    angles, peaks = [], []
    for sector in res.selected_sectors:
        center, span = fine_window(coarse.num_sectors, sector, fine.overlap, fine.step_deg)
        fcb = build_fine_codebook(geometry, L, center, span, fine.step_deg)
        fres = scan_power(fcb, snapshot_source, fine.slots_per_beam, 1)
        p = np.maximum(np.asarray(fres.powers), 1e-300)
        j = fres.selected_sectors[0]
        a = fcb.beam_centers_deg[j]
        if fine.refine == "quadratic" and 0 < j < p.size - 1:
            lp = np.log(p)
            a += fine.step_deg * parabolic_offset(lp[j - 1], lp[j], lp[j + 1])
        elif fine.refine == "pattern" and p.size > 1:
            nbrs = [k for k in (j - 1, j + 1) if 0 <= k < p.size]
            k = max(nbrs, key=lambda i: p[i])
            u = np.sin(np.deg2rad([fcb.beam_centers_deg[j], fcb.beam_centers_deg[k]]))
            a = float(np.rad2deg(np.arcsin(pattern_refine(geometry, u[0], u[1], p[j], p[k]))))
        angles.append(a)
        peaks.append(float(p[j]))
    order = np.argsort(angles, kind="stable")
    return DoaEstimate(tuple(float(angles[i]) for i in order), tuple(peaks[i] for i in order), "scan",
                       slots_used=snapshot_source.slots_used - start)


def write_scan_trace_csv(path, trace: Sequence[tuple[int, float, float]]) -> None:
    lines = ["slot,beam_center_deg,power"] + [f"{s},{c!r},{p!r}" for s, c, p in trace]
    Path(path).write_text("\n".join(lines) + "\n")
