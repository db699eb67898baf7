"""MUSIC direction finding on antenna-domain or RF-chain-domain covariances."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.signal

from .array_model import ArrayGeometry, steering_matrix
from .covariance import CovarianceMatrix, as_array
from .errors import DomainError, PeakDeficitError
from .frontend import Combiner, whitener

METHODS = ("fd-music", "had-music", "scm-music", "scan", "pilot")


@dataclass(frozen=True)
class SpectrumGrid:
    """Search grid over ``[start_deg, stop_deg]``; the endpoints +-90 are excluded."""

    start_deg: float = -90.0
    stop_deg: float = 90.0
    coarse_step_deg: float = 0.1
    refine: bool = True

    def __post_init__(self):
        if not -90.0 <= self.start_deg < self.stop_deg <= 90.0:
            raise DomainError(f"grid bounds must satisfy -90 <= start < stop <= 90, got "
                              f"({self.start_deg}, {self.stop_deg})")
        if not self.coarse_step_deg > 0:
            raise DomainError("coarse_step_deg must be > 0")

    @property
    def angles(self) -> np.ndarray:
        return _grid_angles(self.start_deg, self.stop_deg, self.coarse_step_deg)


@lru_cache(maxsize=64)
def _grid_angles(start, stop, step):
    n = int(np.floor((stop - start) / step + 1e-9))
    a = np.round(start + step * np.arange(n + 1), 10)
    a = a[(a > -90.0) & (a < 90.0)]
    a.setflags(write=False)
    return a


@lru_cache(maxsize=32)
def grid_steering(geometry: ArrayGeometry, grid: SpectrumGrid) -> np.ndarray:
    A = steering_matrix(geometry, grid.angles)
    A.setflags(write=False)
    return A


@dataclass(frozen=True)
class DoaEstimate:
    angles_deg: tuple[float, ...]
    spectrum_peak_values: tuple[float, ...]
    method: str
    failed: bool = False
    slots_used: Optional[int] = None


def hermitian_eig(r) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and matching orthonormal eigenvectors of a Hermitian matrix."""
    R = as_array(r)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DomainError("hermitian_eig needs a square matrix")
    if np.linalg.norm(R - R.conj().T) > 1e-10 * max(np.linalg.norm(R), 1e-300):
        raise DomainError("hermitian_eig input is not Hermitian")
    return np.linalg.eigh((R + R.conj().T) / 2)


def _effective(R: np.ndarray, geometry: ArrayGeometry, grid: SpectrumGrid, combiner: Optional[Combiner]):
    A = grid_steering(geometry, grid)
    if combiner is None:
        if R.shape[0] != geometry.num_elements:
            raise DomainError(f"covariance dimension {R.shape[0]} != M={geometry.num_elements}")
        return R, A
    if R.shape[0] != combiner.L or combiner.M != geometry.num_elements:
        raise DomainError("covariance, combiner and geometry dimensions disagree")
    Q = whitener(combiner)
    V = Q @ (combiner.matrix.conj().T @ A)
    return Q @ R @ Q.conj().T, V


def music_spectrum(r, geometry: ArrayGeometry, K: int, grid: SpectrumGrid,
                   combiner: Optional[Combiner] = None) -> np.ndarray:
    """Pseudo-spectrum ``||v||^2 / ||E_n^H v||^2`` over ``grid``.

    With a combiner, ``r`` is the RF-chain covariance and ``v`` the whitened
    effective steering ``(W^H W)^{-1/2} W^H a(theta)``.
    """
    R = as_array(r)
    dim = R.shape[0]
    if not 1 <= K < dim:
        raise DomainError(f"source count K={K} must satisfy 1 <= K < dimension {dim}")
    R, V = _effective(R, geometry, grid, combiner)
    return subspace_spectrum(R, V, K)


def subspace_spectrum(r, V: np.ndarray, K: int) -> np.ndarray:
    """MUSIC pseudo-spectrum of ``r`` for arbitrary steering columns ``V``.

    Steering columns are normalized, so directions a combiner barely sees do
    not produce spurious peaks.
    """
    R = as_array(r)
    dim = R.shape[0]
    if not 1 <= K < dim:
        raise DomainError(f"source count K={K} must satisfy 1 <= K < dimension {dim}")
    if V.shape[0] != dim:
        raise DomainError(f"steering rows {V.shape[0]} != covariance dimension {dim}")
    _, E = hermitian_eig(R)
    En = E[:, :dim - K]
    den = np.sum(np.abs(En.conj().T @ V) ** 2, axis=0) / np.sum(np.abs(V) ** 2, axis=0)
    return 1.0 / np.maximum(den, 1e-300)


def beamformer_spectrum(r, geometry: ArrayGeometry, grid: SpectrumGrid,
                        combiner: Optional[Combiner] = None) -> np.ndarray:
    """Conventional beamformer power ``v^H R v / v^H v``."""
    R, V = _effective(as_array(r), geometry, grid, combiner)
    num = np.real(np.sum(V.conj() * (R @ V), axis=0))
    return np.maximum(num / np.sum(np.abs(V) ** 2, axis=0), 1e-300)


def parabolic_offset(ym: float, y0: float, yp: float) -> float:
    """Vertex of the parabola through three equally spaced samples, in steps from the middle one."""
    den = ym - 2.0 * y0 + yp
    if not den < 0:
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / den, -0.5, 0.5))


def find_peaks(spectrum, grid: SpectrumGrid, K: int, fallback: bool = False,
               log_domain: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """The ``K`` largest local maxima of ``spectrum``, sorted by angle.

    Returns ``(angles, peak_values)``. With ``grid.refine`` each interior peak
    moves to the vertex of a parabola through its two neighbours (fitted to
    the log-spectrum by default). Raises :class:`PeakDeficitError` when fewer
    than ``K`` maxima exist unless ``fallback`` is set, in which case the
    largest remaining grid values (edges included) fill the gap.
    """
    P = np.asarray(spectrum, dtype=float)
    angles = grid.angles
    if P.shape != angles.shape:
        raise DomainError(f"spectrum length {P.size} does not match grid length {angles.size}")
    idx, _ = scipy.signal.find_peaks(P)
    idx = idx[np.argsort(-P[idx], kind="stable")][:K]
    if idx.size < K:
        if not fallback:
            raise PeakDeficitError(f"found {idx.size} spectral peaks, {K} requested", idx.size, K)
        blocked = np.zeros(P.size, dtype=bool)
        for i in idx:
            blocked[max(i - 1, 0):i + 2] = True
        extra = [i for i in np.argsort(-P, kind="stable") if not blocked[i]][:K - idx.size]
        idx = np.concatenate([idx, np.asarray(extra, dtype=int)])
    Y = np.log(P) if log_domain else P
    step = grid.coarse_step_deg
    out = []
    for i in idx:
        a = angles[i]
        if grid.refine and 0 < i < P.size - 1:
            a = a + step * parabolic_offset(Y[i - 1], Y[i], Y[i + 1])
        out.append(a)
    order = np.argsort(out, kind="stable")
    return np.asarray(out)[order], P[idx][order]


def estimate_doa_music(r, geometry: ArrayGeometry, K: int, grid: SpectrumGrid = SpectrumGrid(),
                       combiner: Optional[Combiner] = None, fallback: bool = False,
                       method: Optional[str] = None) -> DoaEstimate:
    """MUSIC spectrum followed by peak search.

    The method tag defaults to ``had-music`` with a combiner, ``scm-music``
    for a reconstructed covariance and ``fd-music`` otherwise. When
    ``fallback`` is set a peak deficit is absorbed and ``failed`` is set on
    the returned estimate.
    """
    if method is None:
        if combiner is not None:
            method = "had-music"
        elif isinstance(r, CovarianceMatrix) and r.role == "reconstructed":
            method = "scm-music"
        else:
            method = "fd-music"
    P = music_spectrum(r, geometry, K, grid, combiner)
    try:
        angles, vals = find_peaks(P, grid, K)
        failed = False
    except PeakDeficitError:
        if not fallback:
            raise
        angles, vals = find_peaks(P, grid, K, fallback=True)
        failed = True
    return DoaEstimate(tuple(float(a) for a in angles), tuple(float(v) for v in vals), method, failed)


def write_spectrum_csv(path, grid: SpectrumGrid, values) -> None:
    lines = ["angle_deg,value"]
    lines += [f"{a!r},{float(v)!r}" for a, v in zip(grid.angles.tolist(), np.asarray(values).tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
