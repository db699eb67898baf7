"""Hybrid-domain covariance estimation and full SCM reconstruction.

A training plan switches through ``T`` analog combiners ``W_t``. Slot ``t``
yields a hybrid covariance ``R_y(t) = W_t^H R W_t``; stacking all slots gives
a linear system in the unknown ``M x M`` covariance ``R``::

    vec(R_y(t)) = (W_t^H kron W_t^T) vec(R)          (row-major vec)

Three ways to invert it are provided:

* :func:`entrywise_reconstruct` solves for all ``M^2`` entries;
* :func:`toeplitz_reconstruct` solves for the ``2M - 1`` real lag
  parameters of a Hermitian Toeplitz matrix (ULA only);
* :func:`beamspace_reconstruct` inverts the stacked beam matrix
  ``B = [W_1 ... W_T]`` using cross-combiner correlations.

Both least-squares routes measure the residual in the metric induced by the
stacked operator ``A``, i.e. they solve the row-whitened system
``(A A^H)^{+1/2} A x = (A A^H)^{+1/2} y``. For a full-rank ``A`` this leaves
the entry-wise solution unchanged and makes the Toeplitz solution equal to
the entry-wise one followed by averaging along each diagonal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .array_model import SnapshotMatrix, make_rng
from .errors import ConfigurationError, DomainError, IdentifiabilityError
from .frontend import Combiner, SwitchBased, build_combiner, dft_combiner

COND_LIMIT = 1e8
Role = Literal["true", "sample", "hybrid", "reconstructed"]


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    data: np.ndarray
    role: Role = "sample"

    def __post_init__(self):
        R = np.array(self.data, dtype=complex)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DomainError(f"covariance must be square, got shape {R.shape}")
        if not np.all(np.isfinite(R)):
            raise DomainError("covariance contains non-finite entries")
        scale = max(np.linalg.norm(R), 1e-300)
        if np.linalg.norm(R - R.conj().T) > 1e-10 * scale:
            raise DomainError("covariance is not Hermitian")
        R.setflags(write=False)
        object.__setattr__(self, "data", R)

    @property
    def dimension(self) -> int:
        return self.data.shape[0]


def as_array(r) -> np.ndarray:
    return r.data if isinstance(r, CovarianceMatrix) else np.asarray(r, dtype=complex)


def hermitian_part(R: np.ndarray) -> np.ndarray:
    return (R + R.conj().T) / 2


def sample_scm(y: SnapshotMatrix) -> CovarianceMatrix:
    """``(1/N) Y Y^H``; role ``sample`` for antenna data, ``hybrid`` behind a combiner."""
    Y = y.data
    if Y.shape[1] < 1:
        raise DomainError("need at least one snapshot")
    role = "sample" if y.domain == "antenna" else "hybrid"
    return CovarianceMatrix(hermitian_part(Y @ Y.conj().T) / Y.shape[1], role)


def split_snapshots(total: int, slots: int) -> tuple[int, ...]:
    """Even split of ``total`` snapshots over ``slots``; the remainder goes to the last slot."""
    if slots < 1 or total < slots:
        raise ConfigurationError(f"cannot split {total} snapshots over {slots} slots")
    base = total // slots
    return (base,) * (slots - 1) + (total - base * (slots - 1),)


@dataclass(frozen=True, eq=False)
class ReconstructionPlan:
    """Ordered training combiners and the snapshots each slot receives.

    ``snapshots_per_slot`` may be one integer (same for every slot) or one
    integer per slot, see :func:`split_snapshots`.
    """

    combiners: tuple[Combiner, ...]
    snapshots_per_slot: int | tuple[int, ...] = 1

    def __post_init__(self):
        combiners = tuple(self.combiners)
        if not combiners:
            raise ConfigurationError("a reconstruction plan needs at least one combiner")
        shapes = {c.matrix.shape for c in combiners}
        if len(shapes) != 1:
            raise ConfigurationError(f"plan combiners disagree on (M, L): {sorted(shapes)}")
        object.__setattr__(self, "combiners", combiners)
        n = self.snapshots_per_slot
        n = (int(n),) * len(combiners) if np.isscalar(n) else tuple(int(v) for v in n)
        if len(n) != len(combiners) or min(n) < 1:
            raise ConfigurationError("snapshots_per_slot must give a positive count for every slot")
        object.__setattr__(self, "snapshots_per_slot", n)

    @property
    def M(self) -> int:
        return self.combiners[0].M

    @property
    def L(self) -> int:
        return self.combiners[0].L

    @property
    def T(self) -> int:
        return len(self.combiners)

    def with_allocation(self, total: int) -> "ReconstructionPlan":
        return ReconstructionPlan(self.combiners, split_snapshots(total, self.T))

    @cached_property
    def operator(self) -> np.ndarray:
        """Stacked entry-wise operator, shape ``(T L^2, M^2)``."""
        return np.vstack([np.kron(c.matrix.conj().T, c.matrix.T) for c in self.combiners])

    @cached_property
    def row_whitener(self) -> sparse.csr_matrix:
        """``(A A^H)^{+1/2}`` assembled from per-slot Gram blocks.

        DFT-subset plans give a Gram matrix that splits into many small
        connected components, so each one is decomposed separately.
        """
        Ws = [c.matrix for c in self.combiners]
        L2 = self.L ** 2
        n = self.T * L2
        G = np.zeros((n, n), dtype=complex)
        for s, t in itertools.product(range(self.T), repeat=2):
            C = Ws[s].conj().T @ Ws[t]
            if np.any(np.abs(C) > 1e-12):
                G[s * L2:(s + 1) * L2, t * L2:(t + 1) * L2] = np.kron(C, C.conj())
        G = hermitian_part(G)
        scale = np.abs(G).max()
        _, labels = connected_components(sparse.csr_matrix(np.abs(G) > 1e-12 * scale), directed=False)
        parts = []
        for comp in np.unique(labels):
            idx = np.flatnonzero(labels == comp)
            lam, U = np.linalg.eigh(G[np.ix_(idx, idx)])
            parts.append((idx, lam, U))
        lam_max = max(p[1][-1] for p in parts)
        rows, cols, vals = [], [], []
        for idx, lam, U in parts:
            keep = lam > lam_max * 1e-12
            if not keep.any():
                continue
            Hc = (U[:, keep] / np.sqrt(lam[keep])) @ U[:, keep].conj().T
            r, c = np.meshgrid(idx, idx, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(Hc.ravel())
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(n, n))

    @cached_property
    def toeplitz_operator(self) -> np.ndarray:
        """Stacked operator acting on the real lag parameters, complex ``(T L^2, 2M-1)``."""
        M = self.M
        cols = []
        for j in range(2 * M - 1):
            cols.append(np.concatenate([
                (c.matrix.conj().T @ toeplitz_basis(M, j) @ c.matrix).ravel() for c in self.combiners]))
        return np.array(cols).T

    @cached_property
    def _entrywise_solver(self):
        A = self.operator
        U, s, Vh = np.linalg.svd(A, full_matrices=False)
        rank, cond = _rank_cond(s, self.M ** 2)
        pinv = (Vh.conj().T[:, :rank] / s[:rank]) @ U[:, :rank].conj().T
        return rank, cond, pinv

    @cached_property
    def _toeplitz_solver(self):
        Aw = self.row_whitener @ self.toeplitz_operator
        Ar = np.vstack([Aw.real, Aw.imag])
        U, s, Vh = np.linalg.svd(Ar, full_matrices=False)
        rank, cond = _rank_cond(s, 2 * self.M - 1)
        pinv = (Vh.T[:, :rank] / s[:rank]) @ U[:, :rank].T
        return rank, cond, pinv


def _rank_cond(s: np.ndarray, unknowns: int) -> tuple[int, float]:
    if s.size == 0 or s[0] == 0:
        return 0, math.inf
    rank = int(np.sum(s > s[0] * 1e-10))
    cond = float(s[0] / s[-1]) if s.size >= unknowns and s[-1] > 0 else math.inf
    return rank, cond


def toeplitz_basis(M: int, j: int) -> np.ndarray:
    """Hermitian Toeplitz basis matrix for lag parameter ``j``.

    ``j = 0`` is the real diagonal, ``1..M-1`` the real parts and
    ``M..2M-2`` the imaginary parts of lags ``1..M-1``; lag ``k`` sits at
    ``R[m + k, m]``.
    """
    if j == 0:
        return np.eye(M, dtype=complex)
    k = j if j < M else j - M + 1
    J = np.eye(M, k=-k)
    return (J + J.T).astype(complex) if j < M else 1j * (J - J.T)


def toeplitz_from_lags(lags: np.ndarray) -> np.ndarray:
    """Hermitian Toeplitz matrix with first column ``lags`` (``lags[0]`` real)."""
    lags = np.asarray(lags, dtype=complex)
    M = lags.size
    idx = np.arange(M)[:, None] - np.arange(M)[None, :]
    return np.where(idx >= 0, lags[np.abs(idx)], lags[np.abs(idx)].conj())


@dataclass(frozen=True)
class IdentifiabilityReport:
    numerical_rank: int
    required_rank: int
    condition_estimate: float
    feasible: bool


def identifiability_report(plan: ReconstructionPlan, mode: str = "entrywise") -> IdentifiabilityReport:
    """Rank and conditioning of the stacked operator.

    ``mode="entrywise"`` needs rank ``M^2``; ``mode="toeplitz"`` needs ``2M-1``.
    """
    if mode == "entrywise":
        rank, cond, _ = plan._entrywise_solver
        need = plan.M ** 2
    elif mode == "toeplitz":
        rank, cond, _ = plan._toeplitz_solver
        need = 2 * plan.M - 1
    else:
        raise ConfigurationError(f"unknown identifiability mode {mode!r}")
    return IdentifiabilityReport(rank, need, cond, rank == need and cond <= COND_LIMIT)


def _raise_if_infeasible(report: IdentifiabilityReport, what: str) -> None:
    if not report.feasible:
        raise IdentifiabilityError(
            f"{what}: stacked operator rank {report.numerical_rank} of {report.required_rank} needed, "
            f"condition estimate {report.condition_estimate:.3g}",
            report.numerical_rank, report.required_rank, report.condition_estimate)


def _stack_hybrids(plan: ReconstructionPlan, hybrid_scms: Sequence) -> np.ndarray:
    if len(hybrid_scms) != plan.T:
        raise DomainError(f"expected {plan.T} hybrid covariances, got {len(hybrid_scms)}")
    blocks = [as_array(h) for h in hybrid_scms]
    for b in blocks:
        if b.shape != (plan.L, plan.L):
            raise DomainError(f"hybrid covariance shape {b.shape} differs from ({plan.L}, {plan.L})")
    return np.concatenate([b.ravel() for b in blocks])


def entrywise_reconstruct(plan: ReconstructionPlan, hybrid_scms: Sequence) -> CovarianceMatrix:
    """Least-squares recovery of every SCM entry from the hybrid covariances."""
    M, L, T = plan.M, plan.L, plan.T
    y = _stack_hybrids(plan, hybrid_scms)
    if T * L * L < M * M:
        raise IdentifiabilityError(
            f"entry-wise system underdetermined: {T * L * L} equations for {M * M} unknowns "
            f"(need T >= {math.ceil(M * M / (L * L))})", min(T * L * L, M * M), M * M, math.inf)
    _raise_if_infeasible(identifiability_report(plan, "entrywise"), "entry-wise reconstruction")
    x = plan._entrywise_solver[2] @ y
    return CovarianceMatrix(hermitian_part(x.reshape(M, M)), "reconstructed")


def toeplitz_reconstruct(plan: ReconstructionPlan, hybrid_scms: Sequence) -> CovarianceMatrix:
    """Structured least squares over the ``2M-1`` lag parameters of a ULA covariance."""
    M = plan.M
    y = _stack_hybrids(plan, hybrid_scms)
    _raise_if_infeasible(identifiability_report(plan, "toeplitz"), "Toeplitz reconstruction")
    yw = plan.row_whitener @ y
    p = plan._toeplitz_solver[2] @ np.concatenate([yw.real, yw.imag])
    lags = np.concatenate([[p[0]], p[1:M] + 1j * p[M:]])
    return CovarianceMatrix(toeplitz_from_lags(lags), "reconstructed")


def block_scm(combiners: Sequence[Combiner], x: SnapshotMatrix) -> CovarianceMatrix:
    """All cross-combiner correlations ``E[y_i y_j^H]`` from one antenna-domain block."""
    B = np.hstack([c.matrix for c in combiners])
    Y = B.conj().T @ x.data
    return CovarianceMatrix(hermitian_part(Y @ Y.conj().T) / Y.shape[1], "hybrid")


def beamspace_reconstruct(beam_combiners: Sequence[Combiner], hybrid_scms) -> CovarianceMatrix:
    """Invert the stacked beam matrix ``B = [W_1 ... W_T]``.

    ``hybrid_scms`` is either the full ``TL x TL`` block covariance (see
    :func:`block_scm`), giving ``R = (B^+)^H R_block B^+``, or a list of the
    ``T`` diagonal ``L x L`` blocks only. The second form is what a real
    receiver observes slot by slot; it falls back to the entry-wise system.
    """
    beam_combiners = tuple(beam_combiners)
    if isinstance(hybrid_scms, (list, tuple)):
        return entrywise_reconstruct(ReconstructionPlan(beam_combiners), hybrid_scms)
    B = np.hstack([c.matrix for c in beam_combiners])
    M = B.shape[0]
    R_block = as_array(hybrid_scms)
    if R_block.shape != (B.shape[1], B.shape[1]):
        raise DomainError(f"block covariance shape {R_block.shape} does not match B with {B.shape[1]} columns")
    s = np.linalg.svd(B, compute_uv=False)
    rank, cond = _rank_cond(s, M)
    if rank < M or cond > COND_LIMIT:
        raise IdentifiabilityError(
            f"beam matrix rank {rank} < M={M} or condition {cond:.3g} too large", rank, M, cond)
    Bp = np.linalg.pinv(B)
    return CovarianceMatrix(hermitian_part(Bp.conj().T @ R_block @ Bp), "reconstructed")


def psd_project(r) -> CovarianceMatrix:
    """Nearest (Frobenius) positive semidefinite matrix: clip negative eigenvalues."""
    R = hermitian_part(as_array(r))
    lam, U = np.linalg.eigh(R)
    if lam[0] >= 0:
        out = R
    else:
        out = hermitian_part((U * np.clip(lam, 0, None)) @ U.conj().T)
    role = r.role if isinstance(r, CovarianceMatrix) else "reconstructed"
    return CovarianceMatrix(out, role)


# Plan generators ---------------------------------------------------------

def sliding_windows(M: int, L: int, T: int | None = None) -> list[list[int]]:
    """Cyclic windows of ``L`` consecutive indices advancing by ``max(L // 2, 1)``."""
    stride = max(L // 2, 1)
    T = T or math.ceil(M / stride)
    return [[(t * stride + j) % M for j in range(L)] for t in range(T)]


def pair_windows(M: int, L: int, T: int | None = None) -> list[list[int]]:
    """Windows covering every index pair: disjoint blocks, then unions of two half-size groups."""
    if L < 2:
        raise ConfigurationError("pair windows need L >= 2")
    g = L // 2
    groups = [[(i * g + j) % M for j in range(g)] for i in range(math.ceil(M / g))]
    seq = [[(t * L + j) % M for j in range(L)] for t in range(math.ceil(M / L))]
    seen = {tuple(sorted(w)) for w in seq}
    for a, b in itertools.combinations(range(len(groups)), 2):
        w = list(dict.fromkeys(groups[a] + groups[b]))
        extra = (w[-1] + 1) % M
        while len(w) < L:
            if extra not in w:
                w.append(extra)
            extra = (extra + 1) % M
        if len(w) == L and tuple(sorted(w)) not in seen:
            seen.add(tuple(sorted(w)))
            seq.append(w)
    T = T or len(seq)
    return [seq[t % len(seq)] for t in range(T)]


def _windows(M, L, kind, T):
    if kind == "sliding":
        return sliding_windows(M, L, T)
    if kind == "pairs":
        return pair_windows(M, L, T)
    raise ConfigurationError(f"unknown plan kind {kind!r}")


def dft_plan(M: int, L: int, kind: str = "sliding", T: int | None = None,
             total_snapshots: int | None = None) -> ReconstructionPlan:
    """Fully connected plan of DFT-column subsets.

    ``kind="sliding"`` (``T = 2M/L`` half-overlapping windows) identifies the
    Toeplitz lags; ``kind="pairs"`` covers every DFT column pair and so
    identifies the full entry-wise system.
    """
    combiners = tuple(dft_combiner(M, w) for w in _windows(M, L, kind, T))
    plan = ReconstructionPlan(combiners)
    return plan.with_allocation(total_snapshots) if total_snapshots else plan


def selection_plan(M: int, L: int, kind: str = "pairs", T: int | None = None) -> ReconstructionPlan:
    """Switch-based plan: one antenna per chain, windows as in :func:`dft_plan`."""
    combiners = []
    for w in _windows(M, L, kind, T):
        spec = SwitchBased(1, tuple((i,) for i in w))
        combiners.append(build_combiner(spec, M, L))
    return ReconstructionPlan(tuple(combiners))


def random_plan(spec, M: int, L: int, T: int, seed=0) -> ReconstructionPlan:
    """``T`` combiners of one architecture with independently drawn random phases."""
    return ReconstructionPlan(tuple(
        build_combiner(spec, M, L, seed=make_rng(seed, t), phases="random") for t in range(T)))


def exact_hybrids(plan: ReconstructionPlan, r) -> list[CovarianceMatrix]:
    R = as_array(r)
    return [CovarianceMatrix(hermitian_part(c.matrix.conj().T @ R @ c.matrix), "hybrid") for c in plan.combiners]


def slot_hybrids(plan: ReconstructionPlan, x: SnapshotMatrix) -> list[CovarianceMatrix]:
    """Sample hybrid covariances, slot ``t`` using the next ``snapshots_per_slot[t]`` columns of ``x``."""
    X = x.data
    if sum(plan.snapshots_per_slot) > X.shape[1]:
        raise DomainError(f"plan needs {sum(plan.snapshots_per_slot)} snapshots, got {X.shape[1]}")
    out, start = [], 0
    for c, n in zip(plan.combiners, plan.snapshots_per_slot):
        Y = c.matrix.conj().T @ X[:, start:start + n]
        out.append(CovarianceMatrix(hermitian_part(Y @ Y.conj().T) / n, "hybrid"))
        start += n
    return out


# CSV exchange, same layout as combiner files.

def write_matrix_csv(r, path, role: str | None = None) -> None:
    R = as_array(r)
    role = role or (r.role if isinstance(r, CovarianceMatrix) else "reconstructed")
    lines = [f"# role={role}; shape={R.shape[0]}x{R.shape[1]}", "row,col,re,im"]
    for i, j in itertools.product(range(R.shape[0]), range(R.shape[1])):
        lines.append(f"{i},{j},{float(R[i, j].real)!r},{float(R[i, j].imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> CovarianceMatrix:
    lines = Path(path).read_text().splitlines()
    fields = dict(p.strip().split("=", 1) for p in lines[0].lstrip("#").split(";"))
    n, m = (int(v) for v in fields["shape"].split("x"))
    R = np.zeros((n, m), dtype=complex)
    for line in lines[2:]:
        if line.strip():
            i, j, re, im = line.split(",")
            R[int(i), int(j)] = complex(float(re), float(im))
    return CovarianceMatrix(R, fields["role"])
