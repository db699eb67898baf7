"""Analog combining networks for the four hybrid receiver architectures.

A :class:`Combiner` holds the ``M x L`` matrix ``W`` that maps antenna
samples ``x`` to RF-chain samples ``W^H x``. Its structure depends on the
architecture:

=====================  =========================================================
``FullyConnected``     every chain reaches every antenna through a phase shifter
``PartiallyConnected`` chain ``l`` owns the contiguous subarray ``l``
``SwitchBased``        chains pick antennas with switches, no phase control
``DynamicSubarray``    switches route subarrays to chains, phase shifters on the
                       active connections; the closure ratio sets how many
                       chain/subarray switches are closed
=====================  =========================================================
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .array_model import ArrayGeometry, SnapshotMatrix, make_rng, steering_vector
from .errors import ConfigurationError, DomainError

_TOL = 1e-9


@dataclass(frozen=True)
class FullyConnected:
    pass


@dataclass(frozen=True)
class PartiallyConnected:
    subarray_size: int


@dataclass(frozen=True)
class SwitchBased:
    """Switch-only combining.

    Args:
        active_per_chain: antennas closed onto each RF chain.
        selection: optional explicit antenna indices per chain. Overlapping
            selections are only accepted when given here.
    """

    active_per_chain: int
    selection: Optional[tuple[tuple[int, ...], ...]] = None


@dataclass(frozen=True)
class DynamicSubarray:
    """Hybrid dynamic subarray network.

    Args:
        num_subarrays: number of equal contiguous subarrays.
        closure_ratio: fraction of the ``L * num_subarrays`` switches closed.
        switches: optional explicit closed ``(chain, subarray)`` pairs; the
            default closes switches in round-robin order.
    """

    num_subarrays: int
    closure_ratio: float
    switches: Optional[tuple[tuple[int, int], ...]] = None


CombinerSpec = Union[FullyConnected, PartiallyConnected, SwitchBased, DynamicSubarray]
SPEC_TYPES = {cls.__name__: cls for cls in (FullyConnected, PartiallyConnected, SwitchBased, DynamicSubarray)}


@dataclass(frozen=True, eq=False)
class Combiner:
    matrix: np.ndarray
    spec: CombinerSpec
    column_normalized: bool = field(init=False)

    def __post_init__(self):
        W = np.array(self.matrix, dtype=complex)
        if W.ndim != 2:
            raise DomainError("combiner matrix must be 2-D")
        W.setflags(write=False)
        object.__setattr__(self, "matrix", W)
        gram = W.conj().T @ W
        ok = bool(np.linalg.norm(gram - np.eye(W.shape[1])) <= 1e-10)
        object.__setattr__(self, "column_normalized", ok)

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    @property
    def L(self) -> int:
        return self.matrix.shape[1]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def dft_matrix(M: int) -> np.ndarray:
    """Unitary DFT matrix whose column ``k`` is the steering vector at ``u = 2k/M``."""
    m = np.arange(M)
    return np.exp(2j * np.pi * np.outer(m, m) / M) / np.sqrt(M)


def dft_beam_sine(M: int, k) -> np.ndarray:
    """Direction sine of DFT column ``k`` for half-wavelength spacing, wrapped to [-1, 1)."""
    return np.mod(2.0 * np.asarray(k) / M + 1.0, 2.0) - 1.0


def default_beam_columns(M: int, L: int) -> np.ndarray:
    """DFT column indices used by the default grid phases: evenly strided."""
    return (np.arange(L) * M) // L


def dft_combiner(M: int, columns) -> Combiner:
    """Fully connected combiner made of the selected DFT columns."""
    return Combiner(dft_matrix(M)[:, list(columns)], FullyConnected())


def _phase_block(M: int, L: int, rng, phases: str) -> np.ndarray:
    if phases == "grid":
        k = default_beam_columns(M, L)
        return np.exp(2j * np.pi * np.outer(np.arange(M), k) / M)
    if phases == "random":
        return np.exp(2j * np.pi * rng.random((M, L)))
    raise ConfigurationError(f"unknown phase mode {phases!r}")


def hds_switches(spec: DynamicSubarray, L: int) -> list[tuple[int, int]]:
    """Closed ``(chain, subarray)`` pairs of a dynamic-subarray spec."""
    ns = spec.num_subarrays
    if spec.switches is not None:
        return sorted(set((int(c), int(s)) for c, s in spec.switches))
    count = round_half_up(spec.closure_ratio * L * ns)
    pairs = []
    for k in range(min(count, L * ns)):
        chain = k % L
        pairs.append((chain, (chain + k // L) % ns))
    return sorted(pairs)


def _check_spec(spec: CombinerSpec, M: int, L: int) -> None:
    if not 1 <= L <= M:
        raise ConfigurationError(f"RF chain count L={L} must satisfy 1 <= L <= M={M}")
    if isinstance(spec, FullyConnected):
        return
    if isinstance(spec, PartiallyConnected):
        if spec.subarray_size < 1 or spec.subarray_size * L != M:
            raise ConfigurationError(
                f"PartiallyConnected requires subarray_size*L == M ({spec.subarray_size}*{L} != {M})")
        return
    if isinstance(spec, SwitchBased):
        a = spec.active_per_chain
        if not 1 <= a <= M:
            raise ConfigurationError(f"SwitchBased requires 1 <= active_per_chain <= M ({a}, M={M})")
        if spec.selection is None:
            if a * L > M:
                raise ConfigurationError(
                    f"SwitchBased contiguous blocks need active_per_chain*L <= M ({a}*{L} > {M}); "
                    "pass an explicit selection to allow overlap")
        else:
            if len(spec.selection) != L:
                raise ConfigurationError(f"SwitchBased selection has {len(spec.selection)} chains, expected {L}")
            for sel in spec.selection:
                if len(set(sel)) != a or any(not 0 <= i < M for i in sel):
                    raise ConfigurationError(
                        f"SwitchBased selection {sel} must hold {a} distinct antenna indices in [0, {M})")
        return
    if isinstance(spec, DynamicSubarray):
        ns = spec.num_subarrays
        if ns < 1 or M % ns:
            raise ConfigurationError(f"DynamicSubarray num_subarrays={ns} must divide M={M}")
        if not 0 < spec.closure_ratio <= 1:
            raise ConfigurationError(f"DynamicSubarray closure_ratio={spec.closure_ratio} must be in (0, 1]")
        count = round_half_up(spec.closure_ratio * L * ns)
        if count < L:
            raise ConfigurationError(
                f"DynamicSubarray closes {count} switches (closure_ratio*L*num_subarrays rounded), "
                f"fewer than L={L}")
        if spec.switches is not None:
            pairs = hds_switches(spec, L)
            if len(pairs) != count:
                raise ConfigurationError(f"DynamicSubarray explicit switches close {len(pairs)} pairs, expected {count}")
            if any(not (0 <= c < L and 0 <= s < ns) for c, s in pairs):
                raise ConfigurationError("DynamicSubarray switch pair out of range")
            if len({c for c, _ in pairs}) != L:
                raise ConfigurationError("DynamicSubarray switches leave an RF chain unconnected")
        return
    raise ConfigurationError(f"unknown combiner spec {spec!r}")


def build_combiner(spec: CombinerSpec, M: int, L: int, seed=0, phases: str = "grid") -> Combiner:
    """Build an analog combiner for one architecture.

    ``phases="grid"`` uses steering phases of an evenly strided DFT beam grid
    (deterministic); ``phases="random"`` draws uniform phases from ``seed``.
    For ``SwitchBased`` with ``phases="random"`` the antenna subsets are drawn
    at random instead of taken as contiguous blocks.
    """
    _check_spec(spec, M, L)
    rng = make_rng(seed)
    m = np.arange(M)
    if isinstance(spec, FullyConnected):
        W = _phase_block(M, L, rng, phases) / np.sqrt(M)
    elif isinstance(spec, PartiallyConnected):
        s = spec.subarray_size
        P = _phase_block(M, L, rng, phases)
        mask = (m[:, None] // s) == np.arange(L)[None, :]
        W = np.where(mask, P, 0) / np.sqrt(s)
    elif isinstance(spec, SwitchBased):
        a = spec.active_per_chain
        if spec.selection is not None:
            sel = spec.selection
        elif phases == "random":
            perm = rng.permutation(M)
            sel = [perm[l * a:(l + 1) * a] for l in range(L)]
        else:
            sel = [range(l * a, (l + 1) * a) for l in range(L)]
        W = np.zeros((M, L), dtype=complex)
        for l, idx in enumerate(sel):
            W[list(idx), l] = 1.0 / np.sqrt(a)
    else:
        sub = M // spec.num_subarrays
        mask = np.zeros((M, L), dtype=bool)
        for chain, s in hds_switches(spec, L):
            mask[s * sub:(s + 1) * sub, chain] = True
        P = _phase_block(M, L, rng, phases)
        W = np.where(mask, P, 0) / np.sqrt(mask.sum(axis=0))[None, :]
    return Combiner(W, spec)


def validate(c: Combiner) -> list[str]:
    """Structural constraint violations of ``c``; an empty list means valid."""
    W, spec = c.matrix, c.spec
    M, L = W.shape
    problems = []
    try:
        _check_spec(spec, M, L)
    except ConfigurationError as exc:
        problems.append(str(exc))
        return problems
    mag = np.abs(W)
    nz = mag > _TOL
    for l in np.flatnonzero(~nz.any(axis=0)):
        problems.append(f"column {l} is all zero")
    if isinstance(spec, FullyConnected):
        bad = np.abs(mag - 1 / np.sqrt(M)) > _TOL
        if bad.any():
            problems.append(f"unit-modulus violation: {int(bad.sum())} entries differ from 1/sqrt(M)")
    elif isinstance(spec, PartiallyConnected):
        s = spec.subarray_size
        allowed = (np.arange(M)[:, None] // s) == np.arange(L)[None, :]
        if (nz & ~allowed).any():
            problems.append("support violation: nonzero entries outside the dedicated subarray blocks")
        if (np.abs(mag[nz] - 1 / np.sqrt(s)) > _TOL).any():
            problems.append("modulus violation: nonzero entries differ from 1/sqrt(subarray_size)")
    elif isinstance(spec, SwitchBased):
        a = spec.active_per_chain
        c0 = 1 / np.sqrt(a)
        if (np.abs(W[nz] - c0) > _TOL).any():
            problems.append(f"switch value violation: nonzero entries must equal 1/sqrt({a})")
        counts = nz.sum(axis=0)
        for l in np.flatnonzero(counts != a):
            problems.append(f"column {l} has {int(counts[l])} active antennas, expected {a}")
        if spec.selection is None and (nz.sum(axis=1) > 1).any():
            problems.append("overlapping switch selections without explicit configuration")
        if spec.selection is not None:
            for l, sel in enumerate(spec.selection):
                if set(np.flatnonzero(nz[:, l])) != set(sel):
                    problems.append(f"column {l} support differs from configured selection")
    else:
        ns = spec.num_subarrays
        sub = M // ns
        blocks = nz.reshape(ns, sub, L)
        partial = blocks.any(axis=1) & ~blocks.all(axis=1)
        if partial.any():
            problems.append("support violation: a subarray block is only partly connected")
        closed = int(blocks.all(axis=1).sum())
        expected = round_half_up(spec.closure_ratio * L * ns)
        if closed != expected:
            problems.append(f"closed switch count {closed} differs from expected {expected} "
                            f"(closure_ratio*L*num_subarrays rounded half up)")
        if spec.switches is not None:
            want = np.zeros((ns, L), dtype=bool)
            for chain, s in hds_switches(spec, L):
                want[s, chain] = True
            if not np.array_equal(blocks.all(axis=1), want):
                problems.append("support differs from configured switch pattern")
        for l in range(L):
            col = mag[nz[:, l], l]
            if col.size and np.ptp(col) > _TOL:
                problems.append(f"column {l} nonzero entries do not share one modulus")
    return problems


def apply_combiner(c: Combiner, x: SnapshotMatrix) -> SnapshotMatrix:
    """RF-chain samples ``W^H X``."""
    data = x.data if isinstance(x, SnapshotMatrix) else np.asarray(x)
    if data.shape[0] != c.M:
        raise DomainError(f"snapshot rows {data.shape[0]} do not match combiner M={c.M}")
    return SnapshotMatrix(c.matrix.conj().T @ data, "rf-chain")


def effective_steering(c: Combiner, geometry: ArrayGeometry, angle_deg: float) -> np.ndarray:
    """Steering vector seen behind the combiner, ``W^H a(theta)``."""
    if geometry.num_elements != c.M:
        raise DomainError(f"geometry has {geometry.num_elements} elements, combiner expects {c.M}")
    return c.matrix.conj().T @ steering_vector(geometry, angle_deg)


def whitener(c: Combiner) -> np.ndarray:
    """``(W^H W)^{-1/2}``, the identity when columns are already orthonormal."""
    if c.column_normalized:
        return np.eye(c.L)
    lam, U = np.linalg.eigh(c.matrix.conj().T @ c.matrix)
    if lam[0] <= 1e-12 * lam[-1]:
        raise DomainError("combiner columns are linearly dependent; cannot whiten")
    return (U / np.sqrt(lam)) @ U.conj().T


def quantize_phases(c: Combiner, bits: int) -> Combiner:
    """Round every nonzero phase to the nearest multiple of ``2 pi / 2**bits``."""
    if bits < 1:
        raise DomainError("bits must be >= 1")
    q = 2 * np.pi / 2.0 ** bits
    W = c.matrix
    Wq = np.abs(W) * np.exp(1j * np.round(np.angle(W) / q) * q)
    return Combiner(np.where(np.abs(W) > 0, Wq, 0), c.spec)


# CSV exchange: header line then one "row,col,re,im" line per nonzero entry.

def format_spec(spec: CombinerSpec) -> str:
    return repr(spec)


def parse_spec(text: str) -> CombinerSpec:
    node = ast.parse(text.strip(), mode="eval").body
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name) or node.func.id not in SPEC_TYPES:
        raise ConfigurationError(f"cannot parse combiner spec {text!r}")
    kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in node.keywords}
    return SPEC_TYPES[node.func.id](**kwargs)


def write_combiner_csv(c: Combiner, path) -> None:
    lines = [f"# spec={format_spec(c.spec)}; shape={c.M}x{c.L}", "row,col,re,im"]
    for r, col in zip(*np.nonzero(c.matrix)):
        v = c.matrix[r, col]
        lines.append(f"{r},{col},{float(v.real)!r},{float(v.imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_combiner_csv(path) -> Combiner:
    lines = Path(path).read_text().splitlines()
    head = lines[0].lstrip("#").strip()
    fields = dict(part.strip().split("=", 1) for part in head.split(";"))
    M, L = (int(v) for v in fields["shape"].split("x"))
    W = np.zeros((M, L), dtype=complex)
    for line in lines[2:]:
        if line.strip():
            r, col, re, im = line.split(",")
            W[int(r), int(col)] = complex(float(re), float(im))
    return Combiner(W, parse_spec(fields["spec"]))
