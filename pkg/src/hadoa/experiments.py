"""Monte Carlo RMSE experiments: RMSE against SNR, and against array size and RF-chain count.

Each trial draws one antenna-domain snapshot block ``X`` from the stream
``make_rng(master_seed, x_index, trial_index)`` and runs every configured
method on it, so method comparisons are paired. Trials are independent,
which lets them run in worker processes in any order; results are reduced
in trial order so the output does not depend on the worker count.

RMSE is ``sqrt(mean over trials and sources of squared error)``. Trials
whose peak search fell back to the largest spectrum values are counted as
failures and still contribute their fallback estimates.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .array_model import (ArrayGeometry, NoiseSpec, SourceScenario, derive_seed,
                          generate_snapshots, make_rng)
from .covariance import (ReconstructionPlan, block_scm, beamspace_reconstruct, dft_plan, entrywise_reconstruct,
                         identifiability_report, random_plan, sample_scm, selection_plan, slot_hybrids,
                         toeplitz_reconstruct)
from .errors import ConfigurationError, IdentifiabilityError
from .frontend import (SPEC_TYPES, CombinerSpec, FullyConnected, SwitchBased,
                       apply_combiner, build_combiner)
from .music import METHODS, SpectrumGrid, beamformer_spectrum, estimate_doa_music, find_peaks
from .pilot import PilotSchedule, pilot_estimate
from .scan import CoarseConfig, FineConfig, SnapshotSource, planned_slots, two_stage_estimate

DEFAULT_SEED = 20250101
PLAN_KINDS = ("sliding", "pairs", "random")
RECON_ROUTES = ("toeplitz", "entrywise", "beamspace")
ALLOCATIONS = ("split", "per-slot")


@dataclass(frozen=True)
class ScanSettings:
    num_sectors: int = 8
    coarse_slots_per_beam: int = 1
    fine_step_deg: float = 1.0
    overlap: float = 0.25
    fine_slots_per_beam: int = 1

    @property
    def coarse(self) -> CoarseConfig:
        return CoarseConfig(self.num_sectors, self.coarse_slots_per_beam)

    @property
    def fine(self) -> FineConfig:
        return FineConfig(self.fine_step_deg, self.overlap, self.fine_slots_per_beam)


@dataclass(frozen=True)
class PilotSettings:
    num_slots: int = 8
    frames_per_slot: int = 100
    estimator: str = "music"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one sweep needs; hashable so derived objects can be cached per config.

    ``plan_slots`` of ``None`` lets the plan generator pick ``T``.
    ``allocation="split"`` shares the ``N`` snapshots of a trial across the
    SCM training slots; ``"per-slot"`` gives every slot its own ``N``.
    """

    methods: tuple[str, ...] = ("fd-music", "scm-music", "had-music")
    architecture: CombinerSpec = FullyConnected()
    M: int = 64
    L: int = 16
    snr_db_list: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    angles_deg: tuple[float, ...] = (10.0, 60.0)
    powers: Optional[tuple[float, ...]] = None
    num_snapshots: int = 1000
    trials: int = 100
    master_seed: int = DEFAULT_SEED
    plan_kind: str = "sliding"
    plan_slots: Optional[int] = None
    recon: str = "toeplitz"
    allocation: str = "split"
    grid_step_deg: float = 0.1
    rf_snr_db: float = 0.0
    M_list: tuple[int, ...] = (16, 32)
    L_list: tuple[int, ...] = (2, 4, 8)
    scan: ScanSettings = ScanSettings()
    pilot: PilotSettings = PilotSettings()
    failure_ceiling: float = 1.0

    def __post_init__(self):
        for name in ("methods", "snr_db_list", "angles_deg", "M_list", "L_list"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.powers is not None:
            object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        object.__setattr__(self, "snr_db_list", tuple(float(s) for s in self.snr_db_list))
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))
        if not self.methods:
            raise ConfigurationError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigurationError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigurationError("methods must not repeat")
        if type(self.architecture).__name__ not in SPEC_TYPES:
            raise ConfigurationError(f"unknown architecture {self.architecture!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.num_snapshots < 1:
            raise ConfigurationError("num_snapshots must be >= 1")
        if not self.angles_deg:
            raise ConfigurationError("at least one source angle is required")
        if len(self.angles_deg) > 4:
            raise ConfigurationError("error pairing supports at most 4 sources")
        if self.plan_kind not in PLAN_KINDS:
            raise ConfigurationError(f"plan_kind must be one of {PLAN_KINDS}")
        if self.recon not in RECON_ROUTES:
            raise ConfigurationError(f"recon must be one of {RECON_ROUTES}")
        if self.allocation not in ALLOCATIONS:
            raise ConfigurationError(f"allocation must be one of {ALLOCATIONS}")
        if not 0.0 <= self.failure_ceiling <= 1.0:
            raise ConfigurationError("failure_ceiling must lie in [0, 1]")
        SpectrumGrid(coarse_step_deg=self.grid_step_deg)

    @property
    def num_sources(self) -> int:
        return len(self.angles_deg)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.M)

    @property
    def grid(self) -> SpectrumGrid:
        return SpectrumGrid(coarse_step_deg=self.grid_step_deg)

    def scenario(self, num_snapshots: Optional[int] = None) -> SourceScenario:
        powers = self.powers or tuple(1.0 for _ in self.angles_deg)
        return SourceScenario(self.angles_deg, powers, num_snapshots or self.num_snapshots)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class RmseCurve:
    x_label: str
    x: tuple[float, ...]
    method: str
    rmse_deg: tuple[float, ...]
    failures: tuple[int, ...]
    trials: int
    runtime_seconds: float = 0.0

    def __post_init__(self):
        if not len(self.x) == len(self.rmse_deg) == len(self.failures):
            raise ValueError("curve lengths disagree")


@dataclass(frozen=True)
class TrialOutcome:
    errors: dict
    failed: dict


def pair_and_error(estimates: Sequence[float], truths: Sequence[float]) -> np.ndarray:
    """Absolute errors under the pairing of estimates to truths with least total squared error.

    Errors are returned in the order of ``truths``.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"{est.size} estimates for {tru.size} truths")
    if tru.size > 4:
        raise ValueError("exact pairing is limited to 4 sources")
    best, best_cost = None, math.inf
    for perm in itertools.permutations(range(tru.size)):
        d = np.abs(est[list(perm)] - tru)
        cost = float(np.sum(d ** 2))
        if cost < best_cost:
            best, best_cost = d, cost
    return best


# Method-specific objects, built once per process and config.

def default_plan_slots(M: int, L: int) -> int:
    return max(math.ceil(M * M / (L * L)), 2 * math.ceil(M / L))


@lru_cache(maxsize=16)
def scm_plan(config: ExperimentConfig) -> ReconstructionPlan:
    """Training plan for SCM-MUSIC with the configured snapshot allocation."""
    M, L, spec = config.M, config.L, config.architecture
    kind = config.plan_kind
    if kind != "random" and isinstance(spec, FullyConnected):
        plan = dft_plan(M, L, kind, config.plan_slots)
    elif kind != "random" and isinstance(spec, SwitchBased):
        plan = selection_plan(M, L, kind, config.plan_slots)
    else:
        T = config.plan_slots or default_plan_slots(M, L)
        plan = random_plan(spec, M, L, T, seed=derive_seed(config.master_seed, 9))
    if config.allocation == "split":
        return plan.with_allocation(config.num_snapshots)
    return ReconstructionPlan(plan.combiners, config.num_snapshots)


@lru_cache(maxsize=16)
def had_combiner(config: ExperimentConfig):
    return build_combiner(config.architecture, config.M, config.L, seed=config.master_seed)


def check_config(config: ExperimentConfig) -> None:
    """Raise before any trial runs if a method cannot work with this configuration."""
    K = config.num_sources
    if "had-music" in config.methods:
        had_combiner(config)
    if "scm-music" in config.methods:
        plan = scm_plan(config)
        mode = "toeplitz" if config.recon == "toeplitz" else "entrywise"
        rep = identifiability_report(plan, mode)
        if not rep.feasible:
            raise IdentifiabilityError(
                f"SCM plan ({plan.T} slots, {mode}) has rank {rep.numerical_rank} of {rep.required_rank} "
                f"required (condition {rep.condition_estimate:.3g})",
                rep.numerical_rank, rep.required_rank, rep.condition_estimate)
        if config.recon == "beamspace" and plan.T * plan.L < plan.M:
            raise IdentifiabilityError("beamspace plan has fewer beams than antennas", plan.T * plan.L,
                                       plan.M, math.inf)
        if config.num_snapshots < plan.T and config.allocation == "split":
            raise ConfigurationError(f"{config.num_snapshots} snapshots cannot cover {plan.T} slots")
        if K >= config.M:
            raise ConfigurationError("SCM-MUSIC needs K < M")
    if "scan" in config.methods:
        n = planned_slots(config.geometry, config.L, config.scan.coarse, config.scan.fine, K)
        if config.num_snapshots < n:
            raise ConfigurationError(f"scan needs {n} slots but only {config.num_snapshots} snapshots")
    if "pilot" in config.methods:
        p = config.pilot
        if K >= p.num_slots * config.L:
            raise ConfigurationError(f"pilot virtual dimension {p.num_slots * config.L} must exceed K={K}")
        if p.frames_per_slot < K + 1:
            raise ConfigurationError("pilot frames_per_slot must be >= K + 1")
        if p.estimator not in ("music", "matched-filter") or (p.estimator == "matched-filter" and K != 1):
            raise ConfigurationError("pilot estimator must be 'music', or 'matched-filter' with one source")
    if K >= config.M:
        raise ConfigurationError("need fewer sources than antennas")


def _had_estimate(config, X, noise_free_K):
    c = had_combiner(config)
    Y = apply_combiner(c, X)
    R = sample_scm(Y)
    g, grid, K = config.geometry, config.grid, noise_free_K
    if c.L <= K:
        # no noise subspace left; fall back to beamformer peaks and flag the trial
        P = beamformer_spectrum(R, g, grid, c)
        angles, _ = find_peaks(P, grid, K, fallback=True)
        return angles, True
    est = estimate_doa_music(R, g, K, grid, combiner=c, fallback=True, method="had-music")
    return est.angles_deg, est.failed


def _scm_estimate(config, X, noise, key):
    plan = scm_plan(config)
    if config.allocation == "per-slot":
        blocks = [generate_snapshots(config.geometry, config.scenario(n), noise, make_rng(config.master_seed, *key, 3, t))
                  for t, n in enumerate(plan.snapshots_per_slot)]
        hyb = [slot_hybrids(ReconstructionPlan((c,), n), b)[0]
               for c, n, b in zip(plan.combiners, plan.snapshots_per_slot, blocks)]
    else:
        hyb = slot_hybrids(plan, X)
    if config.recon == "toeplitz":
        R = toeplitz_reconstruct(plan, hyb)
    elif config.recon == "entrywise":
        R = entrywise_reconstruct(plan, hyb)
    else:
        R = beamspace_reconstruct(plan.combiners, block_scm(plan.combiners, X))
    est = estimate_doa_music(R, config.geometry, config.num_sources, config.grid, fallback=True,
                             method="scm-music")
    return est.angles_deg, est.failed


def run_trial(config: ExperimentConfig, snr_db: float, trial_index: int,
              x_index: Optional[int] = None) -> TrialOutcome:
    """Run every configured method on one trial.

    The random stream key is ``(x_index, trial_index)``; ``x_index`` defaults
    to the position of ``snr_db`` in ``config.snr_db_list``.
    """
    if x_index is None:
        x_index = config.snr_db_list.index(float(snr_db)) if float(snr_db) in config.snr_db_list else 0
    key = (int(x_index), int(trial_index))
    g, K = config.geometry, config.num_sources
    noise = NoiseSpec.from_snr_db(snr_db)
    X = generate_snapshots(g, config.scenario(), noise, make_rng(config.master_seed, *key))
    errors, failed = {}, {}
    for method in config.methods:
        fail = False
        if method == "fd-music":
            est = estimate_doa_music(sample_scm(X), g, K, config.grid, fallback=True, method="fd-music")
            angles, fail = est.angles_deg, est.failed
        elif method == "had-music":
            angles, fail = _had_estimate(config, X, K)
        elif method == "scm-music":
            angles, fail = _scm_estimate(config, X, noise, key)
        elif method == "scan":
            s = config.scan
            n = planned_slots(g, config.L, s.coarse, s.fine, K)
            src = SnapshotSource(g, config.scenario(), noise, derive_seed(config.master_seed, *key, 1),
                                 config.num_snapshots // n, max_slots=n)
            angles = two_stage_estimate(g, config.L, src, s.coarse, s.fine, K).angles_deg
        else:
            p = config.pilot
            sched = PilotSchedule.random(p.num_slots, derive_seed(config.master_seed, *key, 2))
            est = pilot_estimate(g, config.scenario(), noise, sched, config.L, p.frames_per_slot,
                                 make_rng(config.master_seed, *key, 2), config.grid, p.estimator, fallback=True)
            angles, fail = est.angles_deg, est.failed
        errors[method] = pair_and_error(angles, config.angles_deg)
        failed[method] = bool(fail)
    return TrialOutcome(errors, failed)


def _task(args):
    config, snr_db, trial, x_index = args
    with threadpool_limits(1):
        return run_trial(config, snr_db, trial, x_index)


def _run_tasks(tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_task, tasks, chunksize=chunk))


def _reduce(config, outcomes, n_x):
    """Per method: RMSE and failure count for each x point, summed in trial order."""
    out = {}
    for m in config.methods:
        rmse, fails = [], []
        for i in range(n_x):
            block = outcomes[i * config.trials:(i + 1) * config.trials]
            sq = np.array([o.errors[m] for o in block]) ** 2
            rmse.append(float(np.sqrt(np.mean(sq))))
            fails.append(sum(o.failed[m] for o in block))
        out[m] = (tuple(rmse), tuple(fails))
    return out


def sweep_snr(config: ExperimentConfig, jobs: int = 1) -> list[RmseCurve]:
    """One curve per method over ``config.snr_db_list``."""
    check_config(config)
    t0 = time.perf_counter()
    tasks = [(config, snr, t, i) for i, snr in enumerate(config.snr_db_list) for t in range(config.trials)]
    red = _reduce(config, _run_tasks(tasks, jobs), len(config.snr_db_list))
    dt = time.perf_counter() - t0
    return [RmseCurve("snr_db", config.snr_db_list, m, *red[m], config.trials, dt) for m in config.methods]


def sweep_array_rf(config: ExperimentConfig, M_list: Optional[Sequence[int]] = None,
                   L_list: Optional[Sequence[int]] = None, snr_db: Optional[float] = None,
                   jobs: int = 1) -> list[RmseCurve]:
    """One curve per (method, M) over the L axis at a fixed SNR.

    Curve labels read ``<method>:M<M>``. Every L of one M sees the same
    snapshot draws, which makes the comparison across L paired.
    """
    M_list = tuple(M_list or config.M_list)
    L_list = tuple(L_list or config.L_list)
    snr = config.rf_snr_db if snr_db is None else float(snr_db)
    t0 = time.perf_counter()
    cfgs = []
    for M in M_list:
        for L in L_list:
            c = config.replace(M=M, L=L, snr_db_list=(snr,))
            check_config(c)
            cfgs.append(c)
    tasks = [(c, snr, t, i // len(L_list)) for i, c in enumerate(cfgs) for t in range(config.trials)]
    outcomes = _run_tasks(tasks, jobs)
    dt = time.perf_counter() - t0
    curves = []
    per = config.trials
    for mi, M in enumerate(M_list):
        for m in config.methods:
            rmse, fails = [], []
            for li in range(len(L_list)):
                j = mi * len(L_list) + li
                r, f = _reduce(cfgs[j], outcomes[j * per:(j + 1) * per], 1)[m]
                rmse.append(r[0])
                fails.append(f[0])
            curves.append(RmseCurve("num_rf_chains", tuple(float(L) for L in L_list), f"{m}:M{M}",
                                    tuple(rmse), tuple(fails), config.trials, dt))
    return curves


def _fmt(x: float) -> str:
    return repr(float(x))


def curves_csv(curves: Sequence[RmseCurve]) -> str:
    """CSV text with header ``x,method,rmse_deg,failures,trials``, rows grouped by x point."""
    xs = list(dict.fromkeys(x for c in curves for x in c.x))
    lines = ["x,method,rmse_deg,failures,trials"]
    for x in xs:
        for c in curves:
            if x in c.x:
                i = c.x.index(x)
                lines.append(f"{_fmt(x)},{c.method},{_fmt(c.rmse_deg[i])},{c.failures[i]},{c.trials}")
    return "\n".join(lines) + "\n"


def write_curves_csv(path, curves: Sequence[RmseCurve]) -> None:
    Path(path).write_text(curves_csv(curves))


def read_curves_csv(path) -> list[RmseCurve]:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != "x,method,rmse_deg,failures,trials":
        raise ValueError(f"{path}: not an RMSE curve file")
    acc: dict = {}
    for r in rows[1:]:
        x, m, e, f, t = r.split(",")
        d = acc.setdefault(m, {"x": [], "e": [], "f": [], "t": int(t)})
        d["x"].append(float(x))
        d["e"].append(float(e))
        d["f"].append(int(f))
    return [RmseCurve("x", tuple(d["x"]), m, tuple(d["e"]), tuple(d["f"]), d["t"]) for m, d in acc.items()]


def write_curves_svg(path, curves: Sequence[RmseCurve], title: str = "") -> None:
    """Line chart, log-scaled RMSE axis, one line per curve."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "hadoa", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for c in curves:
            ax.semilogy(c.x, np.maximum(c.rmse_deg, 1e-6), marker="o", label=c.method)
        ax.set_xlabel(curves[0].x_label if curves else "x")
        ax.set_ylabel("RMSE (deg)")
        if title:
            ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
