"""Rebuilding the antenna covariance from several RF-chain measurements.

With L < M chains each slot only shows ``W^H R W``. Switching combiners
over T slots and solving the stacked linear system gives R back. The
Toeplitz route needs far fewer slots because a ULA with uncorrelated
sources has a Toeplitz covariance.
"""
# %%
import numpy as np

from hadoa.array_model import ArrayGeometry, NoiseSpec, SourceScenario, generate_snapshots, true_covariance
from hadoa.covariance import (dft_plan, entrywise_reconstruct, exact_hybrids, identifiability_report,
                              sample_scm, slot_hybrids, toeplitz_reconstruct)

M, L = 16, 4
g = ArrayGeometry(M)
sc = SourceScenario((10.0, 60.0), (1.0, 1.0), num_snapshots=1000)
R = true_covariance(g, sc, NoiseSpec(0.1)).data

# %% how many slots each route needs
for kind in ("pairs", "sliding"):
    plan = dft_plan(M, L, kind)
    ew = identifiability_report(plan, "entrywise")
    tp = identifiability_report(plan, "toeplitz")
    print(f"{kind:8s} T={plan.T:3d}  entrywise rank {ew.numerical_rank}/{ew.required_rank}"
          f"  toeplitz rank {tp.numerical_rank}/{tp.required_rank}")

# %% exact hybrid covariances give R back to rounding
plan = dft_plan(M, L, "sliding")
Rt = toeplitz_reconstruct(plan, exact_hybrids(plan, R)).data
print("toeplitz, exact inputs: relative error", np.linalg.norm(Rt - R) / np.linalg.norm(R))
plan_pairs = dft_plan(M, L, "pairs")
Re = entrywise_reconstruct(plan_pairs, exact_hybrids(plan_pairs, R)).data
print("entrywise, exact inputs: relative error", np.linalg.norm(Re - R) / np.linalg.norm(R))

# %% finite snapshots shared across the slots
X = generate_snapshots(g, sc, NoiseSpec(0.1), 3)
split = plan.with_allocation(1000)
Rs = toeplitz_reconstruct(split, slot_hybrids(split, X)).data
Rfd = sample_scm(X).data
print("reconstructed vs truth", np.linalg.norm(Rs - R) / np.linalg.norm(R))
print("fully digital SCM vs truth", np.linalg.norm(Rfd - R) / np.linalg.norm(R))
