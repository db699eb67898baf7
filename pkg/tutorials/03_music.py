"""MUSIC on fully digital, hybrid and reconstructed covariances."""
# %%
import numpy as np

from hadoa.array_model import ArrayGeometry, NoiseSpec, SourceScenario, generate_snapshots
from hadoa.covariance import dft_plan, sample_scm, slot_hybrids, toeplitz_reconstruct
from hadoa.frontend import FullyConnected, apply_combiner, build_combiner
from hadoa.music import SpectrumGrid, estimate_doa_music, music_spectrum

M, L = 64, 16
g = ArrayGeometry(M)
sc = SourceScenario((10.0, 60.0), (1.0, 1.0), num_snapshots=1000)
X = generate_snapshots(g, sc, NoiseSpec.from_snr_db(0), 7)

# %% fully digital
print("fd-music ", estimate_doa_music(sample_scm(X), g, 2).angles_deg)

# %% one fixed hybrid combiner: the spectrum lives in the L-dim chain space
c = build_combiner(FullyConnected(), M, L)
est = estimate_doa_music(sample_scm(apply_combiner(c, X)), g, 2, combiner=c, fallback=True)
print("had-music", est.angles_deg, "failed" if est.failed else "")

# %% reconstruct first, then run ordinary MUSIC
plan = dft_plan(M, L, "sliding").with_allocation(1000)
R = toeplitz_reconstruct(plan, slot_hybrids(plan, X))
print("scm-music", estimate_doa_music(R, g, 2).angles_deg)

# %% the spectrum itself, on a coarse grid
grid = SpectrumGrid(coarse_step_deg=1.0)
P = music_spectrum(R, g, 2, grid)
top = np.argsort(P)[-2:]
print("largest grid values at", np.sort(grid.angles[top]))
