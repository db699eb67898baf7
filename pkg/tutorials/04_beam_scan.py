"""Two-stage beam scanning: wide sectors first, then fine beams inside the winner."""
# %%
from hadoa.array_model import ArrayGeometry, NoiseSpec, SourceScenario
from hadoa.scan import (CoarseConfig, FineConfig, SnapshotSource, build_coarse_codebook, planned_slots, scan_power,
                        two_stage_estimate)

g = ArrayGeometry(64)
L = 4
sc = SourceScenario((23.0,), (1.0,))
n = planned_slots(g, L, CoarseConfig(), FineConfig())
print("worst-case slots:", n)

# %% coarse sweep alone
cb = build_coarse_codebook(g, L, 8)
res = scan_power(cb, SnapshotSource(g, sc, NoiseSpec.from_snr_db(10), 1, 1000 // n))
for center, p in zip(cb.beam_centers_deg, res.powers):
    print(f"sector at {center:7.2f} deg  power {p:8.3f}")
print("winner:", res.selected_sectors)

# %% full pipeline
src = SnapshotSource(g, sc, NoiseSpec.from_snr_db(10), 1, 1000 // n, max_slots=n)
est = two_stage_estimate(g, L, src)
print("estimate", est.angles_deg, "using", est.slots_used, "slots")

# %% exact refinement needs every fine beam in one slot
quiet = SnapshotSource(g, SourceScenario((23.0,), (1.0,)), NoiseSpec(1e-12), 2, 20)
print("pattern refinement, L=32:",
      two_stage_estimate(g, 32, quiet, fine=FineConfig(refine="pattern")).angles_deg)
