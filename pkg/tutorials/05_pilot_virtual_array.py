"""Pilot-aided virtual array.

Each pilot slot uses a fresh random phase network. Removing the pilot and
stacking the slots gives a K_p * L dimensional observation with steering
G a(theta), so more slots mean a larger virtual array.
"""
# %%
import numpy as np

from hadoa.array_model import ArrayGeometry, NoiseSpec, SourceScenario
from hadoa.pilot import PilotSchedule, collect_virtual_observation, matched_filter_estimate, virtual_music

g = ArrayGeometry(64)
sc = SourceScenario((10.0,), (1.0,))

# %% error against the number of pilot slots
for Kp in (1, 2, 4, 8):
    errs = []
    for t in range(30):
        obs = collect_virtual_observation(g, sc, NoiseSpec.from_snr_db(0), PilotSchedule.random(Kp, t), 4, 100, t)
        errs.append(abs(virtual_music(obs, g, 1).angles_deg[0] - 10.0))
    print(f"K_p={Kp}  virtual dimension {Kp * 4:2d}  median error {np.median(errs):.4f} deg")

# %% single-source shortcut
obs = collect_virtual_observation(g, sc, NoiseSpec.from_snr_db(0), PilotSchedule.random(8, 0), 4, 100, 0)
print("matched filter:", matched_filter_estimate(obs, g).angles_deg)
