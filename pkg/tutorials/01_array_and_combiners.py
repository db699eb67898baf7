"""Array model and analog combiners.

A 16-element half-wavelength ULA sees two plane waves. Four RF chains sit
behind an analog network; we build each supported network, check its
hardware constraints and look at what the chains see.
"""
# %%
import numpy as np

from hadoa.array_model import ArrayGeometry, NoiseSpec, SourceScenario, generate_snapshots, steering_vector
from hadoa.frontend import (DynamicSubarray, FullyConnected, PartiallyConnected, SwitchBased, apply_combiner,
                            build_combiner, validate)

g = ArrayGeometry(16)
a = steering_vector(g, 30.0)
print("phase step between elements (rad):", np.angle(a[1] / a[0]))  # pi * sin(30 deg)

# %% snapshots: columns are time samples
scenario = SourceScenario((-20.0, 30.0), (1.0, 0.5), num_snapshots=500)
X = generate_snapshots(g, scenario, NoiseSpec.from_snr_db(10), 0)
print("X:", X.data.shape, "mean power per antenna", np.mean(np.abs(X.data) ** 2).round(3))

# %% one combiner per architecture
specs = [FullyConnected(), PartiallyConnected(4), SwitchBased(2), DynamicSubarray(4, 0.5)]
for spec in specs:
    c = build_combiner(spec, 16, 4, seed=1)
    nz = np.count_nonzero(np.abs(c.matrix) > 0, axis=0)
    print(f"{type(spec).__name__:20s} nonzeros per chain {nz.tolist()}  violations {validate(c)}")

# %% what the chains see
c = build_combiner(FullyConnected(), 16, 4)
Y = apply_combiner(c, X)
print("Y:", Y.data.shape)
