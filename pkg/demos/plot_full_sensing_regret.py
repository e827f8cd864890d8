"""
Full sensing: regret of the sample-mean rule
============================================

Every channel is sensed each slot. The rule inverts each channel's free-reading
rate into an estimate of theta and accesses the best K channels read free.
Regret stops growing once the ranking is learned. At K = N nothing is ever
left on the table, so the regret is exactly zero.
"""

import numpy as np

from osabandit import ExperimentConfig, reference_model, run_experiment

model = reference_model("homogeneous")
config = ExperimentConfig(model, "alg2", k=(1, 3, 5, 7, 8), slots=20_000, runs=200, master_seed=7,
                          out_dir="demo_output/full_sensing")
result = run_experiment(config)

print("slot      " + "".join(f"   K={k:<5}" for k in config.k))
slots = result.traces[1].slots
for col in np.flatnonzero(np.isin(slots, [10, 100, 1000, 10_000, 20_000])):
    row = "".join(f"{result.traces[k].mean_regret[col]:10.3f}" for k in config.k)
    print(f"{slots[col]:<10d}{row}")

# The CSV next to the plot is the artifact to keep.
for path in result.files:
    print("wrote", path)
