# Learn the damped two-level evolution with a GRU that emits the state
# directly (EXP1).  Pass "full" for the desk-scale run (about a minute).
import sys

import numpy as np

from qrnn.experiments import ExperimentConfig, run_exp1

full = "full" in sys.argv[1:]
cfg = ExperimentConfig.for_experiment(1) if full else \
    ExperimentConfig.for_experiment(1, n_train=128, n_test=20, epochs=25, hidden=(16, 16))
res = run_exp1(cfg)
curve, base = res.curves["predictor"], res.baseline["predictor"]

print("epoch losses:", np.array2string(np.array(res.train_losses["predictor"]), precision=4))
print("\n  t     trained   untrained")
for j in range(9, len(curve.times), 10):
    print(f"  {curve.times[j]:.1f}   {curve.values[j]:.4f}    {base.values[j]:.4f}")
print(f"\nmean trace distance t<=t_max: {curve.mean_until(cfg.t_max):.4f}, after: {curve.mean_after(cfg.t_max):.4f}")
