# Learn a recurrent Lindblad operator from Markovian data (EXP2) and compare
# its entries with the true sqrt(gamma(t)) sigma_minus.  "full" runs desk scale.
import sys

import numpy as np

from qrnn.experiments import ExperimentConfig, run_exp2

full = "full" in sys.argv[1:]
cfg = ExperimentConfig.for_experiment(2) if full else \
    ExperimentConfig.for_experiment(2, n_train=128, n_test=20, epochs=20, hidden=(16, 16))
res = run_exp2(cfg)
ex = res.extras

# operators are defined up to a phase, so compare magnitudes
print("  t     |L10|    sqrt(gamma)   max other |L_ij|")
for j in range(10, len(ex["lindblad_times"]), 10):
    m = ex["lindblad_abs"][j]
    others = max(m[0, 0], m[0, 1], m[1, 1])
    print(f"  {ex['lindblad_times'][j]:.1f}   {m[1, 0]:.4f}   {ex['sqrt_gamma'][j]:.4f}        {others:.4f}")

cost = res.curves["L"]
print(f"\nheld-out cost before t_max {cost.mean_until(cfg.t_max):.3e}, after {cost.mean_after(cfg.t_max):.3e}")
