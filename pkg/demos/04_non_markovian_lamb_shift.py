# Reduced dynamics of a qubit coupled to a decaying ancilla (EXP4): learn the
# master equation with a Lindblad operator only, then with a Lamb shift too.
# "full" runs desk scale (about two minutes).
import sys

from qrnn.experiments import ExperimentConfig, run_exp4

full = "full" in sys.argv[1:]
cfg = ExperimentConfig.for_experiment(4) if full else \
    ExperimentConfig.for_experiment(4, n_train=128, n_test=20, epochs=15, hidden=(16, 16))
res = run_exp4(cfg)

print("variant   cost t<=t_max   cost t>t_max   untrained")
for name, curve in res.curves.items():
    base = res.baseline[name]
    print(f"{name:8s}  {curve.mean_until(cfg.t_max):.3e}       {curve.mean_after(cfg.t_max):.3e}      "
          f"{base.mean_until(cfg.t_max):.3e}")
