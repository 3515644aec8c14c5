# Sweep the extraction strength and watch the delivered-atom budget move,
# then let the bisection routine find the operating point automatically.

import dataclasses

from tweezersim.config import ExperimentConfig
from tweezersim.harness import calibrate_depletion, run_experiment

base = ExperimentConfig(n_replicas=300)

print("mean_ensemble_at_full   delivered   cycle-8 success")
for m in (4.0, 8.0, 13.56, 20.0, 32.0):
    cfg = dataclasses.replace(base, mean_ensemble_at_full=m)
    stats, _ = run_experiment(cfg)
    print(f"{m:21.2f}   {stats.mean_delivered:9.2f}   {stats.success_rate[7]:15.3f}")

# too weak and the buffers starve; too strong and the reservoir is spent
# before the pattern closes. The calibration targets 10 delivered atoms.
fit = calibrate_depletion(base, target_delivered=10.0, tolerance=0.5, n_replicas=300)
print(f"\ncalibrated mean_ensemble_at_full = {fit.mean_ensemble_at_full:.3f} "
      f"({fit.evaluations} evaluations, delivered {fit.achieved_delivered:.2f})")
