"""Reproduce the headline ensemble curves on a reduced replica count.

Runs 600 replicas of the default configuration and prints the three
quantities the experiment reports per cycle: cumulative defect-free
success rate, mean buffer fill fraction, and normalized reservoir
population. Writes the same CSV/JSON artifacts the CLI would."""

import sys
import time

from tweezersim.config import ExperimentConfig
from tweezersim.harness import run_experiment, write_outputs

n_replicas = int(sys.argv[1]) if len(sys.argv) > 1 else 600
config = ExperimentConfig(n_replicas=n_replicas)

t0 = time.perf_counter()
stats, _ = run_experiment(config)
dt = time.perf_counter() - t0
print(f"{stats.n_replicas} replicas x {config.n_cycles} cycles "
      f"in {dt:.2f} s\n")

print("cycle  success +- ci     fill +- ci      reservoir(norm)")
for k in range(config.n_cycles):
    print(f"{stats.cycles[k]:5d}  {stats.success_rate[k]:.3f} +- "
          f"{stats.success_ci[k]:.3f}   {stats.buffer_fill_mean[k]:.3f} +- "
          f"{stats.buffer_fill_ci[k]:.3f}   {stats.reservoir_norm[k]:.3f}")

print(f"\nmean atoms delivered per realization: {stats.mean_delivered:.2f}")
print(f"reservoir baseline (cycle-1 mean): {stats.reservoir_baseline:.1f} atoms")

paths = write_outputs(stats, None, "demo_output", config)
for name, path in sorted(paths.items()):
    print(f"wrote {path}")
