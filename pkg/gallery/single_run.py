"""One nominal mission: 20 robots, 4 targets, one link each.

Writes the per-step metrics and the termination report to ``out/`` and
prints a short summary.

    python3 gallery/single_run.py [seed]
"""

import sys

from swarmlink import ExperimentConfig, run

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = ExperimentConfig(n_robots=20, links_per_target=1)
result = run(cfg, seed)
rep = result.report
csv_path, json_path = result.write("out", f"{cfg.name}_seed{seed}")

print(f"success: {rep.success}, completion step: {rep.completion_step}")
print(f"target reached at: {rep.target_reach_step}")
print(f"robots per chain: {rep.robots_per_chain}")
print(f"smallest sampled lambda2: {rep.min_lambda2:.4f}")
print("bandwidth (bytes/step):", {k: round(v, 1) for k, v in rep.bandwidth_stats().items()})
print(f"wrote {csv_path} and {json_path}")
