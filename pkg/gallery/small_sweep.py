"""A reduced fault sweep: 40 robots, 2 links, three seeds per probability.

Writes ``summary.csv``, ``plot_data.csv`` and every run's files to
``out/faults``.
"""

from swarmlink.harness import fault_matrix, run_sweep

summary = run_sweep(fault_matrix(40, 2, (0.0, 0.3, 0.6), n_seeds=3), "out/faults")
for row in summary.rows:
    r = row.row()
    print(f"p={r['failure_probability']}: {r['successes']}/{r['n_seeds']} ok, median {r['median_steps']} steps")
