"""
Confidence stability and heatmaps
=================================

Resamples the stated confidence at the greedy click and exports heatmaps of
the ground-truth field next to the policy's own confidence map.
"""
import tempfile
from pathlib import Path

import numpy as np

from clickcal import TaskConfig, TrainConfig, generate_tasks, heatmap, stability, train, write_heatmap

tc = TaskConfig()
policy, _ = train(generate_tasks(1000, tc, 1000), TrainConfig(steps=2000))
test_tasks = generate_tasks(500, tc, 2000, "te")

rep = stability(policy, test_tasks, repeats=8, temperature=1.0, rng=np.random.default_rng(0),
                sample_sizes=[100, 200, 500])
for n, v in zip(rep.sample_sizes, rep.mean_variance):
    print(f"n={n:3d}  mean variance of 8 resampled confidences: {v:.4f}")

task = test_tasks[0]
truth = heatmap("truth", task)
mine = heatmap(policy, task)
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print("target:", task.target)
print(truth)
print(mine)

out = Path(tempfile.mkdtemp())
print(write_heatmap(out / "truth", truth), write_heatmap(out / "policy", mine))
