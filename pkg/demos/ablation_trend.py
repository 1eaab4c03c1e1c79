"""
Does the scene graph help?
==========================

Trains matched seeds with and without graph features on the pinned smoke
budget and compares success rates where the task is hardest.  The full study
(three seeds, two rooms, 200 evaluation episodes per bucket) takes about half
an hour on one core; pass a seed count to shorten it.
"""

import logging
import sys

from sgnav.harness import EvalReport, compare_ablations, emit_plots, metrics_dir

logging.basicConfig(level=logging.INFO, format="%(message)s")
seeds = list(range(int(sys.argv[1]) if len(sys.argv) > 1 else 3))
out = metrics_dir() / "demo_ablation"

two_wall = compare_ablations("two_wall", ["scene_pooled", "no_graph"], seeds, [2.0, 2.4], 200,
                             out_dir=out, cache_dir=out / "cache")
print(f"TWO_WALL, R in {{2.0, 2.4}}: scene_pooled - no_graph = {two_wall.gap('scene_pooled', 'no_graph'):+.3f}")

chairs = compare_ablations("random_chairs", ["gt_graph", "no_graph"], seeds, [3.0], 200,
                           out_dir=out, cache_dir=out / "cache")
print(f"RANDOM_CHAIRS, R = 3.0: gt_graph - no_graph = {chairs.gap('gt_graph', 'no_graph'):+.3f}")

# %%
# One curve per ablation, averaged over seeds.
curves = {}
for study, name in ((two_wall, "two_wall"), (chairs, "random_chairs")):
    for abl in study.reports:
        rates = [study.mean_rate(abl, d) for d in study.distances]
        n = len(seeds) * 200
        curves[f"{name}_{abl}"] = EvalReport(study.distances, rates, [n] * len(rates), [0.0] * len(rates))
emit_plots({"eval": curves}, out / "plots")
