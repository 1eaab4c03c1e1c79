"""
Expert and random baselines
===========================

Before training anything it helps to know the ceiling and the floor: the
planner-plus-tracker expert and a uniformly random policy, evaluated with the
same sweep used for trained agents (200 episodes per distance by default;
pass a smaller count on the command line for a quick look).
"""

import sys

import numpy as np

from sgnav.harness import ExpertPolicy, RandomPolicy, emit_plots, metrics_dir, resolve_scenes, run_eval_sweep

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 200
distances = [1.0, 1.5, 2.0, 2.4, 3.0]
out = metrics_dir() / "demo_baselines"

reports = {}
for family in ("two_wall", "random_chairs"):
    scenes = resolve_scenes(family)
    expert = ExpertPolicy.for_scenes(scenes, cache_dir=out / "cache")
    reports[f"{family}_expert"] = run_eval_sweep(expert, scenes, distances, episodes, seed=1)
    reports[f"{family}_random"] = run_eval_sweep(RandomPolicy(np.random.default_rng(0)), scenes, distances,
                                                 episodes, seed=1)

for label, rep in reports.items():
    print(f"{label:22s}", "  ".join(f"{d:.1f}m:{r:.2f}" for d, r in zip(rep.distances, rep.success_rates)))

for p in emit_plots({"eval": reports}, out):
    print("wrote", p)
