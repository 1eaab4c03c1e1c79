"""
Planning a path and following it
================================

The expert that fills the replay buffer during control episodes is a grid
planner plus a Pure Pursuit tracker.  This script builds the all-sources path
table for the TWO_WALL room, picks a start far from the active bowl and drives
the unicycle along the stored path.
"""

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sgnav.env import step_kinematics
from sgnav.harness import metrics_dir
from sgnav.planner import PurePursuitConfig, build_path_table, nearest_grid_point, pure_pursuit_step
from sgnav.scene import Box, Pose, RobotFootprint, Twist, collides
from sgnav.scenes import Family, scene_variants

scene = scene_variants(Family.TWO_WALL)[0].with_target(4)
robot = RobotFootprint(0.3)

# The grid is built for a slightly fatter robot so that tracking error never
# turns into contact with a table corner.
table = build_path_table(scene, RobotFootprint(robot.radius + 0.15), resolution=0.25)
print(f"grid {table.grid.shape}, {len(table.entries)} stored (cell, target) paths")

start = Pose(1.5, 1.5, 0.0)
cell = nearest_grid_point(start, table.grid)
path = table.get(cell, 0)
entry = table.entries[(cell, 0)]
print(f"start cell {cell}: {entry.n_orth} straight + {entry.n_diag} diagonal moves, "
      f"cost {entry.cost:.2f} m, {len(path)} waypoints after simplification")

# %%
# Closed loop: pursue the lookahead point until the tracker reports arrival.
cfg = PurePursuitConfig()
pose, trail = start, [start]
for _ in range(2000):
    tw = pure_pursuit_step(pose, path, cfg)
    if tw == Twist(0.0, 0.0):
        break
    pose = step_kinematics(pose, tw, 0.1)
    trail.append(pose)
    assert not collides(pose, robot, scene)
miss = math.hypot(pose.x - path[-1][0], pose.y - path[-1][1])
print(f"arrived after {len(trail) - 1} steps, {miss:.3f} m from the last waypoint")

# %%
fig, ax = plt.subplots(figsize=(7, 5.6))
for ob in scene.obstacles:
    if isinstance(ob, Box):
        (cx, cy), (hx, hy) = ob.center, ob.half_extents
        ax.add_patch(plt.Rectangle((cx - hx, cy - hy), 2 * hx, 2 * hy, color=ob.color if ob.label == "wall" else "tan"))
    else:
        ax.add_patch(plt.Circle(ob.center, ob.radius, color="gray"))
ax.imshow(table.grid.cells, origin="lower", extent=(0, 10, 0, 8), cmap="Greys_r", alpha=0.15)
p = np.asarray(path)
ax.plot(p[:, 0], p[:, 1], "o--", label="simplified path")
ax.plot([q.x for q in trail], [q.y for q in trail], label="robot")
ax.plot(*scene.target_xy, "k*", ms=12, label=scene.target.goal_text)
ax.set_aspect("equal")
ax.set_xlim(0, 10)
ax.set_ylim(0, 8)
ax.legend(loc="lower right")
out = metrics_dir() / "demo_plan_and_follow.svg"
out.parent.mkdir(parents=True, exist_ok=True)
fig.savefig(out)
print("figure written to", out)
