"""Differential-drive kinematic navigation environment.

Observation layout (fixed for a given config)::

    [ v, w | goal text embedding (D) | K ray distances / ray_max | graph encoding (D + 6) ]

The ray fan stands in for the camera image embedding: it exposes local
geometry but says nothing about which object is the target.  The graph slot is
zero-filled when no scene graph is used so every ablation shares one layout.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graph import encode_graph, ground_truth_graph, graph_noise, pseudo_embed, target_only_encoding
from .scene import (Box, Pose, RobotFootprint, Scene, Twist, VelocityLimits, admissible,
                    collides, wrap_angle)

REWARD_FAIL = -5.0
REWARD_NONE = -0.2
REWARD_ONE = -0.1
REWARD_SUCCESS = 2.0


class InitExhausted(RuntimeError):
    """No admissible start pose found for the requested difficulty."""


class DimensionMismatch(ValueError):
    pass


class Mode(enum.Enum):
    POLICY = "policy"
    CONTROL = "control"


class Ablation(enum.Enum):
    NO_GRAPH = "no_graph"
    TARGET_ONLY = "target_only"
    SCENE_POOLED = "scene_pooled"
    GT_GRAPH = "gt_graph"


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.1
    max_steps: int = 300
    limits: VelocityLimits = VelocityLimits()
    footprint: RobotFootprint = RobotFootprint(0.3)
    dist_threshold: float = 1.1
    angle_threshold: float = math.radians(13.0)
    n_rays: int = 24
    ray_fov: float = math.radians(120.0)
    ray_max: float = 10.0
    embed_dim: int = 32
    tau: float = 0.1
    egocentric_graph: bool = True
    graph_sigma: float = 0.05   # position noise of a constructed (non ground-truth) graph
    graph_p_drop: float = 0.2
    init_attempts: int = 1000

    @property
    def obs_dim(self) -> int:
        return 2 + self.embed_dim + self.n_rays + self.embed_dim + 6


@dataclass(frozen=True)
class SubtaskStatus:
    dist_ok: bool
    angle_ok: bool


@dataclass
class EnvState:
    pose: Pose
    twist: Twist = Twist()
    step_count: int = 0
    mode: Mode = Mode.POLICY


@dataclass
class Observation:
    twist: np.ndarray
    goal_embedding: np.ndarray
    visual_proxy: np.ndarray
    graph_encoding: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.twist, self.goal_embedding, self.visual_proxy, self.graph_encoding])


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------- geometry


def distance_error(pose: Pose, scene: Scene) -> float:
    tx, ty = scene.target_xy
    return math.hypot(tx - pose.x, ty - pose.y)


def angle_error(pose: Pose, scene: Scene) -> float:
    """Signed angle from the heading to the bearing of the target, in [-pi, pi)."""
    tx, ty = scene.target_xy
    dx, dy = tx - pose.x, ty - pose.y
    if math.hypot(dx, dy) < 1e-9:
        return 0.0
    return wrap_angle(math.atan2(dy, dx) - pose.theta)


def subtask_status(pose: Pose, scene: Scene, config: EnvConfig = EnvConfig()) -> SubtaskStatus:
    return SubtaskStatus(
        dist_ok=distance_error(pose, scene) <= config.dist_threshold,
        angle_ok=abs(angle_error(pose, scene)) <= config.angle_threshold,
    )


def reward(status: SubtaskStatus, collided: bool, timed_out: bool) -> float:
    if collided or timed_out:
        return REWARD_FAIL
    if status.dist_ok and status.angle_ok:
        return REWARD_SUCCESS
    if status.dist_ok or status.angle_ok:
        return REWARD_ONE
    return REWARD_NONE


def step_kinematics(pose: Pose, twist: Twist, dt: float) -> Pose:
    """Unicycle update using the midpoint heading."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    mid = pose.theta + 0.5 * twist.w * dt
    return Pose(pose.x + twist.v * math.cos(mid) * dt,
                pose.y + twist.v * math.sin(mid) * dt,
                pose.theta + twist.w * dt)


def init_robot(R: float, phi: float, scene: Scene, footprint: RobotFootprint,
               rng: np.random.Generator, max_attempts: int = 1000) -> Pose:
    """Place the robot on a circle of radius R around the target, heading off by +-phi."""
    if not 0.0 <= R <= 3.0:
        raise ValueError(f"R={R} outside [0, 3]")
    if not 0.0 <= phi <= math.pi:
        raise ValueError(f"phi={phi} outside [0, pi]")
    tx, ty = scene.target_xy
    for _ in range(max_attempts):
        alpha = rng.uniform(0.0, 2.0 * math.pi)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        x = tx + R * math.cos(alpha)
        y = ty + R * math.sin(alpha)
        # bearing from the robot to the target is alpha + pi
        pose = Pose(x, y, alpha + math.pi + sign * phi)
        if admissible(pose, footprint, scene):
            return pose
    raise InitExhausted(f"no admissible start at R={R}, phi={phi} after {max_attempts} tries")


def cast_rays(pose: Pose, scene: Scene, n_rays: int = 24, fov: float = math.radians(120.0),
              ray_max: float = 10.0) -> np.ndarray:
    """Distances (m) along ``n_rays`` evenly spread over a forward fan, clipped at ray_max."""
    if n_rays == 1:
        angles = np.array([pose.theta])
    else:
        angles = pose.theta + np.linspace(-fov / 2.0, fov / 2.0, n_rays)
    dx, dy = np.cos(angles), np.sin(angles)
    ox, oy = pose.x, pose.y
    xmin, ymin, xmax, ymax = scene.bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_x = np.where(dx != 0, 1.0 / dx, np.inf)
        inv_y = np.where(dy != 0, 1.0 / dy, np.inf)
        # room walls, seen from inside
        tx = np.where(dx > 0, (xmax - ox) * inv_x, np.where(dx < 0, (xmin - ox) * inv_x, np.inf))
        ty = np.where(dy > 0, (ymax - oy) * inv_y, np.where(dy < 0, (ymin - oy) * inv_y, np.inf))
        t = np.maximum(np.minimum(tx, ty), 0.0)
        for ob in scene.obstacles:
            if isinstance(ob, Box):
                bx0, by0, bx1, by1 = ob.aabb
                t1x, t2x = (bx0 - ox) * inv_x, (bx1 - ox) * inv_x
                t1y, t2y = (by0 - oy) * inv_y, (by1 - oy) * inv_y
                # rays parallel to an axis: inside the slab -> unbounded, else miss
                lox = np.where(dx == 0, np.where((bx0 <= ox) & (ox <= bx1), -np.inf, np.inf),
                               np.minimum(t1x, t2x))
                hix = np.where(dx == 0, np.where((bx0 <= ox) & (ox <= bx1), np.inf, -np.inf),
                               np.maximum(t1x, t2x))
                loy = np.where(dy == 0, np.where((by0 <= oy) & (oy <= by1), -np.inf, np.inf),
                               np.minimum(t1y, t2y))
                hiy = np.where(dy == 0, np.where((by0 <= oy) & (oy <= by1), np.inf, -np.inf),
                               np.maximum(t1y, t2y))
                tn = np.maximum(lox, loy)
                tf = np.minimum(hix, hiy)
                hit = (tn <= tf) & (tf >= 0)
                t = np.where(hit, np.minimum(t, np.maximum(tn, 0.0)), t)
            else:
                cx, cy = ob.center
                fx, fy = ox - cx, oy - cy
                b = fx * dx + fy * dy
                c = fx * fx + fy * fy - ob.radius ** 2
                disc = b * b - c
                root = np.sqrt(np.maximum(disc, 0.0))
                t0 = -b - root
                t1 = -b + root
                th = np.where(c <= 0, 0.0, np.where(t0 >= 0, t0, np.inf))
                hit = (disc >= 0) & (t1 >= 0)
                t = np.where(hit, np.minimum(t, th), t)
    return np.minimum(t, ray_max)


def observe(state: EnvState, scene: Scene, graph_encoding: Optional[np.ndarray],
            goal_embedding: np.ndarray, config: EnvConfig = EnvConfig()) -> Observation:
    """Assemble the observation; ``graph_encoding=None`` zero-fills the graph slot.

    With ``config.egocentric_graph`` the pooled position is expressed in the robot frame.
    """
    D = config.embed_dim
    goal_embedding = np.asarray(goal_embedding, dtype=float)
    if goal_embedding.shape != (D,):
        raise DimensionMismatch(f"goal embedding has shape {goal_embedding.shape}, expected ({D},)")
    if graph_encoding is None:
        g = np.zeros(D + 6)
    else:
        g = np.array(graph_encoding, dtype=float)
        if g.shape != (D + 6,):
            raise DimensionMismatch(f"graph encoding has shape {g.shape}, expected ({D + 6},)")
        if config.egocentric_graph:
            p = state.pose
            dx, dy = g[0] - p.x, g[1] - p.y
            c, s = math.cos(p.theta), math.sin(p.theta)
            g[0], g[1] = c * dx + s * dy, -s * dx + c * dy
    rays = cast_rays(state.pose, scene, config.n_rays, config.ray_fov, config.ray_max) / config.ray_max
    return Observation(np.array([state.twist.v, state.twist.w]), goal_embedding, rays, g)


def transition(state: EnvState, action: Twist, scene: Scene, config: EnvConfig = EnvConfig()):
    """Advance one control period.

    Returns ``(next_state, reward, terminated, truncated, info)``.
    """
    twist = config.limits.clamp(action)
    pose = step_kinematics(state.pose, twist, config.dt)
    nxt = EnvState(pose, twist, state.step_count + 1, state.mode)
    status = subtask_status(pose, scene, config)
    collided = collides(pose, config.footprint, scene)
    success = status.dist_ok and status.angle_ok and not collided
    timed_out = not (collided or success) and nxt.step_count >= config.max_steps
    r = reward(status, collided, timed_out)
    info = {"success": success, "collision": collided, "status": status}
    return nxt, r, collided or success, timed_out, info


# ---------------------------------------------------------------- episodic env


class NavEnv:
    """Episode wrapper around :func:`transition`.

    ``scenes`` are layout variants; each reset draws one of them and one of its
    target candidates unless they are given explicitly.
    """

    def __init__(self, scenes: Sequence[Scene] | Scene, config: EnvConfig = EnvConfig(),
                 ablation: Ablation = Ablation.SCENE_POOLED, record_trace: bool = False):
        self.scenes = [scenes] if isinstance(scenes, Scene) else list(scenes)
        self.config = config
        self.ablation = Ablation(ablation)
        self.record_trace = record_trace
        self.trace: list[dict] = []
        self.scene: Optional[Scene] = None
        self.state: Optional[EnvState] = None
        self.graph = None
        self.graph_encoding = None
        self.goal_embedding = None

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    def _graph_encoding(self, scene: Scene, rng: np.random.Generator):
        cfg = self.config
        if self.ablation is Ablation.NO_GRAPH:
            self.graph = None
            return None
        graph = ground_truth_graph(scene, cfg.embed_dim)
        if self.ablation is Ablation.SCENE_POOLED:
            graph = graph_noise(graph, rng, cfg.graph_sigma, cfg.graph_p_drop)
        self.graph = graph
        if self.ablation is Ablation.TARGET_ONLY:
            return target_only_encoding(graph)
        query = pseudo_embed(scene.target.goal_text, cfg.embed_dim, scene.synonyms)
        return encode_graph(graph, query, cfg.tau)

    def reset(self, rng: np.random.Generator, R: float, phi: float, mode: Mode = Mode.POLICY,
              scene_index: Optional[int] = None, target_index: Optional[int] = None) -> np.ndarray:
        if scene_index is None:
            scene_index = int(rng.integers(len(self.scenes)))
        scene = self.scenes[scene_index]
        if target_index is None:
            target_index = int(rng.integers(len(scene.target_candidates)))
        scene = scene.with_target(target_index)
        self.scene = scene
        self.scene_index = scene_index
        cfg = self.config
        self.goal_embedding = pseudo_embed(scene.target.goal_text, cfg.embed_dim)
        self.graph_encoding = self._graph_encoding(scene, rng)
        pose = init_robot(R, phi, scene, cfg.footprint, rng, cfg.init_attempts)
        self.state = EnvState(pose, Twist(), 0, Mode(mode))
        self.trace = []
        return self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.state, self.scene, self.graph_encoding, self.goal_embedding, self.config).vector

    def action_to_twist(self, action) -> Twist:
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        lim = self.config.limits
        return Twist(float(a[0]) * lim.v_max, float(a[1]) * lim.w_max)

    def twist_to_action(self, twist: Twist) -> np.ndarray:
        lim = self.config.limits
        return np.clip(np.array([twist.v / lim.v_max, twist.w / lim.w_max]), -1.0, 1.0)

    def step(self, action) -> StepResult:
        """Advance with a normalized action in [-1, 1]^2 or a :class:`Twist`."""
        twist = action if isinstance(action, Twist) else self.action_to_twist(action)
        self.state, r, term, trunc, info = transition(self.state, twist, self.scene, self.config)
        if self.record_trace:
            p, tw = self.state.pose, self.state.twist
            self.trace.append({"step": self.state.step_count, "x": p.x, "y": p.y, "theta": p.theta,
                               "v": tw.v, "w": tw.w, "reward": r, "terminated": term,
                               "truncated": trunc, "success": info["success"],
                               "collision": info["collision"]})
        return StepResult(self.observe(), r, term, trunc, info)


TRACE_FIELDS = ["step", "x", "y", "theta", "v", "w", "reward", "terminated", "truncated",
                "success", "collision"]


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (int(v) if isinstance(v, bool) else v) for k, v in row.items()})
