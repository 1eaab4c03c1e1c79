"""Planar scene model: poses, velocity commands, obstacles and admissibility.

Navigation happens in a 2D top-down world. Obstacles are axis-aligned boxes
or circles; every obstacle and target keeps a height so that scene-graph
features can still be three dimensional.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import yaml

SCENE_FILE_VERSION = 1


class SceneError(ValueError):
    """Raised for malformed scenes or scene files."""


def wrap_angle(a: float) -> float:
    """Map an angle to [-pi, pi)."""
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    # float modulo can land exactly on +pi for tiny negative inputs
    return -math.pi if w >= math.pi else w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"non-finite pose {self.x}, {self.y}, {self.theta}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Twist:
    """Linear (m/s) and angular (rad/s) velocity command."""

    v: float = 0.0
    w: float = 0.0


@dataclass(frozen=True)
class VelocityLimits:
    """The admissible control set: |v| <= v_max, |w| <= w_max."""

    v_max: float = 1.0
    w_max: float = 1.5

    def contains(self, twist: Twist) -> bool:
        return abs(twist.v) <= self.v_max and abs(twist.w) <= self.w_max

    def clamp(self, twist: Twist) -> Twist:
        return Twist(
            min(max(twist.v, -self.v_max), self.v_max),
            min(max(twist.w, -self.w_max), self.w_max),
        )


@dataclass(frozen=True)
class RobotFootprint:
    radius: float = 0.3

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("footprint radius must be positive")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box obstacle."""

    center: tuple[float, float]
    half_extents: tuple[float, float]
    label: str
    color: str = ""
    height: float = 0.75

    def distance(self, x: float, y: float) -> float:
        dx = max(abs(x - self.center[0]) - self.half_extents[0], 0.0)
        dy = max(abs(y - self.center[1]) - self.half_extents[1], 0.0)
        return math.hypot(dx, dy)

    def contains(self, x: float, y: float) -> bool:
        return (abs(x - self.center[0]) <= self.half_extents[0]
                and abs(y - self.center[1]) <= self.half_extents[1])

    @property
    def aabb(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        hx, hy = self.half_extents
        return (cx - hx, cy - hy, cx + hx, cy + hy)

    @property
    def bbox3d(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        pos = (self.center[0], self.center[1], self.height / 2.0)
        ext = (2.0 * self.half_extents[0], 2.0 * self.half_extents[1], self.height)
        return pos, ext


@dataclass(frozen=True)
class Circle:
    """Circular obstacle (poles, chair seats)."""

    center: tuple[float, float]
    radius: float
    label: str
    color: str = ""
    height: float = 1.0

    def distance(self, x: float, y: float) -> float:
        return max(math.hypot(x - self.center[0], y - self.center[1]) - self.radius, 0.0)

    def contains(self, x: float, y: float) -> bool:
        return math.hypot(x - self.center[0], y - self.center[1]) <= self.radius

    @property
    def aabb(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)

    @property
    def bbox3d(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        pos = (self.center[0], self.center[1], self.height / 2.0)
        ext = (2.0 * self.radius, 2.0 * self.radius, self.height)
        return pos, ext


Obstacle = Union[Box, Circle]


@dataclass(frozen=True)
class TargetCandidate:
    """A possible target placement. ``command`` is the goal text issued when it is active."""

    label: str
    position: tuple[float, float, float]
    command: str = ""

    @property
    def goal_text(self) -> str:
        return self.command or self.label


@dataclass(frozen=True)
class Scene:
    bounds: tuple[float, float, float, float]
    obstacles: tuple[Obstacle, ...] = ()
    target_candidates: tuple[TargetCandidate, ...] = ()
    active_target: int = 0
    synonyms: dict = field(default_factory=dict, hash=False, compare=True)
    name: str = ""

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise SceneError(f"degenerate bounds {self.bounds}")
        if not self.target_candidates:
            raise SceneError("scene needs at least one target candidate")
        if not 0 <= self.active_target < len(self.target_candidates):
            raise SceneError(f"active_target {self.active_target} out of range")
        for ob in self.obstacles:
            if not ob.label:
                raise SceneError("every obstacle needs a label")
            bx0, by0, bx1, by1 = ob.aabb
            if bx0 < xmin or by0 < ymin or bx1 > xmax or by1 > ymax:
                raise SceneError(f"obstacle {ob.label!r} leaves the scene bounds")
        for t in self.target_candidates:
            if not t.label:
                raise SceneError("every target candidate needs a label")

    @property
    def target(self) -> TargetCandidate:
        return self.target_candidates[self.active_target]

    @property
    def target_xy(self) -> tuple[float, float]:
        p = self.target.position
        return (p[0], p[1])

    def with_target(self, index: int) -> "Scene":
        return Scene(self.bounds, self.obstacles, self.target_candidates, index,
                     dict(self.synonyms), self.name)

    def geometry_hash(self) -> str:
        """Hash of everything except the active target choice."""
        d = scene_to_dict(self)
        d.pop("active_target")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def clearance(x: float, y: float, scene: Scene) -> float:
    """Distance from a point to the nearest obstacle (0 inside one); inf if there are none."""
    best = math.inf
    for ob in scene.obstacles:
        d = ob.distance(x, y)
        if d < best:
            best = d
    return best


def exits_bounds(pose: Pose, footprint: RobotFootprint, scene: Scene) -> bool:
    xmin, ymin, xmax, ymax = scene.bounds
    r = footprint.radius
    return pose.x - r < xmin or pose.x + r > xmax or pose.y - r < ymin or pose.y + r > ymax


def collides(pose: Pose, footprint: RobotFootprint, scene: Scene) -> bool:
    """True iff the footprint disc overlaps an obstacle or sticks out of the bounds.

    Touching (distance exactly equal to the radius) is not a collision.
    """
    if exits_bounds(pose, footprint, scene):
        return True
    r = footprint.radius
    for ob in scene.obstacles:
        if ob.distance(pose.x, pose.y) < r:
            return True
    return False


def admissible(pose: Pose, footprint: RobotFootprint, scene: Scene) -> bool:
    xmin, ymin, xmax, ymax = scene.bounds
    r = footprint.radius
    inside = xmin + r <= pose.x <= xmax - r and ymin + r <= pose.y <= ymax - r
    return inside and not collides(pose, footprint, scene)


# ---------------------------------------------------------------- scene files


def _obstacle_to_dict(ob: Obstacle) -> dict:
    if isinstance(ob, Box):
        return {"shape": "box", "center": list(ob.center), "half_extents": list(ob.half_extents),
                "height": ob.height, "label": ob.label, "color": ob.color}
    return {"shape": "circle", "center": list(ob.center), "radius": ob.radius,
            "height": ob.height, "label": ob.label, "color": ob.color}


def _obstacle_from_dict(d: dict) -> Obstacle:
    shape = d.get("shape")
    try:
        if shape == "box":
            return Box(tuple(map(float, d["center"])), tuple(map(float, d["half_extents"])),
                       str(d["label"]), str(d.get("color", "")), float(d.get("height", 0.75)))
        if shape == "circle":
            return Circle(tuple(map(float, d["center"])), float(d["radius"]),
                          str(d["label"]), str(d.get("color", "")), float(d.get("height", 1.0)))
    except KeyError as e:
        raise SceneError(f"obstacle missing field {e}") from None
    raise SceneError(f"unknown obstacle shape {shape!r}")


def scene_to_dict(scene: Scene) -> dict:
    return {
        "version": SCENE_FILE_VERSION,
        "name": scene.name,
        "bounds": list(scene.bounds),
        "obstacles": [_obstacle_to_dict(o) for o in scene.obstacles],
        "targets": [{"label": t.label, "position": list(t.position), "command": t.command}
                    for t in scene.target_candidates],
        "active_target": scene.active_target,
        "synonyms": dict(scene.synonyms),
    }


def scene_from_dict(d: dict) -> Scene:
    if not isinstance(d, dict):
        raise SceneError("scene description must be a mapping")
    if "version" not in d:
        raise SceneError("scene file has no version field")
    if d["version"] != SCENE_FILE_VERSION:
        raise SceneError(f"unsupported scene file version {d['version']}")
    try:
        targets = tuple(
            TargetCandidate(str(t["label"]), tuple(map(float, t["position"])), str(t.get("command", "")))
            for t in d["targets"]
        )
        return Scene(
            bounds=tuple(map(float, d["bounds"])),
            obstacles=tuple(_obstacle_from_dict(o) for o in d.get("obstacles", [])),
            target_candidates=targets,
            active_target=int(d.get("active_target", 0)),
            synonyms={str(k): str(v) for k, v in (d.get("synonyms") or {}).items()},
            name=str(d.get("name", "")),
        )
    except KeyError as e:
        raise SceneError(f"scene file missing field {e}") from None


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))


def load_scene(path) -> Scene:
    try:
        d = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise SceneError(f"cannot parse scene file {path}: {e}") from None
    return scene_from_dict(d)
