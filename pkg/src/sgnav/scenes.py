"""Scene generators for the three experiment families.

SIMPLE
    One table against the lower wall with five bowl slots, a red pole in front.
TWO_WALL
    A red and a blue wall segment along the top wall, a table in front of each,
    three bowl slots per table; the goal text names the wall colour.
RANDOM_CHAIRS
    Two tables, two bowl slots each, and 0-3 red/black chairs taken from nine
    fixed layouts.  Chairs stay well in front of the tables so that no pocket
    between a chair and a table is cut off from the planning grid.
"""

from __future__ import annotations

import enum

import numpy as np

from .scene import Box, Circle, Scene, TargetCandidate

ROOM = (0.0, 0.0, 10.0, 8.0)
BOWL_Z = 0.75


class Family(enum.Enum):
    SIMPLE = "simple"
    TWO_WALL = "two_wall"
    RANDOM_CHAIRS = "random_chairs"


def _simple() -> Scene:
    table = Box((7.5, 0.8), (1.0, 0.4), "table", "brown", 0.7)
    pole = Circle((7.5, 2.6), 0.12, "pole", "red", 1.2)
    slots = tuple(TargetCandidate("bowl", (x, 1.05, BOWL_Z)) for x in (6.7, 7.1, 7.5, 7.9, 8.3))
    return Scene(ROOM, (table, pole), slots, 0, {}, "simple")


def _two_tables(wall_colors=None):
    obstacles = []
    if wall_colors:
        for cx, color in zip((3.5, 6.5), wall_colors):
            obstacles.append(Box((cx, 7.9), (1.5, 0.1), "wall", color, 2.5))
    for cx in (3.5, 6.5):
        obstacles.append(Box((cx, 7.35), (0.9, 0.45), "table", "brown", 0.7))
    return obstacles


def _two_wall() -> Scene:
    obstacles = _two_tables(("red", "blue"))
    slots = []
    synonyms = {}
    for cx, color in ((3.5, "red"), (6.5, "blue")):
        cmd = f"bowl near {color} wall"
        synonyms[cmd] = "bowl"
        for dx in (-0.6, 0.0, 0.6):
            slots.append(TargetCandidate("bowl", (cx + dx, 7.05, BOWL_Z), cmd))
    return Scene(ROOM, tuple(obstacles), tuple(slots), 0, synonyms, "two_wall")


CHAIR_LAYOUTS = (
    (),
    (("red", 3.5, 5.5),),
    (("black", 6.5, 5.5),),
    (("red", 2.6, 5.5), ("black", 6.5, 5.0)),
    (("black", 3.5, 5.0), ("red", 7.4, 5.5)),
    (("red", 5.0, 4.8), ("black", 3.0, 5.5), ("red", 7.0, 5.5)),
    (("black", 4.2, 5.4), ("red", 5.8, 5.4)),
    (("red", 3.0, 5.0), ("black", 5.0, 5.5), ("black", 7.0, 5.0)),
    (("black", 2.4, 5.5), ("red", 4.6, 5.5), ("black", 6.0, 4.8)),
)


def _random_chairs(layout: int) -> Scene:
    obstacles = _two_tables()
    for color, x, y in CHAIR_LAYOUTS[layout]:
        obstacles.append(Circle((x, y), 0.25, "chair", color, 0.9))
    slots = tuple(TargetCandidate("bowl", (x, 7.05, BOWL_Z)) for x in (3.1, 3.9, 6.1, 6.9))
    return Scene(ROOM, tuple(obstacles), slots, 0, {}, f"random_chairs-{layout}")


def scene_variants(family) -> list[Scene]:
    """All layouts of a family, each with target 0 active."""
    family = Family(family)
    if family is Family.SIMPLE:
        return [_simple()]
    if family is Family.TWO_WALL:
        return [_two_wall()]
    return [_random_chairs(k) for k in range(len(CHAIR_LAYOUTS))]


def gen_scene(family, seed: int) -> Scene:
    """One scene of ``family``; the seed picks the layout and the active target."""
    rng = np.random.default_rng(seed)
    variants = scene_variants(family)
    scene = variants[int(rng.integers(len(variants)))]
    return scene.with_target(int(rng.integers(len(scene.target_candidates))))


def layout_index(scene: Scene) -> int:
    """Chair layout index of a RANDOM_CHAIRS scene (0 for other families)."""
    _, _, tail = scene.name.partition("-")
    return int(tail) if tail else 0
