import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgnav.scene import (Box, Circle, Pose, RobotFootprint, Scene, SceneError, TargetCandidate, Twist,
                         VelocityLimits, admissible, clearance, collides, load_scene, save_scene, scene_from_dict,
                         scene_to_dict, wrap_angle)
from sgnav.scenes import Family, gen_scene

BOWL = (TargetCandidate("bowl", (1.0, 1.0, 0.7)),)


def room(*obstacles, size=10.0):
    return Scene((0.0, 0.0, size, size), tuple(obstacles), BOWL)


def disc_overlaps_oracle(x, y, r, scene, n=720):
    """Brute force: sample the disc boundary and a few interior rings."""
    xmin, ymin, xmax, ymax = scene.bounds
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        px = x + frac * r * np.cos(ang)
        py = y + frac * r * np.sin(ang)
        if np.any((px < xmin) | (px > xmax) | (py < ymin) | (py > ymax)):
            return True
        for ob in scene.obstacles:
            if isinstance(ob, Box):
                x0, y0, x1, y1 = ob.aabb
                inside = (px > x0) & (px < x1) & (py > y0) & (py < y1)
            else:
                inside = np.hypot(px - ob.center[0], py - ob.center[1]) < ob.radius
            if np.any(inside):
                return True
    return False


def test_wrap_angle_range():
    for a in (-10.0, -math.pi, 0.0, math.pi, 3 * math.pi, 1e-300, -1e-300):
        w = wrap_angle(a)
        assert -math.pi <= w < math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)


def test_pose_normalizes_and_rejects_nan():
    assert Pose(0, 0, math.pi).theta == -math.pi
    with pytest.raises(ValueError):
        Pose(float("nan"), 0.0)


def test_velocity_limits_are_checked_not_clamped_on_the_type():
    lim = VelocityLimits(1.0, 1.5)
    tw = Twist(2.0, -3.0)
    assert not lim.contains(tw)
    assert lim.clamp(tw) == Twist(1.0, -1.5)


def test_footprint_must_be_positive():
    with pytest.raises(ValueError):
        RobotFootprint(0.0)


def test_empty_room_center_is_free():
    s = room()
    assert not collides(Pose(5, 5), RobotFootprint(0.3), s)
    assert admissible(Pose(5, 5), RobotFootprint(0.3), s)


def test_inside_box_collides():
    s = room(Box((5, 5), (1, 1), "table"))
    assert collides(Pose(5, 5), RobotFootprint(0.3), s)


def test_box_face_boundary_eps():
    s = room(Box((5, 5), (1, 1), "table"))
    r, eps = 0.3, 1e-6
    assert not collides(Pose(6 + r + eps, 5), RobotFootprint(r), s)
    assert collides(Pose(6 + r - eps, 5), RobotFootprint(r), s)
    # corner region: distance to the corner point
    d = (r + eps) / math.sqrt(2)
    assert not collides(Pose(6 + d, 6 + d), RobotFootprint(r), s)


def test_outside_bounds_not_admissible():
    s = room()
    assert not admissible(Pose(-1, 5), RobotFootprint(0.3), s)
    assert collides(Pose(0.1, 5), RobotFootprint(0.3), s)


def test_wall_graze_is_strict():
    s = room()
    assert admissible(Pose(0.3, 5), RobotFootprint(0.3), s)
    assert not admissible(Pose(0.3 - 1e-9, 5), RobotFootprint(0.3), s)


def test_scene_validation():
    with pytest.raises(SceneError):
        Scene((0, 0, 1, 1), (), BOWL, active_target=3)
    with pytest.raises(SceneError):
        Scene((0, 0, 5, 5), (Box((4.8, 2), (0.5, 0.5), "table"),), BOWL)
    with pytest.raises(SceneError):
        Scene((0, 0, 5, 5), (Circle((2, 2), 0.3, ""),), BOWL)


obstacle = st.one_of(
    st.builds(lambda x, y, hx, hy: Box((x, y), (hx, hy), "box"),
              st.floats(2, 8), st.floats(2, 8), st.floats(0.1, 1.5), st.floats(0.1, 1.5)),
    st.builds(lambda x, y, r: Circle((x, y), r, "pole"),
              st.floats(2, 8), st.floats(2, 8), st.floats(0.05, 1.0)),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(obstacle, max_size=3), st.floats(0.0, 10.0), st.floats(0.0, 10.0),
       st.floats(0.05, 0.8), st.floats(0.0, 0.5))
def test_collides_monotone_in_radius(obs, x, y, r1, dr):
    s = room(*obs)
    if collides(Pose(x, y), RobotFootprint(r1), s):
        assert collides(Pose(x, y), RobotFootprint(r1 + dr), s)


@settings(max_examples=60, deadline=None)
@given(st.lists(obstacle, max_size=3), st.floats(-1.0, 11.0), st.floats(-1.0, 11.0), st.floats(0.05, 0.8))
def test_admissible_implies_no_collision(obs, x, y, r):
    s = room(*obs)
    if admissible(Pose(x, y), RobotFootprint(r), s):
        assert not collides(Pose(x, y), RobotFootprint(r), s)


def test_collides_matches_sampling_oracle():
    rng = np.random.default_rng(7)
    fam = [gen_scene(f, k) for f in Family for k in range(3)]
    disagreements = 0
    band = 1e-6 + 0.3 * (1 - math.cos(math.pi / 720))  # chord sag of the sampled boundary
    for i in range(1000):
        s = fam[i % len(fam)]
        x, y = rng.uniform(0, 10), rng.uniform(0, 8)
        r = 0.3
        got = collides(Pose(x, y), RobotFootprint(r), s)
        want = disc_overlaps_oracle(x, y, r, s)
        if got != want:
            # only allowed inside the tolerance band around the boundary
            xmin, ymin, xmax, ymax = s.bounds
            margin = min(clearance(x, y, s), x - xmin, xmax - x, y - ymin, ymax - y)
            if abs(margin - r) > band:
                disagreements += 1
    assert disagreements == 0


def test_scene_file_round_trip(tmp_path):
    s = gen_scene(Family.TWO_WALL, 3)
    p = tmp_path / "scene.yaml"
    save_scene(s, p)
    assert load_scene(p) == s
    assert "version: 1" in p.read_text()


def test_scene_file_requires_version():
    d = scene_to_dict(room())
    del d["version"]
    with pytest.raises(SceneError):
        scene_from_dict(d)
    d["version"] = 99
    with pytest.raises(SceneError):
        scene_from_dict(d)


def test_geometry_hash_ignores_active_target():
    s = gen_scene(Family.SIMPLE, 0)
    assert s.with_target(0).geometry_hash() == s.with_target(3).geometry_hash()
    assert s.geometry_hash() != room().geometry_hash()
