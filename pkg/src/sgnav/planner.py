"""Expert control module: admissible grid, Dijkstra path tables, Pure Pursuit.

Paths are computed once per scene geometry from every admissible grid cell to
every target candidate, simplified, and then tracked with Pure Pursuit.
"""

from __future__ import annotations

import heapq
import math
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scene import Pose, RobotFootprint, Scene, Twist, VelocityLimits, admissible

SQRT2 = math.sqrt(2.0)
PATH_CACHE_VERSION = 1

# (drow, dcol) for the 8-connected neighbourhood; orthogonal moves first
NEIGHBOURS = ((0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


class PlannerError(RuntimeError):
    pass


class EmptyGrid(PlannerError):
    pass


class NoTargetCell(PlannerError):
    pass


Cell = tuple[int, int]


@dataclass(frozen=True)
class GridMap:
    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray = field(repr=False)  # bool, shape (rows, cols); rows run along +y

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def center(self, cell: Cell) -> tuple[float, float]:
        r, c = cell
        return (self.origin[0] + (c + 0.5) * self.resolution,
                self.origin[1] + (r + 0.5) * self.resolution)

    def is_free(self, cell: Cell) -> bool:
        r, c = cell
        rows, cols = self.cells.shape
        return 0 <= r < rows and 0 <= c < cols and bool(self.cells[r, c])

    def free_cells(self) -> np.ndarray:
        """Admissible cells as an (n, 2) array in row-major order."""
        return np.argwhere(self.cells)

    def neighbours(self, cell: Cell):
        """Yield (neighbour, is_diagonal). Diagonals may not cut a blocked corner."""
        r, c = cell
        for dr, dc in NEIGHBOURS:
            nb = (r + dr, c + dc)
            if not self.is_free(nb):
                continue
            diag = dr != 0 and dc != 0
            if diag and not (self.is_free((r + dr, c)) and self.is_free((r, c + dc))):
                continue
            yield nb, diag


def build_grid(scene: Scene, footprint: RobotFootprint, resolution: float) -> GridMap:
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    xmin, ymin, xmax, ymax = scene.bounds
    cols = int(math.floor((xmax - xmin) / resolution + 1e-9))
    rows = int(math.floor((ymax - ymin) / resolution + 1e-9))
    cells = np.zeros((rows, cols), dtype=bool)
    grid = GridMap(resolution, (xmin, ymin), cells)
    for r in range(rows):
        for c in range(cols):
            x, y = grid.center((r, c))
            cells[r, c] = admissible(Pose(x, y), footprint, scene)
    if not cells.any():
        raise EmptyGrid(f"no admissible cell at resolution {resolution}")
    return grid


def nearest_grid_point(pose, grid: GridMap) -> Cell:
    """Admissible cell closest to ``pose`` (a Pose or an (x, y) pair).

    Ties go to the lowest (row, col).
    """
    x, y = (pose.x, pose.y) if isinstance(pose, Pose) else (float(pose[0]), float(pose[1]))
    free = grid.free_cells()
    cx = grid.origin[0] + (free[:, 1] + 0.5) * grid.resolution
    cy = grid.origin[1] + (free[:, 0] + 0.5) * grid.resolution
    d2 = (cx - x) ** 2 + (cy - y) ** 2
    k = int(np.argmin(d2))
    return (int(free[k, 0]), int(free[k, 1]))


def _is_straight_or_diagonal(dx: float, dy: float, tol: float) -> bool:
    ax, ay = abs(dx), abs(dy)
    return ax <= tol or ay <= tol or abs(ax - ay) <= tol


def simplify_path(waypoints) -> np.ndarray:
    """Drop interior points lying on a straight or 45-degree run between their neighbours."""
    pts = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if len(pts) <= 2:
        return pts.copy()
    keep = [0]
    for i in range(1, len(pts) - 1):
        d1 = pts[i] - pts[i - 1]
        d2 = pts[i + 1] - pts[i]
        n1, n2 = math.hypot(*d1), math.hypot(*d2)
        tol = 1e-9 * max(n1, n2, 1.0)
        if n1 <= tol:
            continue  # duplicate point
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        same_dir = abs(cross) <= tol * max(n1 * n2, 1.0) and float(d1 @ d2) > 0
        if same_dir and _is_straight_or_diagonal(d1[0], d1[1], tol):
            continue
        keep.append(i)
    keep.append(len(pts) - 1)
    return pts[keep]


@dataclass
class PathEntry:
    waypoints: np.ndarray  # simplified, metres
    cost: float            # metres along the unsimplified grid path
    n_orth: int
    n_diag: int


@dataclass
class PathTable:
    grid: GridMap
    targets: list                 # target (x, y) positions
    target_cells: list            # connected terminal cell per target
    entries: dict = field(repr=False)  # (cell, target index) -> PathEntry
    key: str = ""

    def get(self, cell: Cell, target: int):
        entry = self.entries.get((tuple(cell), target))
        return None if entry is None else entry.waypoints

    def cost(self, cell: Cell, target: int):
        entry = self.entries.get((tuple(cell), target))
        return None if entry is None else entry.cost

    def path_for(self, pose, target: int):
        """Stored path from the grid point nearest to ``pose``, or None if unreachable."""
        return self.get(nearest_grid_point(pose, self.grid), target)


def connect_target(grid: GridMap, target_xy, radius: float = 1.5) -> Cell:
    cell = nearest_grid_point(target_xy, grid)
    cx, cy = grid.center(cell)
    if math.hypot(cx - target_xy[0], cy - target_xy[1]) > radius:
        raise NoTargetCell(f"no admissible cell within {radius} m of target {tuple(target_xy)}")
    return cell


def dijkstra_from(grid: GridMap, source: Cell):
    """Single-source Dijkstra in cell units.

    Returns ``(dist, parent, counts)`` dicts; ``parent`` points one hop back
    toward ``source`` and ``counts`` holds (orthogonal, diagonal) move counts.
    """
    dist = {source: 0.0}
    parent = {source: None}
    counts = {source: (0, 0)}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, diag in grid.neighbours(u):
            nd = d + (SQRT2 if diag else 1.0)
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                parent[v] = u
                o, g = counts[u]
                counts[v] = (o, g + 1) if diag else (o + 1, g)
                heapq.heappush(heap, (nd, v))
    return dist, parent, counts


def dijkstra_all(grid: GridMap, targets, connect_radius: float = 1.5) -> PathTable:
    """Shortest simplified paths from every admissible cell to each target.

    Unreachable (cell, target) pairs are simply absent from the table.
    """
    if not grid.cells.any():
        raise EmptyGrid("grid has no admissible cell")
    targets = [(float(t[0]), float(t[1])) for t in targets]
    target_cells = [connect_target(grid, t, connect_radius) for t in targets]
    entries = {}
    res = grid.resolution
    for k, tcell in enumerate(target_cells):
        _, parent, counts = dijkstra_from(grid, tcell)
        for cell in parent:
            chain = [cell]
            while parent[chain[-1]] is not None:
                chain.append(parent[chain[-1]])
            pts = np.array([grid.center(c) for c in chain])
            o, g = counts[cell]
            entries[(cell, k)] = PathEntry(simplify_path(pts), res * (o + g * SQRT2), o, g)
    return PathTable(grid, targets, target_cells, entries)


def path_table_key(scene: Scene, footprint: RobotFootprint, resolution: float,
                   connect_radius: float = 1.5) -> str:
    return f"{scene.geometry_hash()}:{footprint.radius!r}:{resolution!r}:{connect_radius!r}"


def save_path_table(table: PathTable, path) -> None:
    with open(path, "wb") as fh:
        pickle.dump({"version": PATH_CACHE_VERSION, "key": table.key, "table": table}, fh,
                    protocol=pickle.HIGHEST_PROTOCOL)


def load_path_table(path, key: str):
    """Cached table for ``key``, or None if the file is missing or stale."""
    p = Path(path)
    if not p.exists():
        return None
    try:
        with open(p, "rb") as fh:
            blob = pickle.load(fh)
    except (pickle.UnpicklingError, EOFError, AttributeError):
        return None
    if blob.get("version") != PATH_CACHE_VERSION or blob.get("key") != key:
        return None
    return blob["table"]


def build_path_table(scene: Scene, footprint: RobotFootprint, resolution: float = 0.25,
                     connect_radius: float = 1.5, cache_dir=None) -> PathTable:
    """Grid + Dijkstra tables for all target candidates of ``scene``, optionally cached on disk."""
    key = path_table_key(scene, footprint, resolution, connect_radius)
    cache_file = None
    if cache_dir is not None:
        import hashlib
        cache_file = Path(cache_dir) / f"paths_{hashlib.sha256(key.encode()).hexdigest()[:16]}.pkl"
        table = load_path_table(cache_file, key)
        if table is not None:
            return table
    grid = build_grid(scene, footprint, resolution)
    table = dijkstra_all(grid, [t.position[:2] for t in scene.target_candidates], connect_radius)
    table.key = key
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        save_path_table(table, cache_file)
    return table


# ---------------------------------------------------------------- Pure Pursuit


@dataclass(frozen=True)
class PurePursuitConfig:
    lookahead: float = 0.6
    cruise_speed: float = 0.5
    arrival_tolerance: float = 0.1
    sample_spacing: float = 0.05
    turn_in_place: bool = True   # rotate on the spot when the lookahead point is behind
    limits: VelocityLimits = VelocityLimits()

    def __post_init__(self):
        if not (self.lookahead > 0 and self.cruise_speed > 0 and self.arrival_tolerance > 0
                and self.sample_spacing > 0):
            raise ValueError("pure pursuit parameters must be positive")


def densify(path, spacing: float) -> np.ndarray:
    pts = np.asarray(path, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return pts
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(math.ceil(math.hypot(*(b - a)) / spacing)), 1)
        t = np.arange(1, n + 1)[:, None] / n
        out.append(a + t * (b - a))
    return np.vstack(out)


def lookahead_point(pose: Pose, path, config: PurePursuitConfig) -> np.ndarray:
    pts = densify(path, config.sample_spacing)
    d = np.hypot(pts[:, 0] - pose.x, pts[:, 1] - pose.y)
    i0 = int(np.argmin(d))
    ahead = np.nonzero(d[i0:] >= config.lookahead)[0]
    return pts[i0 + ahead[0]] if len(ahead) else pts[-1]


def pure_pursuit_step(pose: Pose, path, config: PurePursuitConfig = PurePursuitConfig()) -> Twist:
    pts = np.asarray(path, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("empty path")
    end = pts[-1]
    if math.hypot(end[0] - pose.x, end[1] - pose.y) <= config.arrival_tolerance:
        return Twist(0.0, 0.0)
    gx, gy = lookahead_point(pose, pts, config)
    dx, dy = gx - pose.x, gy - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    x_l = c * dx + s * dy
    y_l = -s * dx + c * dy
    if config.turn_in_place and x_l < 0:
        return Twist(0.0, math.copysign(config.limits.w_max, y_l))
    L2 = x_l * x_l + y_l * y_l
    kappa = 2.0 * y_l / L2
    v = config.cruise_speed
    return config.limits.clamp(Twist(v, v * kappa))
