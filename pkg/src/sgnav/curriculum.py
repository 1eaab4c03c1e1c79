"""Difficulty ladder over (start distance R, heading offset phi)."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

from .env import Mode


@dataclass(frozen=True)
class CurriculumConfig:
    R_min: float = 0.5
    R_max: float = 3.0
    delta_R: float = 0.5
    phi_max: float = math.pi
    delta_phi: float = math.pi / 8
    window: int = 30
    threshold: float = 0.85


@dataclass(frozen=True)
class DifficultyLevel:
    level_index: int
    R: float
    phi: float


def start_level(config: CurriculumConfig = CurriculumConfig()) -> DifficultyLevel:
    return DifficultyLevel(0, config.R_min, 0.0)


@dataclass
class CurriculumState:
    """Success window over policy episodes plus the level history.

    Expert (CONTROL) episodes never enter the window.
    """

    config: CurriculumConfig = field(default_factory=CurriculumConfig)
    current: DifficultyLevel = None
    window: deque = None
    history: list = field(default_factory=list)  # (episode, level) at every advancement
    episodes: int = 0

    def __post_init__(self):
        if self.current is None:
            self.current = start_level(self.config)
        if self.window is None:
            self.window = deque(maxlen=self.config.window)
        if not self.history:
            self.history.append((0, self.current))

    @property
    def success_rate(self) -> float:
        return sum(self.window) / len(self.window) if self.window else 0.0

    @property
    def complete(self) -> bool:
        c, cfg = self.current, self.config
        return c.phi >= cfg.phi_max and c.R >= cfg.R_max

    def record_outcome(self, success: bool, mode: Mode = Mode.POLICY) -> "CurriculumState":
        self.episodes += 1
        if Mode(mode) is Mode.POLICY:
            self.window.append(bool(success))
        return self

    def maybe_advance(self) -> bool:
        cfg = self.config
        if len(self.window) < cfg.window or not self.success_rate > cfg.threshold:
            return False
        if self.complete:
            return False
        c = self.current
        if c.phi < cfg.phi_max:
            R, phi = c.R, c.phi + cfg.delta_phi
            if phi > cfg.phi_max - 1e-9:
                phi = cfg.phi_max  # absorb rounding of repeated increments
        else:
            R, phi = min(c.R + cfg.delta_R, cfg.R_max), 0.0
        self.current = DifficultyLevel(c.level_index + 1, R, phi)
        self.window.clear()
        self.history.append((self.episodes, self.current))
        return True


def write_history(state: CurriculumState, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "level_index", "R", "phi"])
        for ep, lvl in state.history:
            w.writerow([ep, lvl.level_index, repr(lvl.R), repr(lvl.phi)])
