"""Training orchestration, evaluation sweeps and metric files.

A training run alternates between policy episodes (the SAC actor drives) and
control episodes (the Dijkstra + Pure Pursuit expert drives).  Both feed the
same replay buffer; only policy episodes count toward the curriculum.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .curriculum import CurriculumConfig, CurriculumState, write_history
from .env import Ablation, EnvConfig, InitExhausted, Mode, NavEnv, angle_error, distance_error
from .planner import PurePursuitConfig, build_path_table, lookahead_point, pure_pursuit_step
from .sac import NaNDetected, ReplayBuffer, SAC, SACConfig, load_checkpoint, sac_update, save_checkpoint
from .scene import RobotFootprint, Scene, Twist, clearance, load_scene, wrap_angle
from .scenes import Family, scene_variants

log = logging.getLogger(__name__)

METRICS_ENV_VAR = "SGNAV_METRICS_DIR"


class ConfigError(ValueError):
    pass


class EmptyBucket(ValueError):
    pass


class IoFailure(OSError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    resolution: float = 0.25
    planning_margin: float = 0.15  # extra clearance of the planning grid over the robot radius
    connect_radius: float = 1.5
    align_angle: float = math.pi / 4  # expert turns on the spot beyond this bearing to the lookahead point
    pursuit: PurePursuitConfig = PurePursuitConfig()


@dataclass(frozen=True)
class RunConfig:
    scene: str = "two_wall"          # family name or path to a scene file
    ablation: Ablation = Ablation.SCENE_POOLED
    control_fraction: float = 0.3
    total_steps: int = 50_000
    seed: int = 0
    env: EnvConfig = EnvConfig()
    sac: SACConfig = SACConfig()
    curriculum: CurriculumConfig = CurriculumConfig()
    planner: PlannerConfig = PlannerConfig()
    shrink_graph_slot: bool = False  # NO_GRAPH only: drop the zero graph slot from the input
    loss_log_every: int = 250
    checkpoint_every: int = 0        # env steps; 0 keeps only the final checkpoint

    def __post_init__(self):
        object.__setattr__(self, "ablation", Ablation(self.ablation))
        if not 0.0 <= self.control_fraction < 1.0:
            raise ConfigError("control_fraction must be in [0, 1)")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be non-negative")


def _build(cls, d):
    """Recursively build a (frozen) dataclass from a plain mapping."""
    if not dataclasses.is_dataclass(cls) or not isinstance(d, dict):
        return d
    kwargs = {}
    hints = {f.name: f for f in dataclasses.fields(cls)}
    for k, v in d.items():
        if k not in hints:
            raise ConfigError(f"unknown {cls.__name__} field {k!r}")
        default = getattr(cls(), k) if k in hints else None
        if dataclasses.is_dataclass(default) and isinstance(v, dict):
            v = _build(type(default), v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def run_config_from_dict(d: dict) -> RunConfig:
    return _build(RunConfig, dict(d or {}))


def run_config_to_dict(cfg: RunConfig) -> dict:
    def conv(x):
        if dataclasses.is_dataclass(x):
            return {f.name: conv(getattr(x, f.name)) for f in dataclasses.fields(x)}
        if isinstance(x, Ablation):
            return x.value
        return x
    return conv(cfg)


def load_run_config(path) -> RunConfig:
    try:
        d = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read run config {path}: {e}") from None
    return run_config_from_dict(d)


def resolve_scenes(name: str) -> list[Scene]:
    try:
        return scene_variants(Family(name))
    except ValueError:
        pass
    if not Path(name).exists():
        raise ConfigError(f"{name!r} is neither a scene family nor a scene file")
    return [load_scene(name)]


def metrics_dir(default="runs") -> Path:
    return Path(os.environ.get(METRICS_ENV_VAR, default))


# ---------------------------------------------------------------- policies


def choose_mode(rng: np.random.Generator, fraction: float) -> Mode:
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    return Mode.CONTROL if rng.random() < fraction else Mode.POLICY


class ExpertPolicy:
    """The control module: follow the stored path, then turn to face the target.

    Paths come from a grid planned with extra clearance; a start pose that the
    inflated grid cannot connect falls back to a table planned with the bare
    footprint.  The lookahead distance is shortened while the straight line to
    the lookahead point is not clear, so pursuit never cuts into an obstacle.
    Once within the distance threshold the expert only rotates.
    """

    def __init__(self, tables: dict, config: PlannerConfig = PlannerConfig(),
                 env_config: EnvConfig = EnvConfig(), fallback_tables: dict | None = None):
        self.tables = tables
        self.fallback_tables = fallback_tables or {}
        self.config = config
        self.env_config = env_config
        self.path = None

    @classmethod
    def for_scenes(cls, scenes, config: PlannerConfig = PlannerConfig(), env_config: EnvConfig = EnvConfig(),
                   cache_dir=None) -> "ExpertPolicy":
        r = env_config.footprint.radius
        tables, fallback = {}, {}
        for i, s in enumerate(scenes):
            tables[i] = build_path_table(s, RobotFootprint(r + config.planning_margin), config.resolution,
                                         config.connect_radius, cache_dir)
            if config.planning_margin > 0:
                fallback[i] = build_path_table(s, RobotFootprint(r), config.resolution,
                                               config.connect_radius, cache_dir)
        return cls(tables, config, env_config, fallback)

    def begin(self, env: NavEnv) -> None:
        pose, k, t = env.state.pose, env.scene_index, env.scene.active_target
        self.path = self.tables[k].path_for(pose, t)
        if self.path is None and k in self.fallback_tables:
            self.path = self.fallback_tables[k].path_for(pose, t)

    def _turn(self, err: float) -> Twist:
        ecfg = self.env_config
        return Twist(0.0, math.copysign(min(ecfg.limits.w_max, abs(err) / ecfg.dt), err))

    def _clear(self, pose, point, scene) -> bool:
        r = self.env_config.footprint.radius + 0.05
        n = max(int(math.hypot(point[0] - pose.x, point[1] - pose.y) / 0.05), 1)
        for s in np.linspace(0.0, 1.0, n + 1)[1:]:
            x = pose.x + s * (point[0] - pose.x)
            y = pose.y + s * (point[1] - pose.y)
            if clearance(x, y, scene) < r:
                return False
        return True

    def twist(self, env: NavEnv) -> Twist:
        pose, scene, ecfg = env.state.pose, env.scene, self.env_config
        pp = self.config.pursuit
        arrived = self.path is None or math.hypot(self.path[-1][0] - pose.x,
                                                  self.path[-1][1] - pose.y) <= pp.arrival_tolerance
        if arrived or distance_error(pose, scene) <= ecfg.dist_threshold - 0.05:
            return self._turn(angle_error(pose, scene))
        while True:
            point = lookahead_point(pose, self.path, pp)
            if pp.lookahead <= pp.sample_spacing or self._clear(pose, point, scene):
                break
            pp = replace(pp, lookahead=pp.lookahead / 2.0)
        err = wrap_angle(math.atan2(point[1] - pose.y, point[0] - pose.x) - pose.theta)
        if abs(err) > self.config.align_angle:
            return self._turn(err)
        return pure_pursuit_step(pose, self.path, pp)

    def __call__(self, env: NavEnv, obs) -> np.ndarray:
        return env.twist_to_action(self.twist(env))


class AgentPolicy:
    def __init__(self, agent: SAC, deterministic: bool = True, rng=None, obs_slice=None):
        self.agent, self.deterministic, self.rng = agent, deterministic, rng
        self.obs_slice = obs_slice

    def begin(self, env):
        pass

    def __call__(self, env, obs):
        if self.obs_slice is not None:
            obs = obs[self.obs_slice]
        return self.agent.act(obs, self.deterministic, self.rng)


class RandomPolicy:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def begin(self, env):
        pass

    def __call__(self, env, obs):
        return self.rng.uniform(-1.0, 1.0, 2)


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    agent: SAC
    curriculum: CurriculumState
    episodes: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    checkpoint: Optional[Path] = None
    out_dir: Optional[Path] = None

    @property
    def metrics(self) -> dict:
        return {"episodes": self.episodes, "losses": self.losses, "history": self.curriculum.history}


EPISODE_FIELDS = ["episode", "mode", "level_index", "R", "phi", "success", "collision", "length", "return", "steps"]
LOSS_FIELDS = ["update", "step", "critic_loss", "actor_loss", "alpha_loss", "alpha", "entropy"]


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def obs_slice_for(config: RunConfig):
    if config.shrink_graph_slot and config.ablation is Ablation.NO_GRAPH:
        e = config.env
        return slice(0, 2 + e.embed_dim + e.n_rays)
    return None


def run_training(config: RunConfig, out_dir=None, cache_dir=None) -> TrainResult:
    """Run one training job; writes CSVs and a checkpoint when ``out_dir`` is given."""
    scenes = resolve_scenes(config.scene)
    ss = np.random.SeedSequence(config.seed)
    env_rng, mode_rng, act_rng, upd_rng = (np.random.default_rng(s) for s in ss.spawn(4))
    env = NavEnv(scenes, config.env, config.ablation)
    sl = obs_slice_for(config)
    obs_dim = env.obs_dim if sl is None else sl.stop
    agent = SAC(obs_dim, 2, config.sac, seed=config.seed)
    buffer = ReplayBuffer(config.sac.buffer_capacity, obs_dim)
    curriculum = CurriculumState(config.curriculum)
    result = TrainResult(agent, curriculum)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        result.out_dir = out

    expert = None
    if config.control_fraction > 0 and config.total_steps > 0:
        expert = ExpertPolicy.for_scenes(scenes, config.planner, config.env, cache_dir)

    sc = config.sac
    steps = 0
    episode = 0
    while steps < config.total_steps:
        lvl = curriculum.current
        mode = choose_mode(mode_rng, config.control_fraction)
        try:
            obs = env.reset(env_rng, lvl.R, lvl.phi, mode)
        except InitExhausted as e:
            raise InitExhausted(f"episode {episode} at level {lvl}: {e}") from e
        if sl is not None:
            obs = obs[sl]
        if mode is Mode.CONTROL:
            expert.begin(env)
        ep_ret, length = 0.0, 0
        res = None
        while True:
            if mode is Mode.CONTROL:
                action = expert(env, obs)
            elif steps < sc.learning_starts:
                action = act_rng.uniform(-1.0, 1.0, 2)
            else:
                action = agent.act(obs, False, act_rng)
            res = env.step(action)
            nobs = res.observation if sl is None else res.observation[sl]
            done = res.terminated or (res.truncated and not sc.bootstrap_on_timeout)
            buffer.push(obs, action, res.reward, nobs, done)
            steps += 1
            length += 1
            ep_ret += res.reward
            obs = nobs
            if steps >= sc.learning_starts and steps % sc.train_freq == 0:
                try:
                    losses = sac_update(agent, buffer.sample(sc.batch_size, upd_rng), upd_rng)
                except NaNDetected as e:
                    raise NaNDetected(f"step {steps}, episode {episode}: {e}") from e
                if agent.updates % config.loss_log_every == 0:
                    result.losses.append({"update": agent.updates, "step": steps, **losses})
            if out is not None and config.checkpoint_every and steps % config.checkpoint_every == 0:
                save_checkpoint(agent, out / f"checkpoint_{steps}.npz", upd_rng)
            if res.terminated or res.truncated or steps >= config.total_steps:
                break
        finished = res.terminated or res.truncated
        if finished:
            curriculum.record_outcome(res.info["success"], mode)
            curriculum.maybe_advance()
        result.episodes.append({
            "episode": episode, "mode": mode.value, "level_index": lvl.level_index, "R": lvl.R,
            "phi": lvl.phi, "success": int(res.info["success"]), "collision": int(res.info["collision"]),
            "length": length, "return": ep_ret, "steps": steps})
        episode += 1

    if out is not None:
        result.checkpoint = out / "checkpoint.npz"
        save_checkpoint(agent, result.checkpoint, upd_rng, {"run_config": run_config_to_dict(config)})
        write_history(curriculum, out / "difficulty.csv")
        _write_csv(out / "episodes.csv", EPISODE_FIELDS, result.episodes)
        _write_csv(out / "losses.csv", LOSS_FIELDS, result.losses)
    return result


# ---------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    distances: list
    success_rates: list
    counts: list
    mean_lengths: list
    collision_rates: list = field(default_factory=list)

    def rate(self, distance: float) -> float:
        return self.success_rates[self.distances.index(distance)]

    def rows(self):
        for i, d in enumerate(self.distances):
            yield {"distance": d, "success_rate": self.success_rates[i], "episodes": self.counts[i],
                   "mean_length": self.mean_lengths[i],
                   "collision_rate": self.collision_rates[i] if self.collision_rates else ""}


EVAL_FIELDS = ["distance", "success_rate", "episodes", "mean_length", "collision_rate"]


def _as_policy(policy, env_config: EnvConfig):
    if isinstance(policy, (str, os.PathLike)):
        agent, _, _ = load_checkpoint(policy)
        return AgentPolicy(agent, True)
    if isinstance(policy, SAC):
        return AgentPolicy(policy, True)
    return policy


def run_episode(env: NavEnv, policy, rng, R: float, phi: float, mode: Mode = Mode.POLICY):
    """Roll out one episode; returns (success, collision, length)."""
    obs = env.reset(rng, R, phi, mode)
    policy.begin(env)
    while True:
        res = env.step(policy(env, obs))
        obs = res.observation
        if res.terminated or res.truncated:
            return res.info["success"], res.info["collision"], env.state.step_count


def run_eval_sweep(policy, scenes, distances, episodes_per_bucket: int, seed: int = 0,
                   env_config: EnvConfig = EnvConfig(), ablation=Ablation.SCENE_POOLED) -> EvalReport:
    """Success rate per initial distance with phi ~ U[0, pi]; deterministic given ``seed``.

    ``policy`` is a checkpoint path, a :class:`SAC` agent (acting
    deterministically) or any object with ``begin(env)`` and ``__call__(env, obs)``.
    """
    if episodes_per_bucket < 1:
        raise EmptyBucket("episodes_per_bucket must be at least 1")
    if isinstance(scenes, (str, os.PathLike)):
        scenes = resolve_scenes(str(scenes))
    if any(not 0.0 <= d <= 3.0 for d in distances):
        raise ValueError("distances must lie in [0, 3]")
    pol = _as_policy(policy, env_config)
    env = NavEnv(scenes, env_config, ablation)
    report = EvalReport(list(distances), [], [], [], [])
    for b, R in enumerate(distances):
        wins = crashes = total_len = 0
        for ep in range(episodes_per_bucket):
            rng = np.random.default_rng([seed, b, ep])
            phi = rng.uniform(0.0, math.pi)
            ok, crash, n = run_episode(env, pol, rng, R, phi)
            wins += ok
            crashes += crash
            total_len += n
        report.success_rates.append(wins / episodes_per_bucket)
        report.collision_rates.append(crashes / episodes_per_bucket)
        report.counts.append(episodes_per_bucket)
        report.mean_lengths.append(total_len / episodes_per_bucket)
    return report


def write_eval_csv(report: EvalReport, path) -> None:
    _write_csv(path, EVAL_FIELDS, list(report.rows()))


def read_eval_csv(path) -> EvalReport:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return EvalReport([float(r["distance"]) for r in rows], [float(r["success_rate"]) for r in rows],
                      [int(r["episodes"]) for r in rows], [float(r["mean_length"]) for r in rows],
                      [float(r["collision_rate"]) for r in rows if r.get("collision_rate") not in (None, "")])


def read_history_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"episode": int(r["episode"]), "level_index": int(r["level_index"]),
                 "R": float(r["R"]), "phi": float(r["phi"])} for r in csv.DictReader(fh)]


def write_history_rows(rows, path) -> None:
    _write_csv(path, ["episode", "level_index", "R", "phi"], rows)


# ---------------------------------------------------------------- plots


def emit_plots(metrics: dict, out_dir) -> list[Path]:
    """Write difficulty-vs-episode and success-vs-distance SVGs plus their CSVs.

    ``metrics`` may hold ``history`` (list of (episode, level) pairs or row
    dicts) and/or ``eval`` (an :class:`EvalReport` or a mapping of label to report).
    """
    if not metrics or not any(metrics.get(k) for k in ("history", "eval")):
        raise ValueError("no metrics to plot")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        history = metrics.get("history")
        if history:
            rows = [h if isinstance(h, dict) else
                    {"episode": h[0], "level_index": h[1].level_index, "R": h[1].R, "phi": h[1].phi}
                    for h in history]
            write_history_rows(rows, out / "difficulty.csv")
            fig, ax = plt.subplots(figsize=(6, 3.5))
            eps = [r["episode"] for r in rows]
            ax.step(eps, [r["level_index"] for r in rows], where="post", label="level")
            ax.set_xlabel("episode")
            ax.set_ylabel("difficulty level")
            ax2 = ax.twinx()
            ax2.step(eps, [r["R"] for r in rows], where="post", color="tab:orange", label="R (m)")
            ax2.set_ylabel("R (m)")
            fig.tight_layout()
            fig.savefig(out / "difficulty.svg")
            plt.close(fig)
            written += [out / "difficulty.csv", out / "difficulty.svg"]
        reports = metrics.get("eval")
        if reports:
            if isinstance(reports, EvalReport):
                reports = {"policy": reports}
            fig, ax = plt.subplots(figsize=(6, 3.5))
            for label, rep in reports.items():
                write_eval_csv(rep, out / f"success_{label}.csv")
                written.append(out / f"success_{label}.csv")
                ax.plot(rep.distances, rep.success_rates, marker="o", label=label)
            ax.set_xlabel("initial distance error (m)")
            ax.set_ylabel("success rate")
            ax.set_ylim(-0.02, 1.02)
            ax.legend()
            fig.tight_layout()
            fig.savefig(out / "success_vs_distance.svg")
            plt.close(fig)
            written.append(out / "success_vs_distance.svg")
    except OSError as e:
        raise IoFailure(f"cannot write plots to {out}: {e}") from e
    return written


# ---------------------------------------------------------------- ablation studies

SMOKE_STEPS = 30_000


def smoke_config(scene: str, ablation, seed: int, total_steps: int = SMOKE_STEPS, **overrides) -> RunConfig:
    """The pinned desk-scale budget used for ablation comparisons.

    Compared with the defaults the heading ladder climbs in two steps per
    distance (pi/2 instead of pi/8) and all learning rates are 1e-3, so a
    30k-step run gets through most of the curriculum.
    """
    return RunConfig(scene=scene, ablation=Ablation(ablation), seed=seed, total_steps=total_steps,
                     sac=SACConfig(actor_lr=1e-3, critic_lr=1e-3, alpha_lr=1e-3),
                     curriculum=CurriculumConfig(delta_phi=math.pi / 2), **overrides)


@dataclass
class AblationStudy:
    distances: list
    reports: dict  # ablation value -> list of EvalReport, one per seed

    def mean_rate(self, ablation, distance: float) -> float:
        reps = self.reports[Ablation(ablation).value]
        return float(np.mean([r.rate(distance) for r in reps]))

    def gap(self, better, worse, distances=None) -> float:
        """Mean success-rate difference (better - worse) over ``distances``."""
        ds = self.distances if distances is None else distances
        return float(np.mean([self.mean_rate(better, d) - self.mean_rate(worse, d) for d in ds]))


def compare_ablations(scene: str, ablations, seeds, distances, episodes_per_bucket: int = 200,
                      total_steps: int = SMOKE_STEPS, out_dir=None, cache_dir=None,
                      eval_seed: int = 10_000) -> AblationStudy:
    """Train each (ablation, seed) pair on the smoke budget and evaluate it on ``distances``."""
    reports = {}
    for abl in ablations:
        abl = Ablation(abl)
        reports[abl.value] = []
        for seed in seeds:
            cfg = smoke_config(scene, abl, seed, total_steps)
            run_dir = None if out_dir is None else Path(out_dir) / f"{scene}-{abl.value}-seed{seed}"
            res = run_training(cfg, run_dir, cache_dir)
            rep = run_eval_sweep(res.agent, scene, distances, episodes_per_bucket, eval_seed + seed,
                                 cfg.env, abl)
            if run_dir is not None:
                write_eval_csv(rep, run_dir / "eval.csv")
            log.info("%s %s seed %d: %s", scene, abl.value, seed, rep.success_rates)
            reports[abl.value].append(rep)
    return AblationStudy(list(distances), reports)
