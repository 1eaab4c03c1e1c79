"""Command line entry point: ``sgnav {train,eval,gen-scene,plot,gradcheck}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Outputs default to the directory named by ``SGNAV_METRICS_DIR`` (else ``./runs``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .env import Ablation, EnvConfig, InitExhausted
from .harness import (ConfigError, EmptyBucket, ExpertPolicy, IoFailure, RandomPolicy, RunConfig,
                      emit_plots, load_run_config, metrics_dir, read_eval_csv, read_history_csv,
                      resolve_scenes, run_config_from_dict, run_config_to_dict, run_eval_sweep,
                      run_training, write_eval_csv)
from .sac import Batch, NaNDetected, SAC, SACConfig, gradient_check, load_checkpoint
from .scene import save_scene
from .scenes import Family, gen_scene

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
GRADCHECK_TOL = 1e-4

log = logging.getLogger("sgnav")


def _parse_value(text: str):
    return yaml.safe_load(text)


def _apply_overrides(d: dict, pairs) -> dict:
    """Apply ``dotted.key=value`` overrides to a nested config mapping."""
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {pair!r} is not key=value")
        node = d
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key!r}: {p!r} is not a section")
        node[leaf] = _parse_value(value)
    return d


def _run_config(args) -> RunConfig:
    d = run_config_to_dict(load_run_config(args.config)) if args.config else {}
    for name in ("scene", "ablation", "seed", "total_steps", "control_fraction"):
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    return run_config_from_dict(_apply_overrides(d, args.set))


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse distance list {text!r}") from None


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out) if args.out else metrics_dir() / f"{cfg.ablation.value}-seed{cfg.seed}"
    res = run_training(cfg, out, args.cache_dir)
    pol = [e for e in res.episodes if e["mode"] == "policy"]
    lvl = res.curriculum.current
    print(f"trained {len(res.episodes)} episodes ({len(pol)} policy); "
          f"final level {lvl.level_index} R={lvl.R:.2f} phi={lvl.phi:.3f}; outputs in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    env_config, ablation, scene = EnvConfig(), Ablation(args.ablation or "scene_pooled"), args.scene
    if args.policy == "checkpoint":
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required with --policy checkpoint")
        try:
            agent, _, extra = load_checkpoint(args.checkpoint)
        except (OSError, ValueError, KeyError) as e:
            raise ConfigError(f"cannot load checkpoint {args.checkpoint}: {e}") from None
        if "run_config" in extra:
            rc = run_config_from_dict(extra["run_config"])
            env_config = rc.env
            ablation = Ablation(args.ablation) if args.ablation else rc.ablation
            scene = scene or rc.scene
        policy = agent
    scene = scene or "two_wall"
    scenes = resolve_scenes(scene)
    if args.policy == "expert":
        policy = ExpertPolicy.for_scenes(scenes, env_config=env_config, cache_dir=args.cache_dir)
    elif args.policy == "random":
        policy = RandomPolicy(np.random.default_rng(args.seed))
    report = run_eval_sweep(policy, scenes, _floats(args.distances), args.episodes, args.seed,
                            env_config, ablation)
    out = Path(args.out) if args.out else metrics_dir() / "eval.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_eval_csv(report, out)
    for row in report.rows():
        print(f"R={row['distance']:.2f}  success={row['success_rate']:.3f}  "
              f"collision={row['collision_rate']:.3f}  n={row['episodes']}")
    return EXIT_OK


def cmd_gen_scene(args) -> int:
    try:
        family = Family(args.family)
    except ValueError:
        raise ConfigError(f"unknown scene family {args.family!r}") from None
    scene = gen_scene(family, args.seed)
    out = Path(args.out) if args.out else metrics_dir() / f"{family.value}-{args.seed}.yaml"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scene(scene, out)
    print(out)
    return EXIT_OK


def cmd_plot(args) -> int:
    metrics = {}
    run = Path(args.run) if args.run else None
    if run is not None and (run / "difficulty.csv").exists():
        metrics["history"] = read_history_csv(run / "difficulty.csv")
    evals = {}
    for item in args.eval or ():
        label, sep, path = item.partition("=")
        if not sep:
            label, path = Path(item).stem, item
        evals[label] = read_eval_csv(path)
    if evals:
        metrics["eval"] = evals
    if not metrics:
        raise ConfigError("nothing to plot: give --run with difficulty.csv and/or --eval CSVs")
    out = Path(args.out) if args.out else (run or metrics_dir()) / "plots"
    for p in emit_plots(metrics, out):
        print(p)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    cfg = SACConfig(hidden=args.hidden)
    worst = 0.0
    for i in range(args.batches):
        agent = SAC(args.obs_dim, 2, cfg, seed=args.seed + i)
        B = args.batch_size
        batch = Batch(rng.standard_normal((B, args.obs_dim)), rng.uniform(-0.99, 0.99, (B, 2)),
                      rng.standard_normal(B), rng.standard_normal((B, args.obs_dim)),
                      (rng.random(B) < 0.2).astype(float))
        err = gradient_check(agent, batch, rng, n_weights=args.weights)
        worst = max(worst, err)
        log.info("batch %d: max relative error %.3e", i, err)
    ok = worst < GRADCHECK_TOL
    print(json.dumps({"max_relative_error": worst, "batches": args.batches, "pass": ok}))
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgnav", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one SAC agent")
    t.add_argument("--config", help="YAML run config")
    t.add_argument("--scene", help="scene family or scene file")
    t.add_argument("--ablation", choices=[a.value for a in Ablation])
    t.add_argument("--seed", type=int)
    t.add_argument("--total-steps", dest="total_steps", type=int)
    t.add_argument("--control-fraction", dest="control_fraction", type=float)
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="nested override, e.g. sac.actor_lr=1e-3 or curriculum.delta_phi=1.5708")
    t.add_argument("--out", help="output directory")
    t.add_argument("--cache-dir", help="path-table cache directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="success rate per initial distance")
    e.add_argument("--policy", choices=["checkpoint", "expert", "random"], default="checkpoint")
    e.add_argument("--checkpoint")
    e.add_argument("--scene")
    e.add_argument("--ablation", choices=[a.value for a in Ablation])
    e.add_argument("--distances", default="1.0,1.5,2.0,2.4,3.0")
    e.add_argument("--episodes", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="output CSV")
    e.add_argument("--cache-dir")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-scene", help="write a scene file")
    g.add_argument("--family", default="two_wall")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_scene)

    pl = sub.add_parser("plot", help="difficulty and success-rate plots")
    pl.add_argument("--run", help="training output directory")
    pl.add_argument("--eval", action="append", metavar="[LABEL=]CSV")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)

    gc = sub.add_parser("gradcheck", help="finite-difference check of the SAC gradients")
    gc.add_argument("--batches", type=int, default=20)
    gc.add_argument("--batch-size", dest="batch_size", type=int, default=8)
    gc.add_argument("--obs-dim", dest="obs_dim", type=int, default=12)
    gc.add_argument("--hidden", type=int, default=16)
    gc.add_argument("--weights", type=int, default=60)
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EmptyBucket, InitExhausted) as e:
        print(f"sgnav: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NaNDetected as e:
        print(f"sgnav: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except IoFailure as e:
        print(f"sgnav: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
