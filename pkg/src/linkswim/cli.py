"""Command-line entry point: simulation, training, evaluation, navigation.

Every subcommand resolves its settings through the same layering
(baked-in defaults < config file < LINKSWIM_* environment variables <
flags), runs, and writes a manifest.json beside its outputs recording
the fully resolved configuration.

Exit codes: 0 success, 2 configuration problems, 3 unusable checkpoint,
1 anything else.
"""

import argparse
import concurrent.futures
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .analysis import (
    centroid_series,
    evaluate_trial,
    translation_metrics,
    trial_rng,
)
from .config import ConfigError, env_overrides, load_config_file, resolve
from .dynamics import SwimmerState
from .environment import RewardConfig
from .gaits import canonical_gait, gait_start_state, run_gait
from .navigation import (
    MovingTarget,
    WaypointCourse,
    measure_max_speed,
    pursue,
    star_course,
    trace_course,
    write_course_csv,
    write_outcome_json,
    write_pursuit_csv,
)
from .nets import Adam, IncompatibleCheckpointError, load_checkpoint
from .ppo import TrainConfig, train

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def _write_manifest(out_dir, command, config, seed, workers, t0, artifacts):
    doc = {
        "command": command,
        "config": _jsonable(config),
        "seed": seed,
        "out": out_dir,
        "workers": workers,
        "code_version": __version__,
        "wall_time_s": round(time.monotonic() - t0, 3),
        "artifacts": sorted(artifacts),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_policy(path):
    if not path:
        raise ConfigError("a checkpoint path is required", field="checkpoint")
    if not os.path.exists(path):
        raise IncompatibleCheckpointError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _reward_config(mode, b, c):
    if mode == "VFS":
        return RewardConfig.vfs(b)
    return RewardConfig.eas(b, c)


def _progress_printer(stream=sys.stderr, every=50):
    counter = {"updates": 0}

    def progress(done, total, recent):
        counter["updates"] += 1
        if counter["updates"] % every == 0 or done >= total:
            print(f"episode {done}/{total}  recent reward {recent:.3f}",
                  file=stream, flush=True)

    return progress


# ------------------------------------------------------------ subcommands


def cmd_simulate_gait(cfg, out_dir, seed, workers):
    import csv as _csv

    spec = canonical_gait(cfg["gait"], period=cfg["period"])
    start = gait_start_state(spec)
    states, metrics = run_gait(spec, start, cfg["cycles"], dt=cfg["dt"],
                               sub_steps=cfg["sub_steps"])
    arr = np.array([s.as_array() for s in states])
    cents = centroid_series(arr)
    with open(os.path.join(out_dir, "gait_trajectory.csv"), "w",
              newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["sample", "x_c", "y_c", "alpha1", "alpha2"])
        for i, row in enumerate(arr):
            w.writerow([i, repr(float(cents[i, 0])), repr(float(cents[i, 1])),
                        repr(float(row[3] - row[2])),
                        repr(float(row[4] - row[3]))])
    doc = {
        "gait": cfg["gait"],
        "cycles": cfg["cycles"],
        "period": cfg["period"],
        "displacement_per_cycle": metrics.displacement.tolist(),
        "rotation_per_cycle": metrics.rotation,
        "mean_speed_x": metrics.mean_speed_x,
        "work_per_cycle": metrics.work,
        "efficiency": metrics.efficiency,
    }
    with open(os.path.join(out_dir, "cycle_metrics.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ["gait_trajectory.csv", "cycle_metrics.json"]


def cmd_train(cfg, out_dir, seed, workers):
    reward = _reward_config(cfg["mode"], cfg["b"],
                            cfg["c"] if cfg["mode"] == "EAS" else 0.0)
    tc = TrainConfig(
        reward=reward,
        n_episodes=cfg["episodes"],
        n_steps=cfg["n_steps"],
        episodes_per_update=cfg["episodes_per_update"],
        discount=cfg["discount"],
        clip_eps=cfg["clip_eps"],
        entropy_coef=cfg["entropy_coef"],
        epochs=cfg["epochs"],
        minibatch=cfg["minibatch"],
        lr=cfg["lr"],
        normalize_advantages=cfg["normalize_advantages"],
        learn_std=cfg["learn_std"],
        seed=seed,
        checkpoint_every=cfg["checkpoint_every"],
        theta_T=cfg["theta_T"],
        dt=cfg["dt"],
        sub_steps=cfg["sub_steps"],
    )
    kwargs = {}
    if cfg["resume"]:
        policy, critic, doc = _load_policy(cfg["resume"])
        lineage = doc.get("seed_lineage") or {}
        if lineage.get("master_seed") != seed:
            raise IncompatibleCheckpointError(
                f"checkpoint was trained with seed {lineage.get('master_seed')}, "
                f"cannot resume it with seed {seed}")
        a_opt = Adam(policy.params(), lr=tc.lr)
        c_opt = Adam(critic.params(), lr=tc.lr)
        adam = doc.get("adam") or {}
        if adam.get("actor"):
            a_opt.load_state(adam["actor"])
        if adam.get("critic"):
            c_opt.load_state(adam["critic"])
        kwargs = dict(policy=policy, critic=critic, a_opt=a_opt, c_opt=c_opt,
                      episode_start=int(lineage.get("episodes_done", 0)))
    result = train(tc, out_dir=out_dir, progress=_progress_printer(), **kwargs)
    print(f"trained {result.episodes_done} episodes "
          f"({result.aborted_updates} aborted updates)", file=sys.stderr)
    return [f for f in os.listdir(out_dir) if f != "manifest.json"]


def _evaluate_policy(policy, trials, master_seed, n_steps, dt, sub_steps):
    """Per-trial success plus translation speed/efficiency medians."""
    wins = 0
    speeds = []
    effs = []
    for t in range(trials):
        ok, states, work, _ = evaluate_trial(
            policy, trial_rng(master_seed, t), n_steps, 0.0, dt, sub_steps)
        wins += bool(ok)
        try:
            m = translation_metrics(centroid_series(states), work / dt, dt)
        except ValueError:
            continue
        speeds.append(m.mean_speed)
        effs.append(m.mean_efficiency)
    return {
        "trials": trials,
        "success_rate": wins / trials,
        "median_speed": float(np.median(speeds)) if speeds else None,
        "median_efficiency": float(np.median(effs)) if effs else None,
        "metric_trials": len(speeds),
    }


def cmd_evaluate(cfg, out_dir, seed, workers):
    policy, _, doc = _load_policy(cfg["checkpoint"])
    summary = _evaluate_policy(policy, cfg["trials"], seed, cfg["n_steps"],
                               cfg["dt"], cfg["sub_steps"])
    summary["checkpoint"] = cfg["checkpoint"]
    summary["trained_mode"] = (doc.get("extras") or {}).get("mode")
    summary["master_seed"] = seed
    with open(os.path.join(out_dir, "evaluation.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"success rate {summary['success_rate']:.2f} over "
          f"{summary['trials']} trials", file=sys.stderr)
    return ["evaluation.json"]


def cmd_navigate(cfg, out_dir, seed, workers):
    policy, _, _ = _load_policy(cfg["checkpoint"])
    if cfg["course"] == "star":
        course = star_course(center=tuple(cfg["center"]),
                             circumradius=cfg["circumradius"],
                             threshold=cfg["threshold"])
    else:
        course = WaypointCourse(cfg["course"], threshold=cfg["threshold"])
    start = SwimmerState(*cfg["start"])
    result = trace_course(policy, course, start,
                          budget_per_waypoint=cfg["budget_per_waypoint"],
                          dt=cfg["dt"], sub_steps=cfg["sub_steps"])
    write_course_csv(os.path.join(out_dir, "course.csv"), result)
    write_outcome_json(os.path.join(out_dir, "outcome.json"), result)
    print(result.summary(), file=sys.stderr)
    return ["course.csv", "outcome.json"]


def cmd_pursue(cfg, out_dir, seed, workers):
    policy, _, _ = _load_policy(cfg["checkpoint"])
    if cfg["speed"] is not None and cfg["speed_ratio"] is not None:
        raise ConfigError("give either speed or speed_ratio, not both",
                          field="speed")
    speed = cfg["speed"] or 0.0
    v_m = None
    if cfg["speed_ratio"] is not None:
        v_m = measure_max_speed(policy, dt=cfg["dt"],
                                sub_steps=cfg["sub_steps"])
        speed = cfg["speed_ratio"] * v_m
    target = MovingTarget.heading(tuple(cfg["target"]),
                                  math.radians(cfg["angle_deg"]),
                                  speed=speed,
                                  diffusivity=cfg["diffusivity"])
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(0 if seed is None else seed)))
    start = SwimmerState(*cfg["start"])
    result = pursue(policy, target, start, budget=cfg["budget"],
                    dt=cfg["dt"], sub_steps=cfg["sub_steps"], rng=rng)
    write_pursuit_csv(os.path.join(out_dir, "pursuit.csv"), result)
    extra = {"target_speed": speed}
    if v_m is not None:
        extra["measured_max_speed"] = v_m
        extra["speed_ratio"] = cfg["speed_ratio"]
    write_outcome_json(os.path.join(out_dir, "outcome.json"), result,
                       extra=extra)
    print(result.summary(), file=sys.stderr)
    return ["pursuit.csv", "outcome.json"]


# ------------------------------------------------------------ sweep

SWEEP_VFS_EPISODES = 30_000
SWEEP_EAS_EPISODES = 60_000


def _cell_episodes(cfg, value):
    if cfg["episodes"] is not None:
        return cfg["episodes"]
    if cfg["parameter"] == "c" and value > 0:
        return SWEEP_EAS_EPISODES
    if cfg["parameter"] == "n_steps" and cfg["mode"] == "EAS":
        return SWEEP_EAS_EPISODES
    return SWEEP_VFS_EPISODES


def _cell_seed(master_seed, index):
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1)[0])


def _run_sweep_cell(job):
    """Train one sweep cell and evaluate it; returns a result row."""
    cfg = job["cfg"]
    value = job["value"]
    if cfg["parameter"] == "c":
        reward = (RewardConfig.vfs(cfg["b"]) if value == 0
                  else RewardConfig.eas(cfg["b"], float(value)))
        n_steps = cfg["n_steps"]
    else:
        reward = _reward_config(cfg["mode"], cfg["b"],
                                3.0 if cfg["mode"] == "EAS" else 0.0)
        n_steps = int(value)
    tc = TrainConfig(
        reward=reward,
        n_episodes=job["episodes"],
        n_steps=n_steps,
        normalize_advantages=cfg["normalize_advantages"],
        learn_std=cfg["learn_std"],
        seed=job["seed"],
        checkpoint_every=cfg["checkpoint_every"],
    )
    result = train(tc, out_dir=job["out_dir"])
    summary = _evaluate_policy(result.policy, cfg["trials"], job["seed"],
                               cfg["eval_steps"], tc.dt, tc.sub_steps)
    return {
        "value": value,
        "episodes": job["episodes"],
        "success_rate": summary["success_rate"],
        "speed": summary["median_speed"],
        "efficiency": summary["median_efficiency"],
    }


def cmd_sweep(cfg, out_dir, seed, workers):
    jobs = []
    for i, value in enumerate(cfg["values"]):
        label = f"{cfg['parameter']}_{value:g}"
        jobs.append({
            "cfg": cfg,
            "value": value,
            "episodes": _cell_episodes(cfg, value),
            "seed": _cell_seed(seed, i),
            "out_dir": os.path.join(out_dir, label),
        })
    rows = []
    failures = []
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            futures = {pool.submit(_run_sweep_cell, j): j for j in jobs}
            results = {}
            for fut in concurrent.futures.as_completed(futures):
                job = futures[fut]
                try:
                    results[job["value"]] = fut.result()
                except Exception as exc:
                    failures.append({"value": job["value"], "error": str(exc)})
            rows = [results[j["value"]] for j in jobs
                    if j["value"] in results]
    else:
        for job in jobs:
            try:
                rows.append(_run_sweep_cell(job))
            except Exception as exc:
                failures.append({"value": job["value"], "error": str(exc)})
    import csv as _csv

    table = os.path.join(out_dir, "sweep.csv")
    with open(table, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["value", "success_rate", "speed", "efficiency"])
        for row in rows:
            w.writerow([repr(float(row["value"])),
                        repr(float(row["success_rate"])),
                        "" if row["speed"] is None else repr(float(row["speed"])),
                        "" if row["efficiency"] is None
                        else repr(float(row["efficiency"]))])
    doc = {"parameter": cfg["parameter"], "rows": _jsonable(rows),
           "failures": failures,
           "episode_budgets": {str(j["value"]): j["episodes"] for j in jobs},
           "cell_seeds": {str(j["value"]): j["seed"] for j in jobs}}
    with open(os.path.join(out_dir, "sweep.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for f in failures:
        print(f"cell {cfg['parameter']}={f['value']} failed: {f['error']}",
              file=sys.stderr)
    return [f for f in os.listdir(out_dir) if f != "manifest.json"]


# ------------------------------------------------------------ wiring

HANDLERS = {
    "simulate-gait": cmd_simulate_gait,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "navigate": cmd_navigate,
    "pursue": cmd_pursue,
    "sweep": cmd_sweep,
}

SEED_REQUIRED = {"train", "evaluate", "sweep"}

# which command-line flags feed which config keys, per command
FLAG_KEYS = {
    "train": {"episodes": "episodes", "checkpoint": "resume"},
    "evaluate": {"checkpoint": "checkpoint"},
    "navigate": {"checkpoint": "checkpoint"},
    "pursue": {"checkpoint": "checkpoint"},
    "sweep": {"episodes": "episodes"},
    "simulate-gait": {},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linkswim",
        description="Three-link low-Reynolds swimmer: simulate, train, navigate.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, episodes=False, checkpoint=False, workers=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int,
                       help="master seed for all randomness")
        p.add_argument("--out", help="output directory "
                                     f"(default: linkswim-out/{name})")
        if workers:
            p.add_argument("--workers", type=int, default=1,
                           help="parallel worker processes")
        if episodes:
            p.add_argument("--episodes", type=int,
                           help="override the training episode budget")
        if checkpoint:
            p.add_argument("--checkpoint",
                           help="policy checkpoint file" +
                                (" to resume from" if name == "train" else ""))
        return p

    add("simulate-gait", "integrate a prescribed stroke cycle")
    add("train", "train a navigation policy", episodes=True, checkpoint=True,
        workers=True)
    add("evaluate", "measure success rate and translation metrics",
        checkpoint=True, workers=True)
    add("navigate", "trace a waypoint course with a trained policy",
        checkpoint=True)
    add("pursue", "chase a diffusing target with a trained policy",
        checkpoint=True)
    add("sweep", "train and evaluate across a parameter grid", episodes=True,
        workers=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    t0 = time.monotonic()
    try:
        file_cfg = load_config_file(args.config) if args.config else {}
        flags = {key: getattr(args, flag, None)
                 for flag, key in FLAG_KEYS[command].items()}
        cfg = resolve(command, file_cfg, env_overrides(), flags)
        seed = args.seed
        if seed is None and command in SEED_REQUIRED:
            raise ConfigError(f"{command} requires --seed for reproducibility",
                              field="seed")
        out_dir = args.out or os.path.join("linkswim-out", command)
        os.makedirs(out_dir, exist_ok=True)
        workers = getattr(args, "workers", 1) or 1
        if workers < 1:
            raise ConfigError("workers must be at least 1", field="workers")
        artifacts = HANDLERS[command](cfg, out_dir, seed, workers)
        _write_manifest(out_dir, command, cfg, seed, workers, t0, artifacts)
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompatibleCheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
