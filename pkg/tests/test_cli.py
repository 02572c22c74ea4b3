"""Config resolution rules and end-to-end command-line smoke runs."""

import csv
import json
import os
import subprocess
import sys
import textwrap

import pytest

from linkswim.config import (
    ConfigError,
    defaults,
    env_overrides,
    load_config_file,
    resolve,
)


# ------------------------------------------------------------- resolution


def test_defaults_are_complete_and_typed():
    cfg = resolve("train")
    assert cfg == defaults("train")
    assert cfg["episodes"] == 100_000
    assert cfg["lr"] == pytest.approx(3e-4)
    assert cfg["normalize_advantages"] is True


def test_unknown_file_key_is_an_error():
    with pytest.raises(ConfigError, match="unknown key"):
        resolve("train", file_cfg={"episodess": 5})


def test_unknown_env_key_is_ignored():
    cfg = resolve("train", env={"palette": "mauve"})
    assert cfg == defaults("train")


def test_precedence_file_env_flags():
    cfg = resolve("train", file_cfg={"episodes": 2},
                  env={"episodes": 4}, flags={"episodes": 6})
    assert cfg["episodes"] == 6
    cfg = resolve("train", file_cfg={"episodes": 2}, env={"episodes": 4})
    assert cfg["episodes"] == 4


def test_none_flags_do_not_override():
    cfg = resolve("train", file_cfg={"episodes": 2},
                  flags={"episodes": None})
    assert cfg["episodes"] == 2


def test_type_errors_name_the_field():
    with pytest.raises(ConfigError, match="field 'episodes'"):
        resolve("train", file_cfg={"episodes": "ten"})
    with pytest.raises(ConfigError, match="field 'mode'"):
        resolve("train", file_cfg={"mode": "FAST"})


def test_env_overrides_parse_yaml_scalars():
    env = env_overrides({"LINKSWIM_EPISODES": "12",
                         "LINKSWIM_LR": "1e-3",
                         "LINKSWIM_COURSE": "star",
                         "PATH": "/usr/bin"})
    assert env == {"episodes": 12, "lr": 1e-3, "course": "star"}


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("episodes: 7\nlr: 0.001\n")
    assert load_config_file(str(path)) == {"episodes": 7, "lr": 0.001}


def test_config_file_parse_error_carries_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("episodes: 7\n  stray: [\n")
    with pytest.raises(ConfigError) as err:
        load_config_file(str(path))
    assert err.value.line is not None


# ------------------------------------------------------------ subprocess


def run_cli(*args, env=None, cwd=None):
    full_env = {k: v for k, v in os.environ.items()
                if not k.startswith("LINKSWIM_")}
    full_env.update(env or {})
    return subprocess.run([sys.executable, "-m", "linkswim.cli", *args],
                          capture_output=True, text=True, env=full_env,
                          cwd=cwd)


TINY_TRAIN = textwrap.dedent("""\
    episodes: 4
    episodes_per_update: 2
    n_steps: 40
    checkpoint_every: 2
    """)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One shared miniature training run for the checkpoint consumers."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "train.yaml"
    cfg.write_text(TINY_TRAIN)
    out = root / "run"
    proc = run_cli("train", "--config", str(cfg), "--seed", "9",
                   "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    return {"root": root, "cfg": cfg, "out": out,
            "checkpoint": out / "policy_final.json"}


def test_train_writes_expected_artifacts(tiny_run):
    out = tiny_run["out"]
    names = set(os.listdir(out))
    assert {"policy_final.json", "learning_curve.csv",
            "manifest.json"} <= names
    assert "checkpoint_000002.json" in names
    with open(out / "learning_curve.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["episode", "reward"]
    assert len(rows) == 5
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seed"] == 9
    assert manifest["config"]["episodes"] == 4
    assert manifest["config"]["lr"] == pytest.approx(3e-4)
    assert "learning_curve.csv" in manifest["artifacts"]
    assert manifest["wall_time_s"] >= 0


def test_train_missing_seed_exits_2(tmp_path):
    proc = run_cli("train", "--out", str(tmp_path / "x"))
    assert proc.returncode == 2
    assert "seed" in proc.stderr


def test_env_overrides_apply_and_flags_win(tiny_run, tmp_path):
    out = tmp_path / "env"
    proc = run_cli("train", "--config", str(tiny_run["cfg"]), "--seed", "9",
                   "--out", str(out), env={"LINKSWIM_EPISODES": "2"})
    assert proc.returncode == 0, proc.stderr
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["episodes"] == 2

    out2 = tmp_path / "flag"
    proc = run_cli("train", "--config", str(tiny_run["cfg"]), "--seed", "9",
                   "--out", str(out2), "--episodes", "6",
                   env={"LINKSWIM_EPISODES": "2"})
    assert proc.returncode == 0, proc.stderr
    manifest = json.loads((out2 / "manifest.json").read_text())
    assert manifest["config"]["episodes"] == 6


def test_same_seed_reruns_are_byte_identical(tiny_run, tmp_path):
    out = tmp_path / "again"
    proc = run_cli("train", "--config", str(tiny_run["cfg"]), "--seed", "9",
                   "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    first = (tiny_run["out"] / "learning_curve.csv").read_bytes()
    assert (out / "learning_curve.csv").read_bytes() == first
    ckpt = json.loads((out / "policy_final.json").read_text())
    ref = json.loads(tiny_run["checkpoint"].read_text())
    assert ckpt["actor"] == ref["actor"]


def test_train_resume_continues_curve(tiny_run, tmp_path):
    out = tmp_path / "resumed"
    proc = run_cli("train", "--config", str(tiny_run["cfg"]), "--seed", "9",
                   "--out", str(out), "--episodes", "6", "--checkpoint",
                   str(tiny_run["out"] / "checkpoint_000004.json"))
    assert proc.returncode == 0, proc.stderr
    with open(out / "learning_curve.csv") as fh:
        rows = list(csv.reader(fh))
    # episode numbers are 1-indexed; the resumed run covers 5 and 6
    assert [int(r[0]) for r in rows[1:]] == [5, 6]


def test_train_resume_seed_mismatch_exits_3(tiny_run, tmp_path):
    proc = run_cli("train", "--config", str(tiny_run["cfg"]), "--seed", "8",
                   "--out", str(tmp_path / "x"), "--checkpoint",
                   str(tiny_run["checkpoint"]))
    assert proc.returncode == 3
    assert "seed" in proc.stderr


def test_missing_checkpoint_exits_3(tmp_path):
    proc = run_cli("evaluate", "--checkpoint", str(tmp_path / "nope.json"),
                   "--seed", "1", "--out", str(tmp_path / "x"))
    assert proc.returncode == 3
    assert "checkpoint" in proc.stderr


def test_evaluate_writes_report(tiny_run, tmp_path):
    cfg = tmp_path / "eval.yaml"
    cfg.write_text("trials: 3\nn_steps: 200\n")
    out = tmp_path / "ev"
    proc = run_cli("evaluate", "--config", str(cfg), "--checkpoint",
                   str(tiny_run["checkpoint"]), "--seed", "3",
                   "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads((out / "evaluation.json").read_text())
    assert doc["trials"] == 3
    assert 0.0 <= doc["success_rate"] <= 1.0
    assert doc["trained_mode"] == "VFS"
    assert doc["master_seed"] == 3


def test_navigate_single_easy_waypoint(tiny_run, tmp_path):
    cfg = tmp_path / "nav.yaml"
    cfg.write_text("course: [[0.55, 0.0]]\nthreshold: 0.5\n"
                   "budget_per_waypoint: 40\n")
    out = tmp_path / "nav"
    proc = run_cli("navigate", "--config", str(cfg), "--checkpoint",
                   str(tiny_run["checkpoint"]), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads((out / "outcome.json").read_text())
    assert doc["task"] == "course"
    assert doc["completed"] is True
    assert doc["reached"] == 1
    with open(out / "course.csv") as fh:
        header = fh.readline().strip()
    assert header == "step,x,y"


def test_pursue_stationary_target(tiny_run, tmp_path):
    cfg = tmp_path / "pur.yaml"
    cfg.write_text("budget: 60\ndiffusivity: 0.0\n")
    out = tmp_path / "pur"
    proc = run_cli("pursue", "--config", str(cfg), "--checkpoint",
                   str(tiny_run["checkpoint"]), "--seed", "2",
                   "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads((out / "outcome.json").read_text())
    assert doc["task"] == "pursuit"
    assert doc["target_speed"] == 0.0
    assert isinstance(doc["captured"], bool)
    with open(out / "pursuit.csv") as fh:
        header = fh.readline().strip()
    assert header == "step,x,y,target_x,target_y,distance"


def test_pursue_speed_and_ratio_conflict_exits_2(tiny_run, tmp_path):
    cfg = tmp_path / "pur.yaml"
    cfg.write_text("speed: 0.1\nspeed_ratio: 0.5\n")
    proc = run_cli("pursue", "--config", str(cfg), "--checkpoint",
                   str(tiny_run["checkpoint"]), "--seed", "2",
                   "--out", str(tmp_path / "x"))
    assert proc.returncode == 2
    assert "speed" in proc.stderr


def test_simulate_gait_reports_cycle_metrics(tmp_path):
    out = tmp_path / "gait"
    proc = run_cli("simulate-gait", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads((out / "cycle_metrics.json").read_text())
    assert doc["gait"] == "purcell_symmetric"
    assert doc["mean_speed_x"] != 0.0
    assert doc["work_per_cycle"] > 0.0
    with open(out / "gait_trajectory.csv") as fh:
        header = fh.readline().strip()
    assert header == "sample,x_c,y_c,alpha1,alpha2"


def test_sweep_tiny_grid(tmp_path):
    cfg = tmp_path / "sweep.yaml"
    cfg.write_text("values: [0, 1]\ntrials: 2\nn_steps: 40\n"
                   "eval_steps: 200\ncheckpoint_every: 4\n")
    out = tmp_path / "sw"
    proc = run_cli("sweep", "--config", str(cfg), "--seed", "7",
                   "--out", str(out), "--episodes", "4")
    assert proc.returncode == 0, proc.stderr
    with open(out / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["value", "success_rate", "speed", "efficiency"]
    assert len(rows) == 3
    doc = json.loads((out / "sweep.json").read_text())
    assert doc["parameter"] == "c"
    assert doc["failures"] == []
    assert set(doc["episode_budgets"]) == {"0.0", "1.0"}
    assert all(v == 4 for v in doc["episode_budgets"].values())
    # every cell trains under its own derived seed
    assert len(set(doc["cell_seeds"].values())) == 2


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("episodess: 4\n")
    proc = run_cli("train", "--config", str(cfg), "--seed", "1",
                   "--out", str(tmp_path / "x"))
    assert proc.returncode == 2
    assert "episodess" in proc.stderr
