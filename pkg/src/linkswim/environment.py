"""Episodic environment around the swimmer dynamics.

An episode fixes a target direction theta_T and runs a set number of
action steps. The observation hides absolute position and exposes the
heading error only through its cosine and sine, keeping the policy's
input continuous when the swimmer spins through +-pi.

Two reward rules are provided: the velocity-focused one pays for
centroid displacement projected on the target direction, the
energy-aware one additionally charges for the mechanical work spent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import ALPHA_LIMIT
from .dynamics import (
    JointRates,
    SwimmerState,
    integrate_segment,
    state_centroid,
)

DEFAULT_B = 6.0
DEFAULT_C = 3.0


@dataclass(frozen=True)
class Observation:
    """What the policy sees: heading error direction plus joint angles."""

    cos_theta_d: float
    sin_theta_d: float
    alpha1: float
    alpha2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cos_theta_d, self.sin_theta_d,
                         self.alpha1, self.alpha2], dtype=float)


@dataclass(frozen=True)
class RewardConfig:
    """Reward rule: mode 'VFS' (speed only) or 'EAS' (speed minus energy)."""

    mode: str = "EAS"
    b: float = DEFAULT_B
    c: float = DEFAULT_C

    def __post_init__(self):
        if self.mode not in ("VFS", "EAS"):
            raise ValueError(f"unknown reward mode {self.mode!r}")
        if self.b <= 0:
            raise ValueError("b must be positive")
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        if self.mode == "VFS" and self.c != 0.0:
            raise ValueError("VFS mode carries no energy penalty; set c = 0")

    @staticmethod
    def vfs(b: float = DEFAULT_B) -> "RewardConfig":
        return RewardConfig(mode="VFS", b=b, c=0.0)

    @staticmethod
    def eas(b: float = DEFAULT_B, c: float = DEFAULT_C) -> "RewardConfig":
        return RewardConfig(mode="EAS", b=b, c=c)


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode shape: length, target direction, integration granularity."""

    n_steps: int = 200
    theta_T: float = 0.0
    dt: float = 0.1
    sub_steps: int = 4
    randomize_init: bool = True
    x1_init: tuple = (1.0, 0.0)
    thetas_init: tuple = (math.pi / 3, math.pi / 3, math.pi / 3)

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def target_direction(self) -> np.ndarray:
        return np.array([math.cos(self.theta_T), math.sin(self.theta_T)])


@dataclass(frozen=True)
class StepOutcome:
    """Everything one action step produces."""

    state: SwimmerState
    observation: Observation
    reward: float
    work: float
    displacement: np.ndarray  # centroid motion over the step


def observe(state: SwimmerState, theta_T: float) -> Observation:
    """Observation for a state relative to a target direction."""
    td = state.theta2 - theta_T
    return Observation(cos_theta_d=math.cos(td), sin_theta_d=math.sin(td),
                       alpha1=state.alpha1, alpha2=state.alpha2)


def reset(config: EpisodeConfig, rng: np.random.Generator):
    """Fresh episode start state and its observation.

    With randomization on, the heading theta2 is uniform on (-pi, pi)
    and each joint angle uniform over its admissible range, so every
    start is feasible. With randomization off the configured link
    orientations are used verbatim.
    """
    x1, y1 = config.x1_init
    if config.randomize_init:
        theta2 = rng.uniform(-math.pi, math.pi)
        a1 = rng.uniform(-ALPHA_LIMIT, ALPHA_LIMIT)
        a2 = rng.uniform(-ALPHA_LIMIT, ALPHA_LIMIT)
        state = SwimmerState(x1, y1, theta2 - a1, theta2, theta2 + a2)
    else:
        t1, t2, t3 = config.thetas_init
        state = SwimmerState(x1, y1, t1, t2, t3)
    return state, observe(state, config.theta_T)


def env_step(state: SwimmerState, action: JointRates, config: EpisodeConfig,
             reward_cfg: RewardConfig) -> StepOutcome:
    """Advance one action step and score it.

    The action is assumed to respect the rate cap (the policy clamps
    before acting). Joint limits are enforced by the integrator's
    pinning rule. The reward pays b for centroid displacement along the
    target direction; in EAS mode it charges c per unit of work.
    """
    before = state_centroid(state)
    seg = integrate_segment(state, action, config.dt, config.sub_steps)
    after = state_centroid(seg.end)
    disp = after - before
    p = config.target_direction()
    reward = reward_cfg.b * float(disp @ p)
    if reward_cfg.mode == "EAS":
        reward -= reward_cfg.c * seg.work
    return StepOutcome(state=seg.end, observation=observe(seg.end, config.theta_T),
                       reward=reward, work=seg.work, displacement=disp)
