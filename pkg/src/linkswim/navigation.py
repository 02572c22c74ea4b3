"""Waypoint tracing and pursuit of moving targets with a trained policy.

Both tasks reuse the fixed-direction swimming skill: every step the
target direction is recomputed from the swimmer's current centroid to
the active goal (next waypoint, or the target's instantaneous position),
and the policy's mean action drives the stroke.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .analysis import (DRAG_RATIO, EVAL_STEPS, centroid_series,
                       evaluate_trial, translation_metrics, trial_rng)
from .dynamics import ALPHA_LIMIT, SingularSystemError, SwimmerState

ARRIVAL_THRESHOLD = 0.001
COURSE_BUDGET = 20_000      # steps allowed per waypoint
PURSUIT_BUDGET = 50_000
STAR_CENTER = (1.5, 0.5)
# inner/outer vertex radius ratio of a regular 5-pointed star outline
STAR_INNER_RATIO = math.sin(math.pi / 10) / math.sin(3 * math.pi / 10)


@dataclass(frozen=True)
class WaypointCourse:
    """Ordered goal points with a shared arrival threshold."""

    points: np.ndarray
    threshold: float = ARRIVAL_THRESHOLD

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValueError("course needs at least one (x, y) point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("course points must be finite")
        if not self.threshold > 0.0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class MovingTarget:
    """A point target drifting along a fixed heading while diffusing."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    speed: float = 0.0
    diffusivity: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2)
        ori = np.asarray(self.orientation, dtype=float).reshape(2)
        if abs(float(ori @ ori) - 1.0) > 1e-9:
            raise ValueError("orientation must be a unit vector")
        if self.speed < 0.0 or self.diffusivity < 0.0:
            raise ValueError("speed and diffusivity must be nonnegative")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", ori)

    @classmethod
    def heading(cls, position, angle: float, speed: float = 0.0,
                diffusivity: float = 0.0) -> "MovingTarget":
        """Build a target whose drift heading is given as an angle."""
        ori = np.array([math.cos(angle), math.sin(angle)])
        return cls(position, ori, speed, diffusivity)


@dataclass(frozen=True)
class CourseResult:
    """Centroid trajectory plus per-waypoint arrival steps (-1 if missed)."""

    centroids: np.ndarray
    arrivals: np.ndarray
    threshold: float

    @property
    def completed(self) -> bool:
        return bool(np.all(self.arrivals >= 0))

    @property
    def reached(self) -> int:
        return int(np.sum(self.arrivals >= 0))

    @property
    def steps(self) -> int:
        return len(self.centroids) - 1

    def summary(self) -> str:
        state = "completed" if self.completed else "budget exhausted"
        return (f"{state}: reached {self.reached}/{len(self.arrivals)} "
                f"waypoints in {self.steps} steps")


@dataclass(frozen=True)
class PursuitResult:
    """Swimmer and target trajectories with the per-step separation."""

    centroids: np.ndarray
    targets: np.ndarray
    distances: np.ndarray
    capture_step: int | None

    @property
    def captured(self) -> bool:
        return self.capture_step is not None

    @property
    def min_distance(self) -> float:
        return float(self.distances.min())

    @property
    def final_distance(self) -> float:
        return float(self.distances[-1])

    @property
    def steps(self) -> int:
        return len(self.distances) - 1

    def summary(self) -> str:
        if self.captured:
            return f"captured at step {self.capture_step}"
        return (f"not captured in {self.steps} steps; min distance "
                f"{self.min_distance:.4f}, final {self.final_distance:.4f}")


def retarget(centroid, target, previous: float = 0.0) -> float:
    """Direction from the swimmer's centroid to the goal point.

    Coincident points leave the previous direction in force.
    """
    dx = float(target[0]) - float(centroid[0])
    dy = float(target[1]) - float(centroid[1])
    if dx == 0.0 and dy == 0.0:
        return previous
    return math.atan2(dy, dx)


def _policy_weights(policy):
    net = policy.net
    if len(net.widths) != 4:
        raise ValueError("navigation expects a two-hidden-layer policy")
    return net.W[0], net.b[0], net.W[1], net.b[1], net.W[2], net.b[2]


def trace_course(policy, course: WaypointCourse, start: SwimmerState,
                 budget_per_waypoint: int = COURSE_BUDGET,
                 dt: float = 0.1, sub_steps: int = 4) -> CourseResult:
    """Steer through the course's waypoints in order.

    The target direction is recomputed every step from the current
    centroid to the active waypoint; arrival (centroid within the course
    threshold) advances to the next one. Each waypoint gets at most
    budget_per_waypoint steps; running out stops the run with the
    remaining arrivals marked -1.
    """
    if budget_per_waypoint < 1:
        raise ValueError("budget_per_waypoint must be positive")
    weights = _policy_weights(policy)
    n_wp = len(course)
    cent_traj = np.empty((budget_per_waypoint * n_wp + 1, 2))
    arrivals = np.empty(n_wp, dtype=np.int64)
    s = start.as_array()
    n_samples, status, cond = _kernels.run_course(
        s, course.points, course.threshold, budget_per_waypoint,
        *weights, dt, sub_steps, policy.rate_cap, ALPHA_LIMIT, DRAG_RATIO,
        cent_traj, arrivals)
    if status != _kernels.OK:
        raise SingularSystemError(cond)
    return CourseResult(cent_traj[:n_samples].copy(), arrivals,
                        course.threshold)


def advance_target(target: MovingTarget, dt: float,
                   rng: np.random.Generator) -> MovingTarget:
    """One time step of target drift plus translational diffusion.

    The Gaussian kick has per-axis variance 2 * diffusivity * dt; the
    orientation never changes.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    kick = math.sqrt(2.0 * target.diffusivity * dt) * rng.standard_normal(2)
    pos = target.position + target.speed * target.orientation * dt + kick
    return replace(target, position=pos)


def pursue(policy, target: MovingTarget, start: SwimmerState,
           budget: int = PURSUIT_BUDGET, dt: float = 0.1,
           sub_steps: int = 4, rng: np.random.Generator = None,
           noise=None) -> PursuitResult:
    """Chase a moving, diffusing target until capture or budget end.

    Per step: retarget to the target's instantaneous position, advance
    the swimmer one action step, then advance the target; capture is a
    separation below ARRIVAL_THRESHOLD. The target's Gaussian kicks come
    from noise (budget x 2 standard normals), drawn from rng when not
    supplied explicitly.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    weights = _policy_weights(policy)
    if noise is None:
        if rng is None:
            rng = np.random.default_rng(0)
        noise = rng.standard_normal((budget, 2))
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (budget, 2):
        raise ValueError(f"noise must have shape ({budget}, 2)")
    cent_traj = np.empty((budget + 1, 2))
    target_traj = np.empty((budget + 1, 2))
    dist = np.empty(budget + 1)
    s = start.as_array()
    cap, n_steps, status, cond = _kernels.run_pursuit(
        s, target.position, target.orientation, target.speed,
        target.diffusivity, noise, ARRIVAL_THRESHOLD,
        *weights, dt, sub_steps, policy.rate_cap, ALPHA_LIMIT, DRAG_RATIO,
        cent_traj, target_traj, dist)
    if status != _kernels.OK:
        raise SingularSystemError(cond)
    n = n_steps + 1
    return PursuitResult(cent_traj[:n].copy(), target_traj[:n].copy(),
                         dist[:n].copy(), None if cap < 0 else int(cap))


def star_course(center=STAR_CENTER, circumradius: float = 1.0,
                threshold: float = ARRIVAL_THRESHOLD) -> WaypointCourse:
    """Ten-point course tracing a regular five-pointed star outline.

    Outer and inner vertices alternate counterclockwise starting from
    the topmost outer vertex.
    """
    if circumradius <= 0.0:
        raise ValueError("circumradius must be positive")
    cx, cy = float(center[0]), float(center[1])
    pts = np.empty((10, 2))
    for j in range(10):
        ang = math.pi / 2 + j * math.pi / 5
        rad = circumradius if j % 2 == 0 else circumradius * STAR_INNER_RATIO
        pts[j] = (cx + rad * math.cos(ang), cy + rad * math.sin(ang))
    return WaypointCourse(pts, threshold)


def measure_max_speed(policy, trials: int = 5, master_seed: int = 0,
                      n_steps: int = EVAL_STEPS, dt: float = 0.1,
                      sub_steps: int = 4) -> float:
    """Empirical top speed: median translation-stage speed over trials.

    Runs the standard evaluation protocol (randomized starts from the
    fixed seed, mean-action rollouts) and reads each trial's
    translation-stage mean speed; trials that never settle into
    translation are skipped.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    speeds = []
    for i in range(trials):
        rng = trial_rng(master_seed, i)
        _, states, work, _ = evaluate_trial(policy, rng, n_steps=n_steps,
                                            dt=dt, sub_steps=sub_steps)
        try:
            m = translation_metrics(centroid_series(states), work / dt, dt)
        except ValueError:
            continue
        speeds.append(m.mean_speed)
    if not speeds:
        raise ValueError("no trial reached a translation stage")
    return float(np.median(speeds))


def write_course_csv(path, result: CourseResult):
    """Centroid trajectory as step,x,y rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "x", "y"])
        for i, (x, y) in enumerate(result.centroids):
            w.writerow([i, repr(float(x)), repr(float(y))])


def write_pursuit_csv(path, result: PursuitResult):
    """Paired swimmer/target trajectories as CSV rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "x", "y", "target_x", "target_y", "distance"])
        for i in range(len(result.distances)):
            w.writerow([i,
                        repr(float(result.centroids[i, 0])),
                        repr(float(result.centroids[i, 1])),
                        repr(float(result.targets[i, 0])),
                        repr(float(result.targets[i, 1])),
                        repr(float(result.distances[i]))])


def write_outcome_json(path, result, extra: dict = None):
    """Outcome record for either task; extra keys are merged in."""
    if isinstance(result, CourseResult):
        doc = {"task": "course", "completed": result.completed,
               "reached": result.reached,
               "waypoints": len(result.arrivals),
               "arrival_steps": [int(a) for a in result.arrivals],
               "steps": result.steps, "summary": result.summary()}
    elif isinstance(result, PursuitResult):
        doc = {"task": "pursuit", "captured": result.captured,
               "capture_step": result.capture_step,
               "steps": result.steps,
               "min_distance": result.min_distance,
               "final_distance": result.final_distance,
               "summary": result.summary()}
    else:
        raise TypeError(f"unsupported result type {type(result).__name__}")
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
