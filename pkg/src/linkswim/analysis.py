"""Trajectory post-processing: smoothing, stage labels, speed, efficiency.

A raw centroid path oscillates at the stroke frequency; a centered
71-sample moving average strips the stroke ripple so the local slope
angle of the smoothed path separates steering from translation, point
by point. Speed and efficiency are measured over the longest
translation run, and a navigation trial counts as a success when the
smoothed path holds the target heading over a sustained run while
actually progressing along it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import ALPHA_LIMIT, SingularSystemError, SwimmerState
from .environment import reset, EpisodeConfig

SMOOTH_WINDOW = 71
HALF_WINDOW = SMOOTH_WINDOW // 2
STEERING_THRESHOLD = math.radians(2.5)
SLOPE_UNDEFINED = np.nan
EVAL_STEPS = 1500
DRAG_RATIO = 0.5
# a converged stroke travels ~0.01 lengths per unit time; anything an
# order of magnitude below that is adrift, and its slope angles are
# noise rather than a heading, so such trials never count as successes
MIN_TRANSLATION_SPEED = 1e-3


class TrajectoryTooShort(ValueError):
    """Raw path shorter than the smoothing window plus one sample."""


@dataclass(frozen=True)
class SmoothedPath:
    """Moving-average positions; index i maps to raw index i + 35."""

    positions: np.ndarray
    raw_length: int

    def __post_init__(self):
        if len(self.positions) != self.raw_length - 2 * HALF_WINDOW:
            raise ValueError("smoothed length must be raw length minus 70")


@dataclass(frozen=True)
class StageLabels:
    """Per-point steering/translation split of a slope-angle series.

    translation[i] is True where |theta_s| stays under the threshold;
    [start, stop) indexes the longest consecutive translation run, the
    window speed and efficiency are measured over. Both are None when
    no point ever aligns.
    """

    translation: np.ndarray
    start: int | None
    stop: int | None


def smooth_path(raw) -> SmoothedPath:
    """Centered uniform moving average over 71 samples."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) path, got {raw.shape}")
    n = len(raw)
    if n <= 2 * HALF_WINDOW:
        raise TrajectoryTooShort(
            f"need more than {2 * HALF_WINDOW} samples, got {n}")
    kernel = np.full(SMOOTH_WINDOW, 1.0 / SMOOTH_WINDOW)
    xs = np.convolve(raw[:, 0], kernel, mode="valid")
    ys = np.convolve(raw[:, 1], kernel, mode="valid")
    return SmoothedPath(np.column_stack([xs, ys]), n)


def slope_angle(path: SmoothedPath) -> np.ndarray:
    """Direction of travel between consecutive smoothed points.

    Repeated identical points give an undefined-slope marker (NaN).
    """
    pos = path.positions
    if len(pos) < 2:
        raise ValueError("need at least two smoothed points")
    d = np.diff(pos, axis=0)
    theta = np.arctan2(d[:, 1], d[:, 0])
    still = (d[:, 0] == 0.0) & (d[:, 1] == 0.0)
    theta[still] = SLOPE_UNDEFINED
    return theta


def relative_slope(theta_s, theta_T: float):
    """Slope angles measured from the target heading, wrapped to (-pi, pi]."""
    if theta_T == 0.0:
        return theta_s
    d = np.asarray(theta_s, dtype=float) - theta_T
    return np.arctan2(np.sin(d), np.cos(d))


def classify_stages(theta_s, threshold: float = STEERING_THRESHOLD) -> StageLabels:
    """Split slope angles into steering and translation by threshold.

    Undefined slopes (NaN) never count as translation. The longest
    consecutive translation run (first one on ties) becomes the
    measurement window.
    """
    theta_s = np.asarray(theta_s, dtype=float)
    with np.errstate(invalid="ignore"):
        translation = np.abs(theta_s) < threshold
    if not translation.any():
        return StageLabels(translation, None, None)
    padded = np.concatenate([[False], translation, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, stops = edges[::2], edges[1::2]
    best = int(np.argmax(stops - starts))
    return StageLabels(translation, int(starts[best]), int(stops[best]))


@dataclass(frozen=True)
class TranslationMetrics:
    mean_speed: float
    mean_efficiency: float
    start: int
    n_points: int


def translation_metrics(raw_path, powers, dt: float,
                        theta_T: float = 0.0,
                        gamma: float = DRAG_RATIO) -> TranslationMetrics:
    """Speed along the target direction and towing efficiency.

    Both are measured over the longest translation run of the smoothed
    path: speed is the smoothed displacement along the target heading
    per unit time, efficiency compares the power needed to tow the
    straightened swimmer at that speed with the mean power actually
    dissipated over the same window. powers[i] must be the instantaneous
    dissipation matching raw step i (work per step / dt works too as an
    average).
    """
    sp = smooth_path(raw_path)
    theta_s = relative_slope(slope_angle(sp), theta_T)
    stages = classify_stages(theta_s)
    if stages.start is None:
        raise ValueError("no translation stage reached")
    a, b = stages.start, stages.stop
    pos = sp.positions
    disp = pos[b] - pos[a]
    duration = (b - a) * dt
    p = np.array([math.cos(theta_T), math.sin(theta_T)])
    speed = float(disp @ p) / duration
    # power samples aligned with the smoothed window [a+35, b+35)
    powers = np.asarray(powers, dtype=float)
    mean_power = float(powers[a + HALF_WINDOW:b + HALF_WINDOW].mean())
    if mean_power <= 0.0:
        raise ValueError("mean power over the translation stage must be positive")
    eff = gamma * speed * speed / mean_power
    return TranslationMetrics(speed, eff, a, b - a)


def rollout_deterministic(policy, state: SwimmerState, n_steps: int,
                          theta_T: float = 0.0, dt: float = 0.1,
                          sub_steps: int = 4):
    """Mean-action rollout; returns (states (n+1,5), work (n,)).

    Uses the fused kernel for the standard two-hidden-layer networks.
    """
    net = policy.net
    if len(net.widths) != 4:
        raise ValueError("deterministic rollout expects two hidden layers")
    states = np.empty((n_steps + 1, 5))
    work = np.empty(n_steps)
    s = state.as_array()
    status, cond = _kernels.run_fixed_target(
        s, theta_T, net.W[0], net.b[0], net.W[1], net.b[1], net.W[2],
        net.b[2], n_steps, dt, sub_steps, policy.rate_cap, ALPHA_LIMIT,
        DRAG_RATIO, states, work)
    if status != _kernels.OK:
        raise SingularSystemError(cond)
    return states, work


def centroid_series(states) -> np.ndarray:
    """Centroid path for an (n, 5) array of reduced states."""
    states = np.asarray(states, dtype=float)
    out = np.empty((len(states), 2))
    tmp = np.empty(2)
    for i, row in enumerate(states):
        _kernels.centroid_of(row, tmp)
        out[i] = tmp
    return out


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial_index,))
    return np.random.Generator(np.random.PCG64(ss))


def evaluate_trial(policy, rng, n_steps: int = EVAL_STEPS,
                   theta_T: float = 0.0, dt: float = 0.1,
                   sub_steps: int = 4):
    """One randomized-start deterministic rollout; returns trial data.

    The trial succeeds when the smoothed path holds the target heading
    (|theta_s| under 2.5 degrees) over at least two consecutive slope
    samples while progressing along the target direction at no less
    than MIN_TRANSLATION_SPEED over that run.
    """
    ecfg = EpisodeConfig(n_steps=n_steps, theta_T=theta_T, dt=dt,
                         sub_steps=sub_steps, randomize_init=True)
    state, _ = reset(ecfg, rng)
    states, work = rollout_deterministic(policy, state, n_steps, theta_T,
                                         dt, sub_steps)
    cents = centroid_series(states)
    sp = smooth_path(cents)
    theta_s = relative_slope(slope_angle(sp), theta_T)
    stages = classify_stages(theta_s)
    if stages.start is None:
        return False, states, work, stages
    pos = sp.positions
    a, b = stages.start, stages.stop
    duration = (b - a) * dt
    p = np.array([math.cos(theta_T), math.sin(theta_T)])
    drift = float((pos[b] - pos[a]) @ p) / duration
    success = bool(b - a >= 2 and drift >= MIN_TRANSLATION_SPEED)
    return success, states, work, stages


def success_rate(policy, trials: int, master_seed: int = 0,
                 n_steps: int = EVAL_STEPS, theta_T: float = 0.0,
                 dt: float = 0.1, sub_steps: int = 4) -> float:
    """Fraction of randomized trials meeting the orientation criterion."""
    if trials < 1:
        raise ValueError("need at least one trial")
    wins = 0
    for t in range(trials):
        ok, _, _, _ = evaluate_trial(policy, trial_rng(master_seed, t),
                                     n_steps, theta_T, dt, sub_steps)
        wins += ok
    return wins / trials


def stroke_loop_area(states, tail: int = 400) -> float:
    """Unsigned area enclosed by the limit-cycle loop in joint-angle space.

    Uses the average per-cycle shoelace area of the last `tail` samples,
    splitting the tail into individual loops at upward zero crossings of
    the first joint angle's deviation from its mean.
    """
    states = np.asarray(states, dtype=float)
    a1 = states[-tail:, 3] - states[-tail:, 2]
    a2 = states[-tail:, 4] - states[-tail:, 3]
    d = a1 - a1.mean()
    ups = np.nonzero((d[:-1] < 0) & (d[1:] >= 0))[0]
    if len(ups) < 2:
        # no discernible cycling: fall back to one shoelace over the tail
        return abs(_shoelace(a1, a2))
    areas = []
    for s0, s1 in zip(ups[:-1], ups[1:]):
        areas.append(abs(_shoelace(a1[s0:s1 + 1], a2[s0:s1 + 1])))
    return float(np.mean(areas))


def _shoelace(x, y) -> float:
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# ------------------------------------------------------------ CSV / JSON


def write_trajectory_csv(path, states, works, dt: float):
    """Raw trajectory table: step, centroid, joint angles, power.

    works[k] is the energy spent on step k; the power column reports the
    step-averaged dissipation works[k] / dt at the step's end sample.
    """
    states = np.asarray(states, dtype=float)
    cents = centroid_series(states)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "x_c", "y_c", "alpha1", "alpha2", "power"])
        for i, row in enumerate(states):
            p = works[i - 1] / dt if i > 0 else 0.0
            w.writerow([i, repr(float(cents[i, 0])), repr(float(cents[i, 1])),
                        repr(float(row[3] - row[2])),
                        repr(float(row[4] - row[3])), repr(float(p))])


def write_smoothed_csv(path, smoothed: SmoothedPath, theta_s, labels: StageLabels):
    """Smoothed path with slope angles and stage labels."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "theta_s", "stage"])
        pos = smoothed.positions
        for i in range(len(pos) - 1):
            stage = "translation" if labels.translation[i] else "steering"
            w.writerow([i, repr(float(pos[i, 0])), repr(float(pos[i, 1])),
                        repr(float(theta_s[i])), stage])


def write_summary_json(path, metrics: TranslationMetrics = None,
                       success: float = None, extra: dict = None):
    doc = {}
    if metrics is not None:
        doc.update({"mean_speed": metrics.mean_speed,
                    "mean_efficiency": metrics.mean_efficiency,
                    "stage_start": metrics.start,
                    "translation_points": metrics.n_points})
    if success is not None:
        doc["success_rate"] = success
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return doc
