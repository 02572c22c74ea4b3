"""Prescribed open-loop strokes for the three-link swimmer.

The classic stroke moves one hinge at a time around a rectangular loop
in the (alpha1, alpha2) plane. Traversed one way the swimmer translates
along its axis; biasing the rectangle toward one side of zero makes the
net motion curve, giving clockwise or counterclockwise circular paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import ALPHA_LIMIT
from .dynamics import (
    JointRates,
    SwimmerState,
    integrate_segment,
    state_centroid,
)


@dataclass(frozen=True)
class GaitSpec:
    """A closed joint-angle loop traversed at piecewise-constant rate.

    ``phases`` is an ordered list of (joint, target_angle, fraction):
    during each segment exactly the named joint (0 or 1) ramps linearly
    to ``target_angle`` over ``fraction`` of the period, the other joint
    holding still. The loop must close on the starting corner.
    """

    kind: str
    alpha_min: float
    alpha_max: float
    period: float
    phases: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.phases:
            raise ValueError("gait needs at least one phase segment")
        fr = sum(p[2] for p in self.phases)
        if abs(fr - 1.0) > 1e-12:
            raise ValueError(f"segment fractions sum to {fr}, expected 1")
        for joint, target, fraction in self.phases:
            if joint not in (0, 1):
                raise ValueError(f"joint index {joint} out of range")
            if not -ALPHA_LIMIT <= target <= ALPHA_LIMIT:
                raise ValueError(f"target angle {target} outside joint range")
            if fraction <= 0:
                raise ValueError("segment fractions must be positive")
        self.start_angles()  # raises if a joint never appears

    def start_angles(self):
        """Joint angles at phase 0: each joint's last commanded target.

        Defining the start this way makes every phase table a closed
        loop by construction.
        """
        a = [None, None]
        for joint, target, _ in reversed(self.phases):
            if a[joint] is None:
                a[joint] = target
            if a[0] is not None and a[1] is not None:
                break
        if a[0] is None or a[1] is None:
            raise ValueError("every joint must appear in the phase table")
        return float(a[0]), float(a[1])


@dataclass(frozen=True)
class CycleMetrics:
    """Per-cycle averages measured after the transient first cycle."""

    displacement: np.ndarray  # net centroid displacement per cycle
    rotation: float  # net change of theta2 per cycle, radians
    mean_speed_x: float
    work: float
    efficiency: float


def purcell_gait(alpha_min: float = -math.pi / 3, alpha_max: float = math.pi / 3,
                 period: float = 8.0) -> GaitSpec:
    """Symmetric rectangular stroke; translates along the body axis.

    The loop starts at the (alpha_min, alpha_min) corner, where the
    shape is mirror-symmetric about the middle link; started there with
    a horizontal heading, the net motion is horizontal by symmetry.
    """
    q = 0.25
    return GaitSpec(kind="purcell_symmetric", alpha_min=alpha_min,
                    alpha_max=alpha_max, period=period,
                    phases=((0, alpha_max, q), (1, alpha_max, q),
                            (0, alpha_min, q), (1, alpha_min, q)))


def asymmetric_gait(alpha_min: float, alpha_max: float, period: float = 8.0,
                    kind: str = "custom") -> GaitSpec:
    return GaitSpec(kind=kind, alpha_min=alpha_min, alpha_max=alpha_max,
                    period=period,
                    phases=((0, alpha_min, 0.25), (1, alpha_max, 0.25),
                            (0, alpha_max, 0.25), (1, alpha_min, 0.25)))


def asymmetric_cw(period: float = 8.0) -> GaitSpec:
    """Loop biased to [-pi/2, pi/6]: net clockwise turning."""
    return asymmetric_gait(-math.pi / 2, math.pi / 6, period, "asymmetric_cw")


def asymmetric_ccw(period: float = 8.0) -> GaitSpec:
    """Loop biased to [-pi/6, pi/2]: net counterclockwise turning."""
    return asymmetric_gait(-math.pi / 6, math.pi / 2, period, "asymmetric_ccw")


def canonical_gait(name: str, period: float = 8.0) -> GaitSpec:
    table = {
        "purcell_symmetric": purcell_gait,
        "asymmetric_cw": asymmetric_cw,
        "asymmetric_ccw": asymmetric_ccw,
    }
    if name not in table:
        raise ValueError(f"unknown gait {name!r}; choose from {sorted(table)}")
    return table[name](period=period)


def gait_start_state(spec: GaitSpec, x1: float = 0.0, y1: float = 0.0,
                     theta2: float = 0.0) -> SwimmerState:
    """Swimmer state sitting on the loop's starting corner."""
    a1, a2 = spec.start_angles()
    return SwimmerState(x1, y1, theta2 - a1, theta2, theta2 + a2)


def gait_rates(spec: GaitSpec, phase: float) -> JointRates:
    """Joint rates at a phase fraction in [0, 1).

    Piecewise constant: during each segment one joint ramps to its
    target at the uniform rate that completes the ramp exactly when the
    segment ends.
    """
    if not 0.0 <= phase < 1.0:
        raise ValueError(f"phase {phase} outside [0, 1)")
    angles = list(spec.start_angles())
    acc = 0.0
    for k, (joint, target, fraction) in enumerate(spec.phases):
        # the final segment absorbs float slack in the running sum
        if phase < acc + fraction or k == len(spec.phases) - 1:
            rate = (target - angles[joint]) / (fraction * spec.period)
            out = [0.0, 0.0]
            out[joint] = rate
            return JointRates(out[0], out[1])
        angles[joint] = target
        acc += fraction
    raise AssertionError("unreachable: fractions sum to 1")


def run_gait(spec: GaitSpec, start: SwimmerState, cycles: int, dt: float = 0.1,
             sub_steps: int = 4):
    """Integrate whole stroke cycles and measure per-cycle behavior.

    Each phase segment is stepped with an integer number of equal steps
    no longer than dt, so segment boundaries (the loop corners) are hit
    exactly. The first cycle is treated as transient and excluded from
    the averages.

    Returns (trajectory, CycleMetrics); the trajectory holds every
    sampled SwimmerState including the start.
    """
    if cycles < 1:
        raise ValueError("need at least one cycle")
    states = [start]
    work_per_cycle = []
    marks = [0]  # trajectory indices of cycle boundaries

    state = start
    for _ in range(cycles):
        w = 0.0
        for joint, target, fraction in spec.phases:
            seg_T = fraction * spec.period
            n = max(1, int(math.ceil(seg_T / dt - 1e-9)))
            h = seg_T / n
            # rate from the joint's ACTUAL angle: a start away from the
            # loop is pulled onto it during the (discarded) first cycle
            current = state.alpha1 if joint == 0 else state.alpha2
            rate = (target - current) / seg_T
            rates = JointRates(rate if joint == 0 else 0.0,
                               rate if joint == 1 else 0.0)
            for _ in range(n):
                seg = integrate_segment(state, rates, h, sub_steps)
                state = seg.end
                w += seg.work
                states.append(state)
        work_per_cycle.append(w)
        marks.append(len(states) - 1)

    measured = range(1, cycles) if cycles > 1 else range(cycles)
    disp = np.zeros(2)
    rot = 0.0
    work = 0.0
    for k in measured:
        a = states[marks[k]]
        b = states[marks[k + 1]]
        disp += state_centroid(b) - state_centroid(a)
        rot += b.theta2 - a.theta2
        work += work_per_cycle[k]
    m = len(measured)
    disp /= m
    rot /= m
    work /= m

    speed = float(np.hypot(*disp)) / spec.period
    metrics = CycleMetrics(
        displacement=disp,
        rotation=rot,
        mean_speed_x=float(disp[0]) / spec.period,
        work=work,
        efficiency=cycle_efficiency(speed, work / spec.period),
    )
    return states, metrics


def cycle_efficiency(mean_speed: float, mean_power: float,
                     gamma: float = 0.5) -> float:
    """Ratio of towing power to actual power: gamma v^2 / mean_power.

    The reference is the power needed to drag the straightened swimmer
    at the same mean speed along its axis.
    """
    if mean_speed == 0.0:
        return 0.0
    if mean_power <= 0.0:
        raise ValueError("mean power must be positive for a moving gait")
    return gamma * mean_speed * mean_speed / mean_power
