"""Dimensionless dynamics of a three-link swimmer at zero Reynolds number.

The swimmer is a chain of three rigid slender links of equal length
l = 1/3 (total length 1) joined by two actuated hinges. In the Stokes
regime, resistive force theory gives each link a local drag density

    f = -(C_par t t + C_perp n n) . u

with drag anisotropy gamma = C_par / C_perp = 1/2 for a slender body.
Setting the total force and torque on the swimmer to zero and appending
the kinematic chain constraints yields a 9x9 linear system

    H(X, Y, Theta) . (Xdot, Ydot, Thetadot) = q,

where only the last two entries of q are nonzero and equal the
commanded joint rates. Solving it maps joint-rate actuation to rigid
body motion: the swimmer's translation and rotation are slaved to its
shape change, as required by kinematic reversibility.

Only the reduced state (x1, y1, theta1, theta2, theta3) is integrated;
the remaining link positions follow from the chain geometry exactly, so
the constraints never drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import ALPHA_LIMIT, GAMMA_DEFAULT, LINK_LENGTH

RATE_CAP = 1.5  # |alpha_dot| bound on commanded joint rates
DEFAULT_DT = 0.1  # action-step duration
DEFAULT_SUBSTEPS = 4  # RK4 sub-steps per action step


class InvalidStateError(ValueError):
    """A state or input contained non-finite values."""


class SingularSystemError(ArithmeticError):
    """The mobility matrix was singular or too ill-conditioned to trust.

    The ``condition`` attribute carries the solver's max/min pivot-ratio
    estimate (-1.0 when a pivot vanished outright).
    """

    def __init__(self, condition: float):
        super().__init__(f"mobility system unsolvable (condition estimate {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class SwimmerState:
    """Reduced configuration: link-1 left end plus the three orientations."""

    x1: float
    y1: float
    theta1: float
    theta2: float
    theta3: float

    @property
    def alpha1(self) -> float:
        return self.theta2 - self.theta1

    @property
    def alpha2(self) -> float:
        return self.theta3 - self.theta2

    def as_array(self) -> np.ndarray:
        # dtype pinned so integer-valued states cannot reach the kernels
        # as int arrays, which would truncate every in-place update
        return np.array([self.x1, self.y1, self.theta1, self.theta2,
                         self.theta3], dtype=float)

    @staticmethod
    def from_array(s) -> "SwimmerState":
        return SwimmerState(float(s[0]), float(s[1]), float(s[2]), float(s[3]), float(s[4]))

    def require_finite(self) -> "SwimmerState":
        if not all(map(math.isfinite, (self.x1, self.y1, self.theta1, self.theta2, self.theta3))):
            raise InvalidStateError(f"non-finite swimmer state {self}")
        return self


@dataclass(frozen=True)
class FullConfiguration:
    """Left-end coordinates and orientation of every link.

    X[i+1] - X[i] = (1/3) cos Theta[i] and likewise for Y, exactly: the
    arrays are always rebuilt from a reduced state, never integrated.
    """

    X: np.ndarray
    Y: np.ndarray
    Theta: np.ndarray


@dataclass(frozen=True)
class JointRates:
    """Commanded hinge rates (alpha1_dot, alpha2_dot)."""

    alpha1_dot: float
    alpha2_dot: float

    def require_valid(self) -> "JointRates":
        if not (math.isfinite(self.alpha1_dot) and math.isfinite(self.alpha2_dot)):
            raise InvalidStateError(f"non-finite joint rates {self}")
        return self


@dataclass(frozen=True)
class MobilitySystem:
    """The assembled linear system H . rates = q with its drag ratio."""

    H: np.ndarray
    q: np.ndarray
    gamma: float = GAMMA_DEFAULT


@dataclass(frozen=True)
class BodyRates:
    """Generalized velocities of all three links."""

    Xdot: np.ndarray
    Ydot: np.ndarray
    Thetadot: np.ndarray

    def as_vector(self) -> np.ndarray:
        """Solver ordering (xdot1..3, ydot1..3, thetadot1..3)."""
        return np.concatenate([self.Xdot, self.Ydot, self.Thetadot])


@dataclass(frozen=True)
class StepSegment:
    """One action step: endpoint states plus the work dissipated en route."""

    start: SwimmerState
    end: SwimmerState
    rates: JointRates
    dt: float
    work: float


def reconstruct_full_configuration(state: SwimmerState) -> FullConfiguration:
    """Rebuild all link endpoints from the reduced state.

    Parameters
    ----------
    state : SwimmerState
        Reduced configuration (x1, y1, theta1, theta2, theta3).

    Returns
    -------
    FullConfiguration
        Chain-consistent (X, Y, Theta) with l = 1/3.
    """
    state.require_finite()
    x3 = np.empty(3)
    y3 = np.empty(3)
    th3 = np.empty(3)
    _kernels.reconstruct_into(state.as_array(), x3, y3, th3)
    return FullConfiguration(X=x3, Y=y3, Theta=th3)


def assemble_mobility_system(config: FullConfiguration, rates: JointRates,
                             gamma: float = GAMMA_DEFAULT) -> MobilitySystem:
    """Build the 9x9 mobility matrix and its right-hand side.

    Rows 1-3 (0-based 0-2) express zero net drag force (x, y) and zero
    net torque about the origin; rows 4-9 tie neighbouring link
    endpoints together and the orientation differences to the commanded
    joint rates.
    """
    rates.require_valid()
    H = np.empty((9, 9))
    q = np.empty(9)
    _kernels.assemble_into(np.asarray(config.X, dtype=float),
                           np.asarray(config.Y, dtype=float),
                           np.asarray(config.Theta, dtype=float),
                           rates.alpha1_dot, rates.alpha2_dot, gamma, H, q)
    return MobilitySystem(H=H, q=q, gamma=gamma)


def solve_body_rates(system: MobilitySystem) -> BodyRates:
    """Solve H . rates = q by partial-pivot Gaussian elimination.

    Raises
    ------
    SingularSystemError
        If a pivot vanishes or the max/min pivot ratio exceeds 1e12.
    """
    A = system.H.copy()
    b = system.q.copy()
    cond = _kernels.gauss_solve(A, b)
    if cond < 0.0 or cond > _kernels.COND_LIMIT:
        raise SingularSystemError(cond)
    return BodyRates(Xdot=b[0:3].copy(), Ydot=b[3:6].copy(), Thetadot=b[6:9].copy())


def instantaneous_power(config: FullConfiguration, body_rates: BodyRates,
                        gamma: float = GAMMA_DEFAULT) -> float:
    """Total rate of work against drag, integrated in closed form.

    The drag density is linear in the local material velocity, so the
    power density along each link is quadratic in arclength and its
    integral has an exact polynomial expression; no numerical quadrature
    is involved.
    """
    return float(_kernels.power_from(np.asarray(config.X, dtype=float),
                                     np.asarray(config.Y, dtype=float),
                                     np.asarray(config.Theta, dtype=float),
                                     body_rates.as_vector(), gamma))


def integrate_segment(state: SwimmerState, rates: JointRates, dt: float,
                      sub_steps: int = DEFAULT_SUBSTEPS,
                      gamma: float = GAMMA_DEFAULT,
                      alpha_limit: float = ALPHA_LIMIT) -> StepSegment:
    """Advance one action step of constant joint rates, recording work.

    Classical RK4 on the reduced state with ``sub_steps`` internal
    steps; the dissipated power is accumulated across the RK4 stages
    with Simpson weights, so the reported work carries the integrator's
    own order of accuracy.

    A joint reaching +-2pi/3 is pinned there and its rate zeroed for
    the remainder of the step. Because the hinge angles respond to the
    commanded rates exactly linearly, the crossing times are exact and
    the step is split there rather than overshooting.
    """
    state.require_finite()
    rates.require_valid()
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    s = state.as_array()
    scratch = _scratch()
    work, status, cond = _kernels.step_with_limits(
        s, rates.alpha1_dot, rates.alpha2_dot, dt, sub_steps, gamma, alpha_limit,
        *scratch)
    if status != _kernels.OK:
        raise SingularSystemError(cond)
    return StepSegment(start=state, end=SwimmerState.from_array(s),
                       rates=rates, dt=dt, work=work)


def integrate_step(state: SwimmerState, rates: JointRates, dt: float,
                   sub_steps: int = DEFAULT_SUBSTEPS) -> SwimmerState:
    """Advance one action step and return only the resulting state."""
    return integrate_segment(state, rates, dt, sub_steps).end


def step_work(segment: StepSegment) -> float:
    """Work dissipated over an integrated action step (always >= 0)."""
    return segment.work


def centroid(config: FullConfiguration) -> np.ndarray:
    """Geometric centroid: the mean of the three link midpoints."""
    mid_x = config.X + 0.5 * LINK_LENGTH * np.cos(config.Theta)
    mid_y = config.Y + 0.5 * LINK_LENGTH * np.sin(config.Theta)
    return np.array([mid_x.mean(), mid_y.mean()])


def state_centroid(state: SwimmerState) -> np.ndarray:
    """Centroid straight from a reduced state."""
    out = np.empty(2)
    _kernels.centroid_of(state.as_array(), out)
    return out


def _scratch():
    """Work arrays for the stepping kernel, freshly allocated."""
    return (np.empty(3), np.empty(3), np.empty(3),
            np.empty((9, 9)), np.empty((9, 9)), np.empty(9), np.empty(9),
            np.empty(6), np.empty(6), np.empty(6), np.empty(6), np.empty(5))
