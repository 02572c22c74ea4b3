"""Three-link Stokes swimmer: dynamics, gaits, and learned navigation."""

from .dynamics import (
    ALPHA_LIMIT,
    DEFAULT_DT,
    DEFAULT_SUBSTEPS,
    GAMMA_DEFAULT,
    LINK_LENGTH,
    RATE_CAP,
    BodyRates,
    FullConfiguration,
    InvalidStateError,
    JointRates,
    MobilitySystem,
    SingularSystemError,
    StepSegment,
    SwimmerState,
    assemble_mobility_system,
    centroid,
    instantaneous_power,
    integrate_segment,
    integrate_step,
    reconstruct_full_configuration,
    solve_body_rates,
    state_centroid,
    step_work,
)

__version__ = "0.1.0"
