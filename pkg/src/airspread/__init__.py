"""Indoor airborne pathogen exposure model.

Closed-form droplet concentration fields for three contamination channels
(proximity, background air, surfaces), the resulting infection
probabilities, a finite-volume reference solver validating the closed
form, and a grid-world workplace simulation with seeded Monte Carlo
sweeps.
"""

from .abm import (
    AgentState,
    CellKind,
    InfectionEvent,
    RunStatistics,
    SimulationConfig,
    TransmissionRates,
    World,
    initialize,
    run_experiment,
    run_point,
    run_replication,
    step,
)
from .dispersion import (
    Activity,
    BackgroundField,
    DispersionParams,
    Mask,
    PathogenSurfaceConstants,
    ProximityField,
    SourceProfile,
    SurfaceState,
    background_concentration,
    contamination_threshold_time,
    disinfect,
    effective_source_rate,
    normalization_constant,
    proximity_concentration,
    surface_density,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    InvalidParameterError,
    InvariantViolation,
    NumericalError,
    WorldParseError,
)
from .exposure import (
    ExposureParams,
    combined_inhalation_probability,
    infection_probability_inhalation,
    infection_probability_surface,
    inhaled_count,
    per_step_direct_probability,
    per_step_surface_probability,
)
from .pde import (
    PdeSolution,
    RadialGrid,
    compare,
    evolve,
    half_life_source_off,
    steady_state,
    validation_report,
)
from .scenario_io import ExperimentConfig, load_world, parse_config, parse_world, render_world

__version__ = "0.1.0"
