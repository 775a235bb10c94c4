"""Totally asymmetric zero-range process in a site-disordered environment."""

from .configuration import Configuration
from .coupling import (
    CoupledConfiguration,
    CoupledResult,
    DiscrepancyProfile,
    SandwichPaths,
    TaggedPath,
    discrepancy_profile,
    sandwich_run,
    simulate_coupled,
    track_second_class,
    track_second_classes,
)
from .dynamics import (
    INDICATOR,
    BoundarySpec,
    RateFunctionSpec,
    SimResult,
    bond_current,
    departure_times,
    simulate,
)
from .environment import (
    INFINITE,
    EnvSpec,
    Environment,
    build_env,
    critical_density,
    density_slope,
    expected_density,
    fugacity_for_density,
    iid_critical_density,
    iid_expected_density,
    is_infinite,
    sample_iid_env,
    second_class_velocity,
)
from .errors import *  # noqa: F401,F403
from .experiments import (
    ConvergenceReport,
    StatReport,
    burke_experiment,
    burke_test,
    convergence_experiment,
    convergence_verdict,
    domination_check,
    estimate_left_density,
    sandwich_experiment,
    speed_experiment,
    stationarity_test,
    stationarity_verdict,
)
from .kernel import BACKEND
from .measures import (
    ProductGeometric,
    marginal_mean,
    marginal_pmf,
    marginal_variance,
    sample_configuration,
    sample_ordered_pair,
)

__version__ = "0.1.0"
