"""Relaxation of ideal Fermi reservoirs coupled through shared fermionic modes.

Energies, temperatures and chemical potentials are in units of a reference
temperature, with hbar = k_B = 1.
"""

from .core import (
    FlowSet,
    RegimeSigns,
    ReservoirGeometry,
    ReservoirState,
    SpectralCoupling,
    SystemSpec,
    classify_regime,
    crossover_frequency,
    fermi_occupancy,
    occupancy_difference_reduced,
    reservoir,
    weighted_occupancy,
)
from .dynamics import (
    IntegrationOptions,
    Trajectory,
    integrate,
    mode_occupation_relaxation,
    timescale_separation,
)
from .equilibrium import (
    EquilibriumPoint,
    equilibrium_closed_form_2d,
    solve_equilibrium,
    temperature_bounds_2d,
)
from .errors import (
    EquilibriumSolverError,
    FermifluxError,
    IntegrityError,
    InvalidInputError,
    NumericError,
    QuadratureError,
    ScenarioError,
    SingularJacobianError,
    SommerfeldDomainError,
    StiffnessError,
    UnsupportedCaseError,
)
from .events import Event
from .flows import (
    entropy_production,
    stationary_flows_direct,
    stationary_flows_pairwise,
)
from .runner import run, sweep
from .scenario import Scenario, dump_scenario, load_scenario, with_parameter
from .thermo import (
    energy_content,
    fermi_integral_oracle,
    ode_rhs,
    particle_count,
)

__version__ = "0.1.0"

__all__ = [
    "EquilibriumPoint",
    "EquilibriumSolverError",
    "Event",
    "FermifluxError",
    "FlowSet",
    "IntegrationOptions",
    "IntegrityError",
    "InvalidInputError",
    "NumericError",
    "QuadratureError",
    "RegimeSigns",
    "ReservoirGeometry",
    "ReservoirState",
    "Scenario",
    "ScenarioError",
    "SingularJacobianError",
    "SommerfeldDomainError",
    "SpectralCoupling",
    "StiffnessError",
    "SystemSpec",
    "Trajectory",
    "UnsupportedCaseError",
    "classify_regime",
    "crossover_frequency",
    "dump_scenario",
    "energy_content",
    "entropy_production",
    "equilibrium_closed_form_2d",
    "fermi_integral_oracle",
    "fermi_occupancy",
    "integrate",
    "load_scenario",
    "mode_occupation_relaxation",
    "occupancy_difference_reduced",
    "ode_rhs",
    "particle_count",
    "reservoir",
    "run",
    "solve_equilibrium",
    "stationary_flows_direct",
    "stationary_flows_pairwise",
    "sweep",
    "temperature_bounds_2d",
    "timescale_separation",
    "weighted_occupancy",
    "with_parameter",
]
