"""Delay-infectivity / delay-recovery SIR model.

Submodules:

- ``delay_exponential``: the delay exponential function and the survival,
  density and infectivity curves built from it.
- ``dde_core``: fixed-step RK4 for systems with two constant delays.
- ``sir_models``: the epidemic model, its reductions and steady states.
- ``ctrw_oracle``: agent-based Monte Carlo of the underlying random process.
- ``metrics``, ``config``, ``csvio``, ``cli``: scenario driver.
"""

from .dde_core import EpidemicState, StepConfig, Trajectory, integrate, sample
from .delay_exponential import (
    DexpParams,
    dexp_eval,
    density_psi,
    infectivity_rho,
    sample_recovery_age,
    survival_phi,
    validate_survival,
)
from .errors import (
    ConfigError,
    DelaySIRError,
    DomainError,
    IntegrationError,
    NumericalError,
    PrecisionLossError,
    StepSizeError,
)
from .sir_models import (
    ModelParams,
    SteadyState,
    make_reduction,
    rhs_full,
    simulate,
    steady_disease_free,
    steady_endemic,
    theta_survival,
)

__version__ = "0.1.0"
