"""GOSPA-driven sensor management for a single Bernoulli target."""
from .errors import (BudgetExceededError, ConfigError, DegeneratePosteriorError, HorizonError,
                     PlannerError, SetTooLargeError)
from .metric import GospaBreakdown, GospaParams, gospa
from .msgospa import Chosen, MsGospaResult, mms_gospa, ms_gospa_estimate, ms_gospa_phi
from .planners import (PlanningConfig, PlanResult, Policy, plan_baseline_mse, plan_myopic,
                       plan_optimal, plan_suboptimal)
from .sampling import (SamplerConfig, amms_gospa_efficient, amms_gospa_general,
                       conditional_amms_gospa)
from .sensor import NO_OBSERVATION, Action, MeasurementScan, SensorModel
from .target import (BernoulliDiracPrior, PosteriorState, elpf_likelihood, prior_probability,
                     update_posterior)

__version__ = "0.1.0"
