"""Safe Bayesian-optimization bolus insulin dose guidance."""

from .acquisition import (
    DoseDecision,
    SafeBOConfig,
    SafeRegionView,
    acquisition_base,
    barrier_value,
    beta_schedule,
    constraint_lcb,
    reveal_safe_region,
    select_dose,
)
from .advisor import (
    AdvisorConfig,
    AdvisorState,
    Context,
    Episode,
    MealAnnouncement,
    encode_context,
    window_bounds,
)
from .gp import (
    GaussianProcess,
    HyperBounds,
    InputPoint,
    KernelSpec,
    Observation,
    fit_hyperparameters,
    kernel_eval,
)
from .simulator import (
    CgmModel,
    PatientParams,
    PatientState,
    basal_state,
    cgm_read,
    derivatives,
    generate_cohort,
    nominal_params,
    step,
)
from .trial import (
    TrialProtocol,
    TrialReport,
    classify_hypo_episodes,
    quantile_band,
    run_trial,
    time_in_range,
)

__version__ = "0.1.0"
