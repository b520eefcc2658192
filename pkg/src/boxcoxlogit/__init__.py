"""Logistic regression with a Box-Cox transformed exposure."""

__version__ = "0.1.0"

from .core import (
    Dataset,
    LognormalSpec,
    ModelParams,
    boxcox,
    boxcox_d2lambda,
    boxcox_dlambda,
    expit,
    hessian,
    log_likelihood,
    score,
)
from .exceptions import (
    BoxCoxError,
    ConvergenceError,
    DataValidationError,
    DomainError,
    NumericalError,
    SeparationError,
    SingularInformationError,
)
from .estimation import (
    FitResult,
    FixedLambdaFit,
    PLProfile,
    fit_fixed_lambda,
    fit_mle,
    irls_fixed_lambda,
    profile_likelihood,
)
from .asymptotics import (
    EffectEstimate,
    InfoMatrix,
    asd_median_effect,
    average_effect,
    avar_lambda_limit_oracle,
    avar_params,
    fisher_info,
    fisher_info_ghq,
    instantaneous_risk_rate,
    median_effect,
    median_effect_avar,
    median_effect_ci,
    sample_size_for_se,
)
from .misspec import (
    AreSurface,
    MisspecResult,
    are,
    are_surface,
    empirical_are,
    limiting_gamma,
    misspec_cell,
    sandwich_avar,
)
from .design import (
    SettingSpec,
    SimulationReport,
    derive_truth,
    generate_dataset,
    parse_setting_id,
    run_bias_study,
    table1_settings,
)
from .evaluation import (
    CvResult,
    GofResult,
    bin_local_risk,
    cross_validate,
    hosmer_lemeshow,
    stratified_kfold,
)
