"""Conformalized quantile and median regression with SGD-trained linear
models, an exact synthetic oracle, closed-form efficiency bounds, and an
experiment harness for measuring interval-length scaling in the training
size, calibration size, and miscoverage level."""

from .analysis import (
    ExperimentRecord,
    FitResult,
    SweepPlan,
    SweepResult,
    fit_loglog,
    run_cell,
    run_sweep,
)
from .conformal import (
    CalibrationInfeasibleError,
    CalibrationResult,
    CqrModelPair,
    PredictionInterval,
    calibrate,
    cmr_interval,
    cmr_score,
    conformal_quantile_index,
    coverage,
    cqr_interval,
    cqr_score,
    length_deviation,
)
from .core import (
    Dataset,
    DistributionSpec,
    LinearQuantileModel,
    Sample,
    pinball_loss,
    pinball_subgradient,
    predict,
)
from .optimizer import (
    Schedule,
    SgdConfig,
    TrainReport,
    constant,
    inverse_time,
    project_ball,
    sgd_train,
    successive_halving_tune,
)
from .synthdata import (
    SyntheticSpec,
    conditional_cdf,
    conditional_pdf,
    conditional_quantile,
    draw_spec,
    oracle_interval_length,
    oracle_theta,
    sample,
)

__version__ = "0.1.0"
