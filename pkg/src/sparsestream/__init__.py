"""One-pass streaming sparse regression.

The learners keep O(d) state and do two passes over ``d`` per example; the
per-step kernels come from a compiled extension when it is built
(``sparsestream.kernels.BACKEND``) and from numpy otherwise.
"""

from .baselines import (
    LassoProblem,
    lasso_cd_fit,
    lasso_kkt_residual,
    pnorm_init,
    pnorm_rda_step,
    register_learner,
    sgd_init,
    sgd_step,
)
from .core import Example, LossKind, LossModel, WeightVector, loss_gradient, loss_value, soft_threshold
from .datagen import Design, StreamSpec, classic_irrep, irrep_rho, make_stream, make_wstar
from .errors import ConfigError, DataError, InvalidInputError, NumericalError, SparseStreamError
from .harness import ExperimentConfig, SweepConfig, rate_fit, report, run_experiment, sweep
from .kernels import BACKEND
from .metrics import param_error, support_metrics
from .ssr import (
    Mode,
    Schedule,
    SsrHyperparams,
    TheoryMode,
    eta_from_alpha,
    lambda_schedule,
    ssr_avg_step,
    ssr_init,
    ssr_step,
    theory_lambda,
)

__version__ = "0.1.0"
