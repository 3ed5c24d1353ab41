"""Meta-learned Bayesian regression in latent feature spaces.

The package unifies two views of multi-task regression: Bayesian
linear regression on learned features (:mod:`metabayes.blr`) and
multi-output Gaussian process regression with learned kernels and
means (:mod:`metabayes.gpr`).  Both are trained by maximizing
task-averaged predictive likelihoods (:mod:`metabayes.objectives`)
with a small reverse-mode autodiff engine over float64 matrices
(:mod:`metabayes.autodiff`).

The exact correspondences between the two model families, and the
invariance of predictions under reparametrization of the feature
space, are certified numerically by :mod:`metabayes.certify` and the
``metabayes verify`` command.  The benchmark harness
(:mod:`metabayes.cli`) reruns the method x dataset grid on synthetic
task families from :mod:`metabayes.data`.
"""

from . import (
    autodiff,
    blr,
    certify,
    config,
    data,
    estimators,
    gpr,
    kernels,
    metrics,
    models,
    numerics,
    objectives,
    trainer,
)
from .autodiff import (
    CHECKPOINT_MAGIC,
    FeatureNetSpec,
    Node,
    ParamStore,
    backward,
    constant,
    finite_diff_check,
    forward,
    init_net_params,
    leaf,
    load_checkpoint,
    save_checkpoint,
)
from .blr import (
    BlrPosterior,
    BlrPrior,
    PriorHyper,
    init_prior_hyper,
    posterior_update,
    predict,
    rank1_update,
    transform_prior,
)
from .certify import SizeCaps, run_verification
from .data import (
    CauchyConfig,
    CsvSchema,
    Dist,
    SinusoidConfig,
    SplitPlan,
    Task,
    TaskSet,
    generate_cauchy,
    generate_dataset,
    generate_sinusoid,
    load_tasks_csv,
    save_tasks_csv,
    split_context_test,
)
from .estimators import MetaBLRRegressor, MetaGPRegressor
from .exceptions import (
    DimensionMismatch,
    DivergedLoss,
    EmptyBatch,
    EmptyFile,
    IncompatibleModelLoss,
    IndexOutOfRange,
    InvalidConfig,
    MetaBayesError,
    MissingColumn,
    NonFiniteGradient,
    NonFiniteLoss,
    NonNumericCell,
    NonScalarLoss,
    NotEnoughSamples,
    NotPositiveDefinite,
    NotSquare,
    NotSymmetric,
    ShapeMismatch,
    SingularTransform,
)
from .gpr import GprModel, joint_prior, posterior_predict
from .kernels import KernelSpec, MeanSpec, gram, mean_eval
from .metrics import (
    MetricReport,
    calibration_curve,
    calibration_error,
    evaluate_model,
    normal_quantile,
    rmse,
    test_log_likelihood,
)
from .models import METHODS, build_model, joint_prior_density, predictive
from .numerics import (
    CholFactor,
    KroneckerGaussian,
    chol_psd,
    gaussian_condition,
    matnorm_logpdf,
    mvn_logpdf,
)
from .objectives import (
    LOSS_KINDS,
    LossSpec,
    TaskBatch,
    TaskDraw,
    chain_rule_identity,
    evaluate_loss,
)
from .trainer import OptimHyper, TrainHistory, adamw_step, init_opt_state, train

__version__ = "1.0.0"
