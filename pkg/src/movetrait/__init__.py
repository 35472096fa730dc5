"""Movement-to-trait pipeline.

From raw 3D marker trajectories to correntropy covariance features, to
trained PCR / Bayesian ridge regressors for scalar traits, to per-joint
importance profiles derived from the learned weights.
"""
from .mocap import (
    JointTake,
    Kind,
    MarkerTake,
    SkeletonMap,
    TakeFormatError,
    derive_joints,
    load_take,
    velocity,
)
from .features import (
    CorrentropyMatrix,
    FeatureMatrix,
    FeatureVector,
    correntropy,
    correntropy_matrix,
    extract_features,
    gaussian_normalize,
    unvectorize_lower,
    vectorize_lower,
)
from .regression import (
    BayesRidgeModel,
    Dataset,
    DatasetMode,
    PcaBasis,
    PcrModel,
    Prediction,
    build_dataset,
    fit_bayes_ridge,
    fit_pca,
    fit_pcr,
    predict,
)
from .evaluation import (
    CvResult,
    FoldPlan,
    ModelSpec,
    ScoreTable,
    cross_validate,
    make_fold_plan,
    r2,
    rmse,
    spearman,
)
from .importance import (
    JointImportance,
    importance_from_model,
    importance_report,
    joint_importance,
    minmax_normalize,
    reduce_to_groups,
)
from .synth import SynthSpec, TraitCoupling, generate, iter_takes, sample_traits

__version__ = "0.1.0"
