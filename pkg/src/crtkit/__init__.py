"""Conditional randomization tests for feature-level conditional independence.

Core pieces: domain types and deterministic seeding (crtkit.core),
synthetic benchmark generators with oracle conditional samplers
(crtkit.dgp), predictive models and conditional samplers (crtkit.models),
the test engine (crtkit.crt), the experiment harness (crtkit.evaluation),
and the external-model bridge client (crtkit.bridge).
"""

from crtkit.core import (
    CONTINUOUS,
    CrtConfig,
    CrtResult,
    Dataset,
    FeatureKind,
    SplitIndices,
    derive_seed,
    split_dataset,
)
from crtkit.crt import (
    FeatureScan,
    TestPlan,
    elpd,
    mc_pvalue,
    run_crt,
    test_all_features,
)
from crtkit.dgp import (
    ALL_NAMES,
    TABLE1_NAMES,
    DgpInstance,
    DgpSpec,
    NoOracleError,
    generate,
    oracle_conditional,
    oracle_sampler,
)
from crtkit.evaluation import (
    ExperimentConfig,
    ExperimentReport,
    ecdf,
    qq_uniform,
    run_experiment,
    table_report,
)
from crtkit.models import (
    ConditionalSampler,
    PredictiveModel,
    QuantileGrid,
    fit_categorical_sampler,
    fit_knn_model,
    fit_linear_gaussian,
    fit_quantile_grid_sampler,
)

__version__ = "0.1.0"

__all__ = [
    "CONTINUOUS",
    "ALL_NAMES",
    "TABLE1_NAMES",
    "ConditionalSampler",
    "CrtConfig",
    "CrtResult",
    "Dataset",
    "DgpInstance",
    "DgpSpec",
    "ExperimentConfig",
    "ExperimentReport",
    "FeatureKind",
    "FeatureScan",
    "NoOracleError",
    "PredictiveModel",
    "QuantileGrid",
    "SplitIndices",
    "TestPlan",
    "derive_seed",
    "ecdf",
    "elpd",
    "fit_categorical_sampler",
    "fit_knn_model",
    "fit_linear_gaussian",
    "fit_quantile_grid_sampler",
    "generate",
    "mc_pvalue",
    "oracle_conditional",
    "oracle_sampler",
    "qq_uniform",
    "run_crt",
    "run_experiment",
    "split_dataset",
    "table_report",
    "test_all_features",
    "__version__",
]
