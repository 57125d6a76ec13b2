"""Binary classification with a reject option via conformal prediction.

Prediction sets over two labels are turned into a classifier that accepts
only singleton predictions; the error rate of the accepted predictions is
then a known, distribution-free quantity that the estimators and the
experiment harness in this package compute and verify.
"""

from .core import (
    Bag,
    DataFormatError,
    EmptyDataError,
    Example,
    FeatureValueError,
    GaussianMixtureSpec,
    LabelCardinalityError,
    MissingColumnError,
    PValuePair,
    RandomSource,
    ScorePool,
    check_epsilon_grid,
    check_significance_level,
    generate_synthetic,
    load_csv,
    make_score_pool,
    stack_examples,
)
from .nonconformity import (
    KnnMarginMeasure,
    KnnScorer,
    NearestNeighborMeasure,
    NearestNeighborScorer,
    fit_knn_scorer,
    margin_score,
    nn_score,
)
from .transductive import (
    OnlineState,
    PredictionSet,
    acceptance_interval,
    confidence_credibility,
    prediction_set,
    run_online,
    smoothed_p_values,
)
from .mondrian import (
    blind_label_conditional_p_values,
    constant_taxonomy,
    feature_threshold_taxonomy,
    label_taxonomy,
    mondrian_p_value,
    mondrian_p_values,
    mondrian_prediction_set,
)
from .inductive import (
    BatchSchedule,
    EpsilonDeltaPolicy,
    IcpModel,
    UnusableCorrectionError,
    corrected_epsilon,
    fit_icp,
    icp_p_value,
    icp_p_values_block,
    next_batch,
    semi_online_p_value,
    validity_slack,
)
from .reject import (
    CurveRow,
    CurveTable,
    RejectOutcome,
    SetSizeCounts,
    SigmaEstimate,
    SingletonRateError,
    build_curve,
    chow_baseline,
    curve_from_counts,
    reject_decision,
    sigma_by_category,
    sigma_exact,
    sigma_hat,
    sigma_label_conditional,
    sigma_tilde,
)
from .harness import (
    CheckResult,
    ConfigError,
    ExperimentConfig,
    RunReport,
    ValidationReport,
    aggregate_tables,
    default_epsilon_grid,
    emit_reports,
    read_curve_csv,
    run_experiment,
    run_fcp,
    run_icp_batch,
    run_icp_offline,
    validate,
    write_curve_csv,
)

__version__ = "0.1.0"
