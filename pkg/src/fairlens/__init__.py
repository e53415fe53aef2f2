"""fairlens: quantitative test-fairness criteria and an audit CLI."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DEFAULT_TOLERANCE,
    ConfusionMatrix,
    CorrelationTriple,
    CriterionReport,
    Dataset,
    DatasetError,
    Record,
    ThresholdMap,
    correlations,
    dump_dataset,
    load_dataset,
    point_biserial,
    pooled_ols,
    read_dataset,
)
from .correlation import (  # noqa: E402
    compromise_curve,
    culturally_optimum,
    darlington_check,
    darlington_targets,
    incompatibility_scan,
)
from .regression import (  # noqa: E402
    BinSpec,
    calibration_check,
    cleary_bias,
    converse_calibration_check,
    converse_cleary,
    einhorn_bass,
    jones_mean_fair,
)
from .classification import (  # noqa: E402
    InfeasibleThresholds,
    ThorndikianParams,
    cole_tpr,
    confusion_by_group,
    guion_individual,
    jones_at_n,
    jones_general_standard,
    linn_ppv,
    peterson_novick_separation,
    peterson_novick_sufficiency,
    solve_fair_thresholds,
    thorndike_ratio,
    thorndikian,
    within_group_percentile,
)
from .dif import dif_analyze, feature_dif  # noqa: E402
