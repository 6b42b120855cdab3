"""placelink: knowledge transfer between black-box place-recognition models.

A student classifier reconstructs pseudo-training sets from query-only
teachers and retrains by distillation; a separate statistics-fusion path
merges robots' knowledge exactly through additive sufficient statistics and a
closed-form ridge solve.
"""

from .core import (
    ClassId,
    ConfigError,
    CostDelta,
    CostLedger,
    DataError,
    Dataset,
    LabeledSample,
    NumericError,
    PlaceClassSet,
    PlacelinkError,
    PseudoSample,
    PseudoSet,
    l1_normalize,
    one_hot,
    shannon_entropy,
    top1,
)
from .datagen import SessionSpec, WorldModel, build_world, generate_session, load_csv_dataset
from .fusion import (
    AnalyticClassifier,
    DsiConfig,
    SufficientStats,
    accumulate,
    accumulate_batch,
    deserialize_stats,
    dsi_session_run,
    filter_by_entropy,
    merge,
    predict_analytic,
    ridge_oracle,
    serialize_stats,
    solve,
)
from .models import (
    BlackBoxHandle,
    ClassifierParams,
    TrainConfig,
    blackbox_from_model,
    distill,
    load_model,
    predict,
    predict_proba,
    save_model,
    train_supervised,
)
from .partition import (
    CombinatorialPartition,
    GridSpec,
    PartitionPattern,
    assign_combinatorial,
    assign_grid_cell,
    build_class_set,
)
from .sampling import (
    KHotRRF,
    SamplerConfig,
    SamplerContext,
    decode_khot,
    encode_khot,
    khot_densify,
    khot_sparsify,
    load_pseudo_dump,
    reconstruct_pseudo_set,
    reconstruct_self_set,
    rrf,
    sample_entropy,
    sample_mixup,
    sample_prior,
    sample_replay,
    sample_rr,
    sample_us,
    save_pseudo_dump,
)
from .transfer import (
    Scenario,
    ScenarioRun,
    StageResult,
    evaluate,
    forgetting_report,
    make_scenario,
    run_scenario,
    train_teachers,
)

__version__ = "0.1.0"
