"""Anomaly-adjusted ISP traffic forecasting.

Ingest five-minute traffic telemetry, detect and mitigate outliers,
window the series for supervised learning, train boosted-tree / SGD base
models and their stacked ensemble, and report MAPE grids across window
lengths with and without outlier adjustment.
"""

from .anomaly import (
    AgreementSummary,
    IsolationForestDetector,
    OutlierReport,
    backward_fill,
    detector_agreement,
    iforest_detect,
    outlier_report_csv,
    three_sigma_detect,
)
from .errors import AnomflowError, ConfigError, GridCellError, ParseError, ValidationError
from .grid import (
    ARMS,
    DEFAULT_MODELS,
    DEFAULT_WINDOWS,
    ExperimentGrid,
    export_grid,
    export_grid_csv,
    export_grid_json,
    export_plot_data,
    make_model,
    parse_grid_csv,
    parse_grid_json,
    run_grid,
)
from .metrics import MAPE_EPSILON, accuracy, mape
from .persist import dumps_model, load_model, loads_model, save_model
from .regressors import (
    PRESET_NAMES,
    PRESETS,
    GradientBoostedTreesRegressor,
    SgdLinearRegressor,
    make_preset,
)
from .series import (
    SynthConfig,
    TimeSeries,
    bps_to_gbps,
    drop_incomplete_tail,
    generate_synthetic,
    parse_series_csv,
    parse_telemetry_csv,
    parse_telemetry_json,
    serialize_series_csv,
    serialize_telemetry_csv,
    serialize_telemetry_json,
)
from .stacking import OofMatrix, StackedRegressor, oof_prediction_matrix, solve_ridge
from .tree import TreeNode, apply_tree, find_best_split
from .windowing import (
    FoldPlan,
    SupervisedDataset,
    chronological_split,
    expanding_folds,
    make_supervised,
)

__version__ = "0.1.0"
