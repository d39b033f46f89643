"""Short-term load forecasting with dual-branch sequential models that fuse
raw inputs with hand-crafted derived features."""

from .data import (
    CsvSchema,
    DatasetPreset,
    SplitSpec,
    TimeSeries,
    annotate_calendar,
    apply_offset,
    load_csv,
    preprocess,
    preset,
    read_canonical,
    resample_average,
    split,
    write_canonical,
)
from .estimators import BaselineForecaster, DeepDeffForecaster, samples_to_arrays
from .features import Sample, build_samples, one_hot, slot_history_stats, window_stats
from .harness import (
    ExperimentConfig,
    ResultTable,
    emit_plot_data,
    emit_report,
    load_results,
    run_experiment,
)
from .model import (
    DeepDeffModel,
    TrainConfig,
    TrainReport,
    build_baseline,
    build_method,
    build_model,
    evaluate,
    forward,
    load_weights,
    mae,
    mape,
    save_weights,
    train,
)
from .numerics import SeededRng, derive_seed

__version__ = "0.1.0"
