from .ablation import SUITES, Mutation, run_ablation, suite_a, suite_b, suite_c, write_ablation_csv
from .bench import TimingTable, benchmark, dump_activations, ms_per_sample, single_image_latency_ms
from .dataset import (
    LABELS,
    DatasetError,
    ImageDataset,
    SampleMeta,
    build_dataset,
    load_dataset,
    save_dataset,
)
from .folds import FoldSplit, check_folds, loso_folds
from .training import (
    HyperParams,
    Metrics,
    RunReport,
    evaluate,
    metrics_from_confusion,
    metrics_from_predictions,
    split_train_validation,
    train_model,
    write_report_csv,
    write_timing_csv,
)
