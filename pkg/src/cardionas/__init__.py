"""Differentiable architecture search for 1-D ECG heartbeat classification."""

__version__ = "0.1.0"

from .autodiff import Parameter, Tape, Tensor, backward
from .network import (FinalNetwork, TrainConfig, TrainResult, accuracy,
                      build_network, load_model, predict, save_model, train_final)
from .pipeline import (AAMI_CLASSES, DB_PROFILES, SPLIT_SEARCH_TRAIN,
                       SPLIT_SEARCH_VAL, SPLIT_TEST, HeartbeatDataset,
                       build_dataset, dataset_stats, load_record_csv,
                       preprocess_records, segment_heartbeats)
from .metrics import (ConfusionMatrix, MetricsReport, class_rates,
                      overall_accuracy, parse_report, render_report,
                      report_from_json_text, report_from_matrix,
                      report_to_json_text)
from .search_space import (OP_NAMES, ArchParams, Genotype, discretize,
                           mixing_weights, random_genotype)
from .supernet import SearchConfig, SearchRun, SearchState, Supernet, run_search
from .synthetic import (make_synthetic_dataset, nearest_template_accuracy,
                        nearest_template_predict, template_bank)

__all__ = [
    "AAMI_CLASSES", "ArchParams", "ConfusionMatrix", "DB_PROFILES",
    "FinalNetwork", "Genotype", "HeartbeatDataset", "MetricsReport",
    "OP_NAMES", "Parameter", "SearchConfig", "SearchRun", "SearchState",
    "SPLIT_SEARCH_TRAIN", "SPLIT_SEARCH_VAL", "SPLIT_TEST", "Supernet",
    "Tape", "Tensor", "TrainConfig", "TrainResult", "accuracy", "backward",
    "build_dataset", "build_network", "class_rates", "dataset_stats",
    "discretize", "load_model", "load_record_csv", "make_synthetic_dataset",
    "mixing_weights", "nearest_template_accuracy", "nearest_template_predict",
    "overall_accuracy", "parse_report", "predict", "preprocess_records",
    "random_genotype", "render_report", "report_from_json_text",
    "report_from_matrix", "report_to_json_text", "run_search", "save_model",
    "segment_heartbeats", "template_bank", "train_final",
]
