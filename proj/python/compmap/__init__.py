"""Composition mapping toolkit."""

from ._core import (
    Bundle,
    DataError,
    NumericError,
    UsageError,
    delta_metrics,
    eval_fewshot,
    eval_fullshot,
    generate_synth,
    harmonic_mean,
    interpretability_delta,
    load_bundle,
    model_inputs,
    run_cli,
    sample_episodes,
    sweep_calibration,
    topk_alignment,
    train_logreg,
)

__all__ = [
    "Bundle",
    "DataError",
    "NumericError",
    "UsageError",
    "delta_metrics",
    "eval_fewshot",
    "eval_fullshot",
    "generate_synth",
    "harmonic_mean",
    "interpretability_delta",
    "load_bundle",
    "model_inputs",
    "run_cli",
    "sample_episodes",
    "sweep_calibration",
    "topk_alignment",
    "train_logreg",
]
