"""sEMG-driven muscle thickness deformation prediction.

Thin wrapper over the C++ core: synthetic cohort generation, A-mode
ultrasound labelling, sEMG feature extraction, the dual-attention regressor,
and the cross-subject evaluation protocol.
"""

from ._core import (
    activation_profile,
    bandpass,
    cli,
    compute_metrics,
    contraction_loss,
    default_config_json,
    detect_interfaces,
    envelope,
    envelope_features,
    gradcheck,
    mse_loss,
    muscle_excursion,
    predict_window,
    preprocess_dataset,
    run_protocol,
    segment_periods,
    simulate_dataset,
    thickness_dynamics,
    thickness_from_delays,
    total_loss,
    train_model,
)

__version__ = "0.1.0"

__all__ = [
    "activation_profile",
    "bandpass",
    "cli",
    "compute_metrics",
    "contraction_loss",
    "default_config_json",
    "detect_interfaces",
    "envelope",
    "envelope_features",
    "gradcheck",
    "mse_loss",
    "muscle_excursion",
    "predict_window",
    "preprocess_dataset",
    "run_protocol",
    "segment_periods",
    "simulate_dataset",
    "thickness_dynamics",
    "thickness_from_delays",
    "total_loss",
    "train_model",
]
