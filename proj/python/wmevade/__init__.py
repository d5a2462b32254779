"""Trigger-set watermarking for neural networks: embedding, black-box
epsilon-threshold verification, and the two evasion gateways (ensemble
voting and trigger detection), plus the exact/Monte-Carlo probability model
of verification under attack."""

from ._core import (
    Architecture,
    Dataset,
    Detector,
    DetectorDataset,
    DetectorEvaluation,
    DetectorGateway,
    EnsembleGateway,
    Model,
    TriggerSet,
    VerificationReport,
    WmevadeError,
    accuracy,
    assign_random_labels,
    binomial_tail,
    build_detector_dataset,
    claim_threshold,
    conv_classifier_arch,
    dense_classifier_arch,
    detector_arch,
    detector_classify,
    detector_verified_fraction,
    embed_from_scratch,
    evaluate_detector,
    exact_ensemble_verification,
    extract_features,
    fine_tune,
    forward,
    generate_trigger_images,
    gradient_check,
    init_model,
    load_idx,
    load_model,
    load_trigger_manifest,
    make_synth_digits,
    mean_pixel,
    predict,
    predict_claim_probability,
    save_idx,
    save_model,
    save_trigger_manifest,
    simulate_ensemble_verification,
    train,
    train_detector,
    trigger_accuracy,
    verify,
    verify_model,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
