"""Lazy-regime two-layer ReLU networks: training, attacks, bound checks."""

from .attacks import (AttackOutcome, min_eta_attack_batch, minimal_eta_search,
                      pgd_attack, pgd_attack_batch, robust_accuracy,
                      single_step_attack)
from .bounds import (BoundReport, ScalingFit, SignFlipSets, binomial_slack,
                     check_fvalue, check_grad_lower, check_sign_flip_count,
                     check_sign_flip_prob, fvalue_bound, grad_diff_bound,
                     grad_diff_probe, grad_lower_bound, robust_error_estimate,
                     run_lemma_monte_carlo, scaling_fit, sign_flip_prob_bound,
                     sign_flip_sets)
from .data import (LabeledDataset, RawImageSet, downsample, extract_binary,
                   load_dataset, load_raw_images, save_dataset, synth_sphere,
                   to_sphere_dataset)
from .errors import (ConfigError, DegenerateGradientError, DimensionError,
                     DivergenceError, EmptyDatasetError, IdxFormatError,
                     InvalidLabelError)
from .estimators import AdversarialLazyNetClassifier, LazyNetClassifier
from .network import (NetworkParams, accuracy, cone_scale, forward,
                      forward_batch, init_network, input_gradient,
                      input_gradient_batch, lazy_deviation, load_checkpoint,
                      logistic_loss, project_weights, save_checkpoint,
                      weight_gradient)
from .numerics import l2_project_to_ball, make_rng
from .training import (EpochStats, TrainConfig, TrainReport,
                       projected_adversarial_train, sgd_lazy_train)

__version__ = "0.1.0"

__all__ = [
    "AttackOutcome", "minimal_eta_search", "min_eta_attack_batch",
    "pgd_attack", "pgd_attack_batch", "robust_accuracy", "single_step_attack",
    "BoundReport", "ScalingFit", "SignFlipSets", "binomial_slack",
    "check_fvalue", "check_grad_lower", "check_sign_flip_count",
    "check_sign_flip_prob", "fvalue_bound", "grad_diff_bound",
    "grad_diff_probe", "grad_lower_bound", "robust_error_estimate",
    "run_lemma_monte_carlo", "scaling_fit", "sign_flip_prob_bound",
    "sign_flip_sets",
    "LabeledDataset", "RawImageSet", "downsample", "extract_binary",
    "load_dataset", "load_raw_images", "save_dataset", "synth_sphere",
    "to_sphere_dataset",
    "ConfigError", "DegenerateGradientError", "DimensionError",
    "DivergenceError", "EmptyDatasetError", "IdxFormatError",
    "InvalidLabelError",
    "AdversarialLazyNetClassifier", "LazyNetClassifier",
    "NetworkParams", "accuracy", "cone_scale", "forward", "forward_batch",
    "init_network", "input_gradient", "input_gradient_batch",
    "lazy_deviation", "load_checkpoint", "logistic_loss", "project_weights",
    "save_checkpoint", "weight_gradient",
    "l2_project_to_ball", "make_rng",
    "EpochStats", "TrainConfig", "TrainReport",
    "projected_adversarial_train", "sgd_lazy_train",
]
