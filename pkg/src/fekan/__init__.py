"""Feature-enriched Kolmogorov-Arnold networks, hand-rolled on numpy.

The package covers the full loop: basis families, fixed trigonometric
input enrichment, forward/backward plus second-order jet propagation,
physics-informed and separable training, kernel diagnostics, and the
experiment runner behind the `fekan` command.
"""

from .basis import BasisSpec
from .enrich import FeatureMap, build_deterministic, build_rff, identity_map
from .jets import Jet2
from .model import FekanModel, KanLayer, ParamGrads
from .separable import SeparableModel
from .physics import (PdeProblem, SeparableProblem, TargetFunction,
                      LorenzPiProblem, target_eval, lorenz_rhs, integrate_rk4,
                      relative_l2, helmholtz2d, helmholtz3d, allen_cahn,
                      klein_gordon, lorenz_pi, helmholtz3d_sep,
                      klein_gordon_sep, sample_collocation, pinn_loss,
                      separable_pinn_loss, allen_cahn_reference,
                      write_reference_csv, read_reference_csv)
from .train import (AdamState, TrainConfig, adam_step, train_regression,
                    train_pinn, train_separable, train_lorenz_onestep,
                    train_lorenz_pi, train_phased, phase_schedule, face_mse,
                    run_multiseed, truncate_curves, is_diverged)
from .ntk import Spectrum, ntk_matrix, eigen_spectrum, acr, ntk_drift, \
    predicted_error_decay
from .bench import RunConfig, load_presets, run_single, run_experiment, \
    emit_summary, compare_summaries, make_reference
from .cli import cli_main

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "FeatureMap", "build_deterministic", "build_rff",
    "identity_map", "Jet2", "FekanModel", "KanLayer", "ParamGrads",
    "SeparableModel", "PdeProblem", "SeparableProblem", "TargetFunction",
    "LorenzPiProblem", "target_eval", "lorenz_rhs", "integrate_rk4",
    "relative_l2", "helmholtz2d", "helmholtz3d", "allen_cahn",
    "klein_gordon", "lorenz_pi", "helmholtz3d_sep", "klein_gordon_sep",
    "sample_collocation", "pinn_loss", "separable_pinn_loss",
    "allen_cahn_reference", "write_reference_csv", "read_reference_csv",
    "AdamState", "TrainConfig", "adam_step", "train_regression",
    "train_pinn", "train_separable", "train_lorenz_onestep",
    "train_lorenz_pi", "train_phased", "phase_schedule", "face_mse",
    "run_multiseed", "truncate_curves", "is_diverged", "Spectrum",
    "ntk_matrix", "eigen_spectrum", "acr", "ntk_drift",
    "predicted_error_decay", "RunConfig", "load_presets", "run_single",
    "run_experiment", "emit_summary", "compare_summaries", "make_reference",
    "cli_main", "__version__",
]
