"""Switching autoregressive dynamics models for time-series segmentation.

Hidden-Markov mode chains whose per-mode observation models are Gaussian
autoregressions: basis-function maps in Euclidean space, incremental
rotations on unit quaternions, and blockwise products of both.
"""

from .basis import (GrbfBasis, LinearBasis, PolynomialBasis, basis_from_payload,
                    evaluate, grbf_grid, output_len)
from .cartesian import CartesianDynamics
from .composite import (Block, CompositeDynamics, ObservationLayout,
                        ObservationSequence, cartesian_layout, default_dynamics,
                        pose_gripper_layout, quaternion_layout)
from .core import (DataError, GaussianNoise, InsufficientDataError, ModelParams,
                   NumericalError, log_gaussian_density, normalize_log_weights)
from .data import (Standardization, ingest_csv, ingest_jigsaw,
                   rotation_to_quaternion, sign_continuize)
from .inference import (EmConfig, Posterior, SegmentationResult, em_fit,
                        forward_backward, viterbi)
from .metrics import frame_accuracy, seg_score, silhouette
from .quaternion import (OptimizerConfig, QuaternionDynamics, quat_conj,
                         quat_exp, quat_mul, rotation_objective)
from .serialize import dumps_canonical, load_model, save_model
from .simulate import (SimConfig, quaternion_model, quaternion_system,
                       sample_dataset, sample_model, sweep_fields, sweep_system,
                       validation_field, validation_model, validation_system)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
