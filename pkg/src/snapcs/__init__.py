"""snapcs: temporal compressive sensing for video.

Simulates coded-exposure capture (many frames multiplied by binary masks
and summed into one coded frame), and reconstructs the frames with
decoders learned from example video: a closed-form linear decoder and an
SGD-trained MLP.  See the README for the workflow.
"""

from .encoder import (NoiseSpec, add_frame_noise, add_noise_columns, encode,
                      encode_patch)
from .errors import (FormatError, GeometryError, MaskMismatchError, SnapcsError,
                     TrainingDivergedError, UnsolvableMaskError, ZeroSignalError)
from .geometry import (CodedFrame, Geometry, Patch, VideoVolume, extract_patches,
                       flatten_patch, patch_offsets, unflatten_patch)
from .linear import (LinearModel, MomentAccumulator, load_linear_model,
                     save_linear_model, solve)
from .mask import (BuildingBlock, MeasurementMask, generate_building_block,
                   load_mask, solvability_report)
from .metrics import evaluate_sequence, psnr, ssim, to_8bit
from .mlp import (MlpModel, MlpParams, TrainConfig, TrainResult, forward,
                  init_mlp, load_mlp_model, loss_and_grad, save_mlp_model,
                  sgd_step, train)
from .pipeline import (coverage_weights, encode_sequence, reconstruct,
                       reconstruct_sequence, temporal_mean_baseline)
from .datasets import (TrainingSet, build_training_set, fit_linear, fit_mlp,
                       load_training_set, save_training_set)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
