"""Multi-frame video super-resolution with deformable feature alignment,
embedded-Gaussian non-local attention and dense residual reconstruction,
built on a self-contained float64 reverse-mode tensor core.

Hot kernels run as numba-jitted loops with a pure-numpy fallback; set
DNLN_BACKEND={numba,numpy} before import to pick one explicitly.
"""

from .backend import BACKEND
from .tensor import Tensor
from .ops import ConvKernel
from .image import Frame, FrameSequence, cubic_resize, rgb_to_y, augment, window_clip
from .align import SamplingField, HFFBParams, AlignStage, deform_conv, hffb_forward, predict_field, align_cascade
from .nonlocal_attn import NonLocalWeights, nonlocal_forward
from .model import ModelConfig, Model, build_model, named_parameters, forward, extract_features, rrdb_forward
from .optim import Adam, l1_loss, l2_loss, lr_at
from .training import synth_dataset, train
from .metrics import EvalProtocol, psnr_y, ssim_y
from .checkpoint import save_checkpoint, load_checkpoint, load_model
from .evaluate import eval_clip, infer

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Tensor",
    "ConvKernel",
    "Frame",
    "FrameSequence",
    "cubic_resize",
    "rgb_to_y",
    "augment",
    "window_clip",
    "SamplingField",
    "HFFBParams",
    "AlignStage",
    "deform_conv",
    "hffb_forward",
    "predict_field",
    "align_cascade",
    "NonLocalWeights",
    "nonlocal_forward",
    "ModelConfig",
    "Model",
    "build_model",
    "named_parameters",
    "forward",
    "extract_features",
    "rrdb_forward",
    "Adam",
    "l1_loss",
    "l2_loss",
    "lr_at",
    "synth_dataset",
    "train",
    "EvalProtocol",
    "psnr_y",
    "ssim_y",
    "save_checkpoint",
    "load_checkpoint",
    "load_model",
    "eval_clip",
    "infer",
]
