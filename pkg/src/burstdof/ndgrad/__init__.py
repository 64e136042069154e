"""Dense-tensor engine with reverse-mode autodiff, Adam, and checkpoints."""

from .engine import (
    NonFiniteError,
    Tape,
    Tensor,
    abs_,
    add,
    add_bias,
    concat,
    current_tape,
    div,
    l1_loss,
    leaky_relu,
    mean_all,
    mul,
    neg,
    no_grad,
    set_finite_checks,
    sigmoid,
    softmax,
    sub,
    sum_all,
    sum_axis,
)
from .imageops import SSIM_C1, SSIM_C2, conv2d, downsample2, ms_ssim, upsample2
from .optim import AdamState, adam_step, collect_grads, zero_grads
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import OpCheckResult, grad_check, gradient_suite

__all__ = [
    "NonFiniteError",
    "Tape",
    "Tensor",
    "abs_",
    "add",
    "add_bias",
    "concat",
    "current_tape",
    "div",
    "l1_loss",
    "leaky_relu",
    "mean_all",
    "mul",
    "neg",
    "no_grad",
    "set_finite_checks",
    "sigmoid",
    "softmax",
    "sub",
    "sum_all",
    "sum_axis",
    "SSIM_C1",
    "SSIM_C2",
    "conv2d",
    "downsample2",
    "ms_ssim",
    "upsample2",
    "AdamState",
    "adam_step",
    "collect_grads",
    "zero_grads",
    "load_checkpoint",
    "save_checkpoint",
    "OpCheckResult",
    "grad_check",
    "gradient_suite",
]
