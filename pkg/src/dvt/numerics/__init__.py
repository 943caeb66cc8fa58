from .tensor import (
    Tensor,
    add,
    concat,
    cross_entropy,
    gelu,
    getitem,
    layer_norm,
    matmul,
    mul,
    neg,
    no_grad,
    reshape,
    set_debug_checks,
    softmax,
    sub,
    tmean,
    transpose,
    tsum,
)
from .sampling import bilinear_gather, bilinear_sample, conv3d
from .gradcheck import GradCheckReport, grad_check
from .optim import AdamState, adam_step
from .rng import Rng
from .io import FormatError, load_tensor, read_tensor, save_tensor, write_tensor

__all__ = [
    "AdamState",
    "FormatError",
    "GradCheckReport",
    "Rng",
    "Tensor",
    "adam_step",
    "add",
    "bilinear_gather",
    "bilinear_sample",
    "concat",
    "conv3d",
    "cross_entropy",
    "gelu",
    "getitem",
    "grad_check",
    "layer_norm",
    "load_tensor",
    "matmul",
    "mul",
    "neg",
    "no_grad",
    "read_tensor",
    "reshape",
    "save_tensor",
    "set_debug_checks",
    "softmax",
    "sub",
    "tmean",
    "transpose",
    "tsum",
    "write_tensor",
]
