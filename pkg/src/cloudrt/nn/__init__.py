"""Small reverse-mode autodiff engine, attention block, Adam and checkpoints."""

from .tensor import (Tensor, add, clip_min, concat, cos, div, exp, gather, getitem, layer_norm,
                     linear, log, matmul, max_pool_set, mean, mul, normalize, relu, reshape,
                     sin, softmax, sqrt, square, sub, sum, take_along, transpose)
from .layers import multi_head_attention, init_attention_block
from .optim import ParamStore, adam_step
from .gradcheck import GradReport, grad_check
from .checkpoint import save_checkpoint, load_checkpoint
