from .core import (
    Tensor,
    add,
    as_tensor,
    concat,
    default_dtype,
    div,
    dropout,
    embedding_lookup,
    exp,
    get_default_dtype,
    getitem,
    linear,
    log,
    log_softmax,
    masked_softmax,
    matmul,
    mean,
    mul,
    neg,
    nll_from_probs,
    no_grad,
    one_hot,
    power,
    relu,
    reshape,
    set_check_finite,
    sigmoid,
    softmax,
    sparse_ce_loss,
    sqrt,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import gradcheck, numeric_grad, relative_error
from .optim import Constant, InverseSqrtWarmup, PlateauReduce, adam_step, lr_at, plateau_step
from .params import ParamSet
