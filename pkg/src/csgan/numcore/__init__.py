"""Array autodiff, optimisers and checkpoint I/O."""
from .checkpoint import MAGIC, load_arrays, save_arrays
from .optim import Adam, AdamState, StlrSchedule, adam_step, clip_grad_norm, stlr_lr
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    cross_entropy,
    div,
    dropout,
    embedding_lookup,
    exp,
    expand_dims,
    getitem,
    is_grad_enabled,
    layer_norm,
    linear,
    log,
    log_softmax,
    matmul,
    mean_pool,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    softmax,
    stack,
    sub,
    swapaxes,
    tanh,
    tmean,
    transpose,
    tsum,
)

__all__ = [name for name in dir() if not name.startswith("_")]
