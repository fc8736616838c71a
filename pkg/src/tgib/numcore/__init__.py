from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradcheckReport, gradcheck
from .noise import ConstantNoise, FrozenNoise, NoiseSource
from .optim import AdamState, adam_step
from .tensor import (
    DomainError,
    ShapeError,
    Tensor,
    add,
    broadcast_to,
    clip,
    concat,
    cos,
    div,
    dropout,
    exp,
    getitem,
    log,
    log_sigmoid,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    straight_through,
    sub,
    take_rows,
    tensor,
    tsum,
)
