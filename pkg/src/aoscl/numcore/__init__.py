"""Dense float64 numerics: parameter sets, SGD, reverse-mode tape, FD oracle."""

from aoscl.numcore.params import (
    DECODER,
    ENCODER,
    Grad,
    ParamSet,
    axpy_combine,
    check_finite,
    dot,
    finite_diff_grad,
    group_mask,
    sgd_step,
)
from aoscl.numcore.tape import Node, Tape, const

__all__ = [
    "DECODER",
    "ENCODER",
    "Grad",
    "Node",
    "ParamSet",
    "Tape",
    "axpy_combine",
    "check_finite",
    "const",
    "dot",
    "finite_diff_grad",
    "group_mask",
    "sgd_step",
]
