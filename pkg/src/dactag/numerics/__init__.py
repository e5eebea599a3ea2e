"""Reverse-mode autodiff over float64 numpy arrays, plus seeded randomness."""
from .fused import gru_scan
from .gradcheck import grad_check, numerical_grad, relative_error
from .graph import Node, as_node, backward, constant, grad_enabled, make_node, no_grad, parameter
from .ops import (
    activation,
    add,
    concat,
    dropout,
    elementwise,
    embedding_lookup,
    exp,
    index_select,
    linear,
    log_softmax,
    matmul,
    mean,
    mul,
    pick,
    reshape,
    scale,
    sigmoid,
    slice_axis,
    softmax,
    stack,
    sub,
    sum,
    take,
    tanh,
    transpose,
)
from .rng import Rng

__all__ = [
    "Node", "Rng", "activation", "add", "as_node", "backward", "concat", "constant", "dropout",
    "elementwise", "embedding_lookup", "exp", "grad_check", "grad_enabled", "gru_scan",
    "index_select", "linear", "log_softmax", "make_node", "matmul", "mean", "mul", "no_grad",
    "numerical_grad", "parameter", "pick", "relative_error", "reshape", "scale", "sigmoid",
    "slice_axis", "softmax", "stack", "sub", "sum", "take", "tanh", "transpose",
]
