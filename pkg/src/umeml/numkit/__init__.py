from .core import (
    BACKWARD_RULES,
    EPS,
    ContractError,
    DimensionError,
    Node,
    Tape,
    Tensor,
    add,
    backward,
    concat_cols,
    concat_rows,
    constant,
    cosine_rows,
    div,
    exp,
    eye,
    grouped_linear,
    layer_norm_rows,
    log,
    log_softmax_rows,
    matmul,
    mean_rows,
    mul,
    ones,
    parameter,
    relu,
    row,
    scale,
    sigmoid,
    softmax_rows,
    sub,
    submatrix,
    sum_all,
    sum_rows,
    transpose,
    zeros,
)
from .gradcheck import GradReport, grad_check, op_suite

__all__ = [
    "BACKWARD_RULES",
    "EPS",
    "ContractError",
    "DimensionError",
    "GradReport",
    "Node",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "concat_cols",
    "concat_rows",
    "constant",
    "cosine_rows",
    "div",
    "exp",
    "eye",
    "grad_check",
    "grouped_linear",
    "layer_norm_rows",
    "log",
    "log_softmax_rows",
    "matmul",
    "mean_rows",
    "mul",
    "ones",
    "op_suite",
    "parameter",
    "relu",
    "row",
    "scale",
    "sigmoid",
    "softmax_rows",
    "sub",
    "submatrix",
    "sum_all",
    "sum_rows",
    "transpose",
    "zeros",
]
