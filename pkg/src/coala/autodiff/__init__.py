"""Forward-mode duals, reverse-mode tape and a differentiable linear solve."""
from .dual import (
    Dual,
    NestingDepthError,
    NonFiniteError,
    grad_forward,
    grad_nested,
    hessian_forward,
    jacobian_forward,
    primal,
    value_and_grad_forward,
)
from .gradcheck import gradcheck, numeric_gradient, relative_error
from .linalg import SingularMatrixError, solve_linear
from .tape import Tape, TapeError, Tensor, grad_reverse

__all__ = [
    "Dual", "NestingDepthError", "NonFiniteError", "grad_forward", "grad_nested",
    "hessian_forward", "jacobian_forward", "primal", "value_and_grad_forward",
    "gradcheck", "numeric_gradient", "relative_error", "SingularMatrixError",
    "solve_linear", "Tape", "TapeError", "Tensor", "grad_reverse",
]
