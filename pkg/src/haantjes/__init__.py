"""Generalized Nijenhuis and Haantjes torsions of operator fields on R^n."""

from .exprdsl import DomainError, Expr, ExprError, ExprSyntaxError, parse
from .fields import OperatorField, Tensor12, VectorField, eval_operator, lie_bracket
from .torsion import (
    binary_haantjes,
    binary_level,
    delta_tensor,
    fn_bracket,
    haantjes,
    nijenhuis,
    tau_closed_form,
    tau_level,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError", "Expr", "ExprError", "ExprSyntaxError", "parse",
    "OperatorField", "Tensor12", "VectorField", "eval_operator", "lie_bracket",
    "binary_haantjes", "binary_level", "delta_tensor", "fn_bracket", "haantjes", "nijenhuis",
    "tau_closed_form", "tau_level", "__version__",
]
