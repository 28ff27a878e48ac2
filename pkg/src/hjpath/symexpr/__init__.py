"""Exact symbolic expressions over the rationals."""

from .expr import (
    ELEMENTARY,
    ONE,
    ZERO,
    Add,
    Expr,
    Func,
    Mul,
    Num,
    Pow,
    Sym,
    SymbolicError,
    as_expr,
    bind_functions,
    constant_value,
    differentiate,
    free_symbols,
    func,
    functions_used,
    has_functions,
    linear_in,
    normal_form,
    numerator_denominator,
    polynomial_degree,
    power,
    simplify,
    sqrt,
    substitute,
    to_string,
    walk,
)
from .numeric import (
    DegenerateExpression,
    EvaluationError,
    ZeroTest,
    compile_expressions,
    evaluate,
    is_zero,
    record_probabilistic_tests,
)
from .symbols import SymbolTable, default_momentum_name, velocity_name

__all__ = [
    "ELEMENTARY", "ONE", "ZERO", "Add", "Expr", "Func", "Mul", "Num", "Pow", "Sym",
    "SymbolicError", "as_expr", "bind_functions", "constant_value", "differentiate",
    "free_symbols", "func", "functions_used", "has_functions", "linear_in", "normal_form",
    "numerator_denominator", "polynomial_degree", "power", "simplify", "sqrt", "substitute",
    "to_string", "walk", "DegenerateExpression", "EvaluationError", "ZeroTest",
    "compile_expressions", "evaluate", "is_zero", "record_probabilistic_tests",
    "SymbolTable", "default_momentum_name", "velocity_name",
]
