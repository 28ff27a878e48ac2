"""Floating-point evaluation, compilation to callables and zero testing."""

from __future__ import annotations

import contextlib
import contextvars
import math
import random
from fractions import Fraction
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

from . import poly as P
from .expr import (
    ELEMENTARY,
    Add,
    Expr,
    Func,
    Mul,
    Num,
    Pow,
    Sym,
    free_symbols,
    normal_form,
    to_string,
    walk,
)


class EvaluationError(ArithmeticError):
    """Unbound symbol, pole or domain error while evaluating an expression."""


class DegenerateExpression(EvaluationError):
    pass


FunctionTable = Mapping[str, Callable[[float], float]]

_MATH = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "sqrt": math.sqrt,
    "log": math.log,
}


def evaluate(e: Expr, point: Mapping[str, float], functions: Optional[FunctionTable] = None) -> float:
    """Evaluate ``e`` in double precision.

    ``functions`` supplies opaque functions by label, e.g. ``{"V": f, "V'": df}``.
    """
    functions = functions or {}
    memo = {}

    def ev(n: Expr) -> float:
        if n in memo:
            return memo[n]
        if isinstance(n, Num):
            v = float(n.value)
        elif isinstance(n, Sym):
            try:
                v = float(point[n.name])
            except KeyError:
                raise EvaluationError(f"unbound symbol {n.name}") from None
        elif isinstance(n, Add):
            v = math.fsum(ev(a) for a in n.args)
        elif isinstance(n, Mul):
            v = 1.0
            for a in n.args:
                v *= ev(a)
        elif isinstance(n, Pow):
            b = ev(n.base)
            if b == 0.0 and n.exp < 0:
                raise EvaluationError("division by zero")
            try:
                v = b ** n.exp
            except OverflowError:
                raise EvaluationError("overflow") from None
        elif isinstance(n, Func):
            x = ev(n.arg)
            if n.name in _MATH:
                if n.name == "sqrt" and x < 0:
                    raise EvaluationError("domain error: sqrt of negative value")
                if n.name == "log" and x <= 0:
                    raise EvaluationError("domain error: log of non-positive value")
                try:
                    v = _MATH[n.name](x)
                except OverflowError:
                    raise EvaluationError("overflow") from None
            else:
                f = functions.get(n.label)
                if f is None:
                    raise EvaluationError(f"no numeric definition for function {n.label}")
                v = float(f(x))
        else:  # pragma: no cover
            raise TypeError(type(n))
        memo[n] = v
        return v

    return ev(e)


# -- compilation ------------------------------------------------------------------

def _code(e: Expr, names: Mapping[str, str]) -> str:
    if isinstance(e, Num):
        v = e.value
        return repr(float(v)) if v.denominator != 1 else f"{v.numerator}.0"
    if isinstance(e, Sym):
        try:
            return names[e.name]
        except KeyError:
            raise EvaluationError(f"unbound symbol {e.name}") from None
    if isinstance(e, Add):
        return "(" + " + ".join(_code(a, names) for a in e.args) + ")" if e.args else "0.0"
    if isinstance(e, Mul):
        return "(" + " * ".join(_code(a, names) for a in e.args) + ")" if e.args else "1.0"
    if isinstance(e, Pow):
        return f"({_code(e.base, names)} ** {e.exp})"
    if isinstance(e, Func):
        fname = e.name if e.name in ELEMENTARY else "_fn_" + e.name + "_d" * e.order
        return f"{fname}({_code(e.arg, names)})"
    raise TypeError(type(e))  # pragma: no cover


def compile_expressions(exprs: Sequence[Expr], argnames: Sequence[str], backend: str = "math",
                        functions: Optional[FunctionTable] = None) -> Callable:
    """Compile expressions into ``f(*args) -> tuple`` of values.

    ``backend="numpy"`` makes the callable broadcast over arrays.
    """
    names = {a: f"_a{i}" for i, a in enumerate(argnames)}
    body = ", ".join(_code(e, names) for e in exprs)
    src = f"def _f({', '.join(names.values())}):\n    return ({body}{',' if len(exprs) == 1 else ''})\n"
    if backend == "numpy":
        import numpy as np

        ns = {k: getattr(np, k) for k in ELEMENTARY}
    else:
        ns = dict(_MATH)
    for label, f in (functions or {}).items():
        ns["_fn_" + label.replace("'", "_d")] = f
    exec(compile(src, "<hjpath-compiled>", "exec"), ns)
    return ns["_f"]


# -- zero testing ---------------------------------------------------------------------

class ZeroTest(NamedTuple):
    """Outcome of :func:`is_zero`; truthy when the expression vanishes."""

    zero: bool
    proven: bool

    def __bool__(self):
        return self.zero

    @property
    def regime(self) -> str:
        return "proven" if self.proven else "probabilistic"


_probabilistic_log: contextvars.ContextVar = contextvars.ContextVar("probabilistic_log", default=None)


@contextlib.contextmanager
def record_probabilistic_tests():
    """Collect the expressions whose zero test had to fall back to sampling."""
    log: list = []
    token = _probabilistic_log.set(log)
    try:
        yield log
    finally:
        _probabilistic_log.reset(token)


def _random_function(rng: random.Random):
    a, b, c, d = (rng.uniform(0.5, 1.5) for _ in range(4))
    return lambda x: a * math.sin(b * x + c) + d * math.cos(0.7 * x) + 0.3 * x


def is_zero(e: Expr, samples: int = 16, tol: float = 1e-9, seed: int = 20240611) -> ZeroTest:
    """Decide whether ``e`` vanishes identically.

    Exact when the normal form decides it; otherwise (transcendental or
    opaque functions left in a nonzero normal form) ``e`` is sampled at
    random rational points.
    """
    atoms, (num, _den) = normal_form(e)
    if not num:
        return ZeroTest(True, True)
    if not any(isinstance(a, Func) for a in atoms):
        return ZeroTest(False, True)
    rng = random.Random(seed)
    syms = sorted(free_symbols(e))
    funcs = {}
    for n in walk(e):
        if isinstance(n, Func) and n.name not in ELEMENTARY:
            funcs.setdefault(n.label, _random_function(rng))
    good = failures = 0
    zero = True
    while good < samples:
        point = {s: float(Fraction(rng.randint(-400, 400), rng.randint(80, 240))) for s in syms}
        try:
            v = evaluate(e, point, funcs)
            scale = _term_scale(e, point, funcs)
        except (EvaluationError, ValueError, ZeroDivisionError):
            failures += 1
            if failures > 100:
                raise DegenerateExpression(f"degenerate expression: {to_string(e)}") from None
            continue
        good += 1
        if abs(v) > tol * max(1.0, scale):
            zero = False
            break
    log = _probabilistic_log.get()
    if log is not None:
        log.append(to_string(e))
    return ZeroTest(zero, False)


def _term_scale(e: Expr, point, funcs) -> float:
    if isinstance(e, Add):
        return sum(abs(evaluate(a, point, funcs)) for a in e.args)
    return abs(evaluate(e, point, funcs))


def poly_is_const(e: Expr):
    """Rational value of ``e`` if its normal form is a constant, else None."""
    atoms, (num, den) = normal_form(e)
    if P.is_const(num) and P.is_const(den):
        return P.const_value(num) / P.const_value(den)
    return None
