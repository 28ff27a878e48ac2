"""Immutable expression trees with an exact rational-function normal form."""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Tuple

from . import poly as P

ELEMENTARY = ("sin", "cos", "exp", "sqrt", "log")


class SymbolicError(ValueError):
    """Raised for malformed symbolic requests (unknown symbol, bad exponent, ...)."""


class Expr:
    __slots__ = ("_hash", "_canon")

    def _key(self):
        raise NotImplementedError

    def __eq__(self, other):
        return isinstance(other, Expr) and type(self) is type(other) and self._key() == other._key()

    def __hash__(self):
        try:
            return self._hash
        except AttributeError:
            h = hash((type(self).__name__, self._key()))
            object.__setattr__(self, "_hash", h)
            return h

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def __str__(self):
        return to_string(self)

    # arithmetic builds raw trees; call simplify() for the normal form
    def __add__(self, other):
        return Add.of(self, as_expr(other))

    def __radd__(self, other):
        return Add.of(as_expr(other), self)

    def __sub__(self, other):
        return Add.of(self, -as_expr(other))

    def __rsub__(self, other):
        return Add.of(as_expr(other), -self)

    def __mul__(self, other):
        return Mul.of(self, as_expr(other))

    def __rmul__(self, other):
        return Mul.of(as_expr(other), self)

    def __truediv__(self, other):
        return Mul.of(self, power(as_expr(other), -1))

    def __rtruediv__(self, other):
        return Mul.of(as_expr(other), power(self, -1))

    def __neg__(self):
        return Mul.of(Num(-1), self)

    def __pow__(self, k):
        return power(self, k)


def _init(obj, **fields):
    for k, v in fields.items():
        object.__setattr__(obj, k, v)


class Num(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        _init(self, value=Fraction(value))

    def _key(self):
        return self.value


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        _init(self, name=name)

    def _key(self):
        return self.name


class Add(Expr):
    __slots__ = ("args",)

    def __init__(self, args: Tuple[Expr, ...]):
        _init(self, args=tuple(args))

    def _key(self):
        return self.args

    @staticmethod
    def of(*args):
        flat = []
        for a in args:
            flat.extend(a.args if isinstance(a, Add) else (a,))
        return Add(tuple(flat))


class Mul(Expr):
    __slots__ = ("args",)

    def __init__(self, args: Tuple[Expr, ...]):
        _init(self, args=tuple(args))

    def _key(self):
        return self.args

    @staticmethod
    def of(*args):
        flat = []
        for a in args:
            flat.extend(a.args if isinstance(a, Mul) else (a,))
        return Mul(tuple(flat))


class Pow(Expr):
    """Integer power; negative exponents encode quotients."""

    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: int):
        _init(self, base=base, exp=int(exp))

    def _key(self):
        return (self.base, self.exp)


class Func(Expr):
    """Unary function application.

    ``name`` is one of the elementary functions or an opaque user function
    such as a potential ``V``; ``order`` counts derivatives of opaque
    functions (``V'`` has order 1).
    """

    __slots__ = ("name", "arg", "order")

    def __init__(self, name: str, arg: Expr, order: int = 0):
        if order and name in ELEMENTARY:
            raise SymbolicError(f"derivative order on elementary function {name}")
        _init(self, name=name, arg=arg, order=order)

    def _key(self):
        return (self.name, self.arg, self.order)

    @property
    def label(self):
        return self.name + "'" * self.order


ZERO = Num(0)
ONE = Num(1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return Sym(x)
    if isinstance(x, (int, Fraction)):
        return Num(x)
    if isinstance(x, float):
        return Num(Fraction(x).limit_denominator(10**12))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def power(base: Expr, k) -> Expr:
    """``base**k`` for integer or half-integer ``k``."""
    if isinstance(k, Expr):
        k = constant_value(k)
        if k is None:
            raise SymbolicError("exponent must be a rational constant")
    k = Fraction(k)
    if k.denominator == 1:
        return Pow(base, int(k))
    if k.denominator == 2:
        return Pow(Func("sqrt", base), k.numerator)
    raise SymbolicError(f"unsupported exponent {k}")


def sqrt(e) -> Expr:
    return Func("sqrt", as_expr(e))


def func(name: str, e, order: int = 0) -> Expr:
    return Func(name, as_expr(e), order)


# -- traversal ---------------------------------------------------------------

def _children(e: Expr):
    if isinstance(e, (Add, Mul)):
        return e.args
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, Func):
        return (e.arg,)
    return ()


def walk(e: Expr):
    """Yield every node of ``e`` (pre-order, duplicates included)."""
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(_children(n)))


def free_symbols(e: Expr) -> set:
    out = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Sym):
            out.add(n.name)
        else:
            stack.extend(_children(n))
    return out


def functions_used(e: Expr) -> set:
    """Names of opaque (non-elementary) functions appearing in ``e``."""
    out = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Func) and n.name not in ELEMENTARY:
            out.add(n.name)
        stack.extend(_children(n))
    return out


def has_functions(e: Expr) -> bool:
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Func):
            return True
        stack.extend(_children(n))
    return False


# -- normal form ----------------------------------------------------------------

def _natural_key(name: str):
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", name))


def atom_key(a: Expr):
    if isinstance(a, Sym):
        return (0, _natural_key(a.name))
    return (1, a.name, a.order, to_string(a.arg))


def _fold_func(name: str, arg: Expr):
    """Constant-fold elementary functions at exactly representable points."""
    c = constant_value(arg)
    if c is None:
        return None
    if name == "sqrt" and c >= 0:
        n, d = c.numerator, c.denominator
        rn, rd = _isqrt(n), _isqrt(d)
        if rn is not None and rd is not None:
            return Num(Fraction(rn, rd))
    if c == 0 and name in ("sin", "exp", "cos"):
        return Num(0 if name == "sin" else 1)
    if c == 1 and name == "log":
        return ZERO
    return None


def _isqrt(n: int):
    import math

    r = math.isqrt(n)
    return r if r * r == n else None


class _Ring:
    def __init__(self, atoms: Iterable[Expr]):
        self.atoms = sorted(set(atoms), key=atom_key)
        self.index = {a: i for i, a in enumerate(self.atoms)}
        self.n = len(self.atoms)


def _canon_atom(e: Func, memo) -> Expr:
    if e in memo:
        return memo[e]
    argn = simplify(e.arg)
    folded = _fold_func(e.name, argn) if not e.order else None
    out = folded if folded is not None else Func(e.name, argn, e.order)
    memo[e] = out
    return out


def _collect_atoms(e: Expr, memo, out: set):
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Sym):
            out.add(n)
        elif isinstance(n, Func):
            a = _canon_atom(n, memo)
            if isinstance(a, Func):
                out.add(a)
                if a.name == "sqrt":
                    _collect_atoms(a.arg, memo, out)
        else:
            stack.extend(_children(n))


def _to_rf(e: Expr, ring: _Ring, memo, cache) -> P.RF:
    hit = cache.get(e)
    if hit is not None:
        return hit
    n = ring.n
    if isinstance(e, Num):
        out = (P.const(e.value, n), P.const(1, n))
    elif isinstance(e, Sym):
        out = (P.gen(ring.index[e], n), P.const(1, n))
    elif isinstance(e, Add):
        out = ({}, P.const(1, n))
        for a in e.args:
            out = P.rf_add(out, _to_rf(a, ring, memo, cache))
    elif isinstance(e, Mul):
        out = (P.const(1, n), P.const(1, n))
        for a in e.args:
            out = P.rf_mul(out, _to_rf(a, ring, memo, cache))
            if not out[0]:
                break
    elif isinstance(e, Pow):
        base = _to_rf(e.base, ring, memo, cache)
        if e.exp < 0 and not base[0]:
            raise SymbolicError("division by zero")
        out = P.rf_pow(base, e.exp, n)
    elif isinstance(e, Func):
        a = _canon_atom(e, memo)
        if isinstance(a, Func):
            out = (P.gen(ring.index[a], n), P.const(1, n))
        else:
            out = _to_rf(a, ring, memo, cache)
    else:  # pragma: no cover
        raise TypeError(type(e))
    cache[e] = out
    return out


def _reduce_sqrt_poly(p: P.Poly, j: int, u: P.RF, n: int) -> P.RF:
    """Rewrite s**e as u**(e//2) * s**(e%2) for the sqrt atom at index j."""
    if P.degree(p, j) < 2:
        return p, P.const(1, n)
    by_power = P.coeffs_in(p, j)
    out = ({}, P.const(1, n))
    s = P.gen(j, n)
    for e, c in by_power.items():
        term = P.rf_pow(u, e // 2, n)
        term = P.rf_mul(term, (P.mul(c, s) if e % 2 else c, P.const(1, n)))
        out = P.rf_add(out, term)
    return out


def _reduce_sqrt(rf: P.RF, ring: _Ring, memo, cache) -> P.RF:
    n = ring.n
    sq = [(i, a) for i, a in enumerate(ring.atoms) if isinstance(a, Func) and a.name == "sqrt"]
    for _ in range(16):
        changed = False
        for j, a in sq:
            num, den = rf
            if P.degree(num, j) < 2 and P.degree(den, j) < 1:
                continue
            u = _to_rf(a.arg, ring, memo, cache)
            rn = _reduce_sqrt_poly(num, j, u, n)
            rd = _reduce_sqrt_poly(den, j, u, n)
            new = P.rf_mul(rn, P.rf_inv(rd))
            nd = new[1]
            if P.degree(nd, j) == 1:
                parts = P.coeffs_in(nd, j)
                conj = P.sub(parts.get(0, {}), P.mul(parts[1], P.gen(j, n)))
                cn = _reduce_sqrt_poly(P.mul(new[0], conj), j, u, n)
                cd = _reduce_sqrt_poly(P.mul(nd, conj), j, u, n)
                if cd[0] and P.degree(cd[0], j) < 1 and P.degree(cd[1], j) < 1:
                    new = P.rf_mul(cn, P.rf_inv(cd))
            if new != rf:
                rf = new
                changed = True
        if not changed:
            break
    return rf


def normal_form(e: Expr):
    """Return ``(atoms, (num, den))`` -- the canonical rational function of ``e``.

    ``atoms`` lists the generators (symbols and canonical function
    applications) in sort order; ``num``/``den`` are coprime polynomials with
    a monic denominator.
    """
    memo: dict = {}
    found: set = set()
    _collect_atoms(e, memo, found)
    ring = _Ring(found)
    cache: dict = {}
    rf = _to_rf(e, ring, memo, cache)
    if any(isinstance(a, Func) and a.name == "sqrt" for a in ring.atoms):
        rf = _reduce_sqrt(rf, ring, memo, cache)
    # drop generators that cancelled out
    used = P.variables(rf[0]) | P.variables(rf[1])
    if len(used) < ring.n:
        keep = sorted(used)
        atoms = [ring.atoms[i] for i in keep]
        rf = tuple({tuple(m[i] for i in keep): c for m, c in p.items()} for p in rf)
        return atoms, rf
    return ring.atoms, rf


def _mono_expr(coef: Fraction, m, atoms) -> Expr:
    factors = [a if e == 1 else Pow(a, e) for a, e in zip(atoms, m) if e]
    if coef != 1 or not factors:
        factors.insert(0, Num(coef))
    return factors[0] if len(factors) == 1 else Mul(tuple(factors))


def _poly_expr(p: P.Poly, atoms) -> Expr:
    if not p:
        return ZERO
    order = sorted(p, key=lambda m: (sum(m), m), reverse=True)
    terms = [_mono_expr(p[m], m, atoms) for m in order]
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


def from_normal_form(atoms, rf) -> Expr:
    num, den = rf
    top = _poly_expr(num, atoms)
    if P.is_const(den):
        return top
    if len(den) == 1 and num:
        # monomial denominator: divide term by term so that c*a/a prints as c
        (dm, dc), = den.items()
        order = sorted(num, key=lambda m: (sum(m), m), reverse=True)
        terms = [_mono_expr(num[m] / dc, tuple(x - y for x, y in zip(m, dm)), atoms) for m in order]
        return terms[0] if len(terms) == 1 else Add(tuple(terms))
    return Mul((top, Pow(_poly_expr(den, atoms), -1)))


def simplify(e: Expr) -> Expr:
    """Canonical tree for ``e``; equal iff mathematically equal (rational case)."""
    try:
        return e._canon
    except AttributeError:
        pass
    atoms, rf = normal_form(e)
    out = from_normal_form(atoms, rf)
    object.__setattr__(e, "_canon", out)
    object.__setattr__(out, "_canon", out)
    return out


def constant_value(e: Expr):
    """The rational value of ``e`` if it is constant, else None."""
    if isinstance(e, Num):
        return e.value
    if not free_symbols(e) and not functions_used(e):
        s = simplify(e)
        if isinstance(s, Num):
            return s.value
    return None


def numerator_denominator(e: Expr) -> Tuple[Expr, Expr]:
    atoms, (num, den) = normal_form(e)
    return _poly_expr(num, atoms), _poly_expr(den, atoms)


def linear_in(e: Expr, name: str):
    """If ``e`` is affine in symbol ``name``, return ``(coefficient, rest)``."""
    atoms, (num, den) = normal_form(e)
    s = Sym(name)
    if any(isinstance(a, Func) and name in free_symbols(a.arg) for a in atoms):
        return None
    if s not in atoms:
        return ZERO, from_normal_form(atoms, (num, den))
    j = atoms.index(s)
    if P.degree(den, j) > 0 or P.degree(num, j) > 1:
        return None
    parts = P.coeffs_in(num, j)
    coef = from_normal_form(atoms, P.rf_normalize(parts.get(1, {}), den))
    rest = from_normal_form(atoms, P.rf_normalize(parts.get(0, {}), den)) if 0 in parts else ZERO
    return coef, rest


def polynomial_degree(e: Expr, name: str) -> int:
    """Degree of the numerator in ``name``; -1 for the zero expression.

    Returns None when ``name`` occurs in the denominator or inside a function.
    """
    atoms, (num, den) = normal_form(e)
    s = Sym(name)
    for a in atoms:
        if isinstance(a, Func) and name in free_symbols(a.arg):
            return None
    if s not in atoms:
        return 0 if num else -1
    j = atoms.index(s)
    if P.degree(den, j) > 0:
        return None
    return P.degree(num, j)


# -- calculus and substitution ------------------------------------------------------------

def _diff(e: Expr, name: str, memo) -> Expr:
    if e in memo:
        return memo[e]
    if isinstance(e, Num):
        out = ZERO
    elif isinstance(e, Sym):
        out = ONE if e.name == name else ZERO
    elif isinstance(e, Add):
        out = Add(tuple(_diff(a, name, memo) for a in e.args))
    elif isinstance(e, Mul):
        terms = []
        for i, a in enumerate(e.args):
            da = _diff(a, name, memo)
            if da == ZERO:
                continue
            terms.append(Mul(e.args[:i] + (da,) + e.args[i + 1:]))
        out = Add(tuple(terms)) if terms else ZERO
    elif isinstance(e, Pow):
        db = _diff(e.base, name, memo)
        out = ZERO if db == ZERO else Mul((Num(e.exp), Pow(e.base, e.exp - 1), db))
    elif isinstance(e, Func):
        da = _diff(e.arg, name, memo)
        if da == ZERO:
            out = ZERO
        else:
            a = e.arg
            outer = {
                "sin": lambda: Func("cos", a),
                "cos": lambda: -Func("sin", a),
                "exp": lambda: Func("exp", a),
                "sqrt": lambda: Mul((Num(Fraction(1, 2)), Pow(Func("sqrt", a), -1))),
                "log": lambda: Pow(a, -1),
            }.get(e.name, lambda: Func(e.name, a, e.order + 1))()
            out = Mul.of(outer, da)
    else:  # pragma: no cover
        raise TypeError(type(e))
    memo[e] = out
    return out


def differentiate(e: Expr, name: str, table=None) -> Expr:
    """Partial derivative of ``e`` with respect to symbol ``name`` (normalized).

    When a symbol table is given, ``name`` must be declared in it.
    """
    if isinstance(name, Sym):
        name = name.name
    if table is not None and name not in table:
        raise SymbolicError(f"unknown symbol {name}")
    return simplify(_diff(e, name, {}))


def _subs(e: Expr, bindings: Mapping[str, Expr], memo) -> Expr:
    if e in memo:
        return memo[e]
    if isinstance(e, Sym):
        out = bindings.get(e.name, e)
    elif isinstance(e, Num):
        out = e
    elif isinstance(e, Add):
        out = Add(tuple(_subs(a, bindings, memo) for a in e.args))
    elif isinstance(e, Mul):
        out = Mul(tuple(_subs(a, bindings, memo) for a in e.args))
    elif isinstance(e, Pow):
        out = Pow(_subs(e.base, bindings, memo), e.exp)
    elif isinstance(e, Func):
        out = Func(e.name, _subs(e.arg, bindings, memo), e.order)
    else:  # pragma: no cover
        raise TypeError(type(e))
    memo[e] = out
    return out


def substitute(e: Expr, bindings: Mapping, table=None) -> Expr:
    """Simultaneous substitution of symbols, followed by normalization."""
    if not bindings:
        return simplify(e)
    b: Dict[str, Expr] = {}
    for k, v in bindings.items():
        k = k.name if isinstance(k, Sym) else k
        if table is not None and k not in table:
            raise SymbolicError(f"unknown symbol {k}")
        b[k] = as_expr(v)
    return simplify(_subs(e, b, {}))


def _bind(e: Expr, defs, memo) -> Expr:
    if e in memo:
        return memo[e]
    if isinstance(e, (Sym, Num)):
        out = e
    elif isinstance(e, Add):
        out = Add(tuple(_bind(a, defs, memo) for a in e.args))
    elif isinstance(e, Mul):
        out = Mul(tuple(_bind(a, defs, memo) for a in e.args))
    elif isinstance(e, Pow):
        out = Pow(_bind(e.base, defs, memo), e.exp)
    elif isinstance(e, Func):
        arg = _bind(e.arg, defs, memo)
        if e.name in defs:
            var, body = defs[e.name]
            for _ in range(e.order):
                body = _diff(body, var, {})
            out = _subs(body, {var: arg}, {})
        else:
            out = Func(e.name, arg, e.order)
    else:  # pragma: no cover
        raise TypeError(type(e))
    memo[e] = out
    return out


def bind_functions(e: Expr, definitions: Mapping[str, Tuple[str, Expr]]) -> Expr:
    """Replace opaque functions by concrete bodies.

    ``definitions`` maps a function name to ``(variable, body)``; derivative
    applications ``V'(...)`` use the matching derivative of the body.
    """
    if not definitions:
        return e
    return simplify(_bind(e, dict(definitions), {}))


# -- printing -------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _num_str(v: Fraction) -> Tuple[str, int]:
    if v.denominator == 1:
        return (str(v.numerator), _PREC_ATOM if v >= 0 else _PREC_NEG)
    s = f"{v.numerator}/{v.denominator}"
    return (s, _PREC_MUL if v > 0 else _PREC_NEG)


def _paren(s: str, prec: int, need: int) -> str:
    return f"({s})" if prec < need else s


def _fmt(e: Expr) -> Tuple[str, int]:
    if isinstance(e, Num):
        return _num_str(e.value)
    if isinstance(e, Sym):
        return e.name, _PREC_ATOM
    if isinstance(e, Func):
        return f"{e.label}({_fmt(e.arg)[0]})", _PREC_ATOM
    if isinstance(e, Pow):
        if e.exp < 0:
            return _fmt(Mul((e,)))
        b, bp = _fmt(e.base)
        return f"{_paren(b, bp, _PREC_ATOM)}^{e.exp}", _PREC_POW
    if isinstance(e, Add):
        if not e.args:
            return "0", _PREC_ATOM
        out = ""
        for i, a in enumerate(e.args):
            s, p = _fmt(a)
            if i and s.startswith("-") and p >= _PREC_NEG - 1:
                out += " - " + s[1:]
            elif i:
                out += " + " + _paren(s, p, _PREC_ADD + 1)
            else:
                out = s
        return out, _PREC_ADD
    if isinstance(e, Mul):
        return _fmt_mul(e)
    raise TypeError(type(e))  # pragma: no cover


def _fmt_mul(e: Mul) -> Tuple[str, int]:
    coef = Fraction(1)
    top, bottom = [], []
    for a in e.args:
        if isinstance(a, Num):
            coef *= a.value
        elif isinstance(a, Pow) and a.exp < 0:
            bottom.append(a.base if a.exp == -1 else Pow(a.base, -a.exp))
        else:
            top.append(a)
    if not e.args:
        return "1", _PREC_ATOM
    sign = "-" if coef < 0 else ""
    coef = abs(coef)
    num_parts = [_paren(*_fmt(a), _PREC_MUL + 1) if not isinstance(a, Add) else f"({_fmt(a)[0]})"
                 for a in top]
    if coef.numerator != 1 or not num_parts:
        num_parts.insert(0, str(coef.numerator))
    s = "*".join(num_parts)
    dens = [_paren(*_fmt(a), _PREC_POW) for a in bottom]
    if coef.denominator != 1:
        dens.insert(0, str(coef.denominator))
    if dens:
        d = dens[0] if len(dens) == 1 else "(" + "*".join(dens) + ")"
        s = f"{s}/{d}"
    if sign:
        return "-" + s, _PREC_NEG
    return s, _PREC_MUL


def to_string(e: Expr) -> str:
    """Render ``e`` in the input grammar (re-parseable)."""
    return _fmt(e)[0]
