"""Sparse multivariate polynomials and rational functions over the rationals.

Polynomials are plain dicts mapping fixed-length exponent tuples to
``Fraction`` coefficients.  The tuple length is the number of generators of
the ring the caller works in; generator ``i`` is the ``i``-th atom of that
ring.  Lexicographic order on exponent tuples is Python tuple order.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from typing import Dict, Tuple

Monomial = Tuple[int, ...]
Poly = Dict[Monomial, Fraction]


def const(c, nvars: int) -> Poly:
    c = Fraction(c)
    return {(0,) * nvars: c} if c else {}


def gen(i: int, nvars: int) -> Poly:
    m = [0] * nvars
    m[i] = 1
    return {tuple(m): Fraction(1)}


def is_const(p: Poly) -> bool:
    return not p or (len(p) == 1 and not any(next(iter(p))))


def const_value(p: Poly) -> Fraction:
    if not p:
        return Fraction(0)
    assert is_const(p)
    return next(iter(p.values()))


def add(a: Poly, b: Poly) -> Poly:
    if len(a) < len(b):
        a, b = b, a
    out = dict(a)
    for m, c in b.items():
        v = out.get(m, 0) + c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def neg(a: Poly) -> Poly:
    return {m: -c for m, c in a.items()}


def sub(a: Poly, b: Poly) -> Poly:
    return add(a, neg(b))


def scale(a: Poly, c) -> Poly:
    c = Fraction(c)
    if not c:
        return {}
    return {m: v * c for m, v in a.items()}


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def mul(a: Poly, b: Poly) -> Poly:
    if not a or not b:
        return {}
    if len(a) < len(b):
        a, b = b, a
    out: Poly = {}
    for mb, cb in b.items():
        for ma, ca in a.items():
            m = mono_mul(ma, mb)
            v = out.get(m, 0) + ca * cb
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def power(a: Poly, n: int, nvars: int) -> Poly:
    if n < 0:
        raise ValueError("negative polynomial power")
    result = const(1, nvars)
    base = a
    while n:
        if n & 1:
            result = mul(result, base)
        n >>= 1
        if n:
            base = mul(base, base)
    return result


def degree(a: Poly, i: int) -> int:
    return max((m[i] for m in a), default=-1)


def total_degree(a: Poly) -> int:
    return max((sum(m) for m in a), default=-1)


def variables(a: Poly) -> set:
    out = set()
    for m in a:
        out.update(i for i, e in enumerate(m) if e)
    return out


def leading(a: Poly) -> Monomial:
    return max(a)


def coeffs_in(a: Poly, i: int) -> Dict[int, Poly]:
    """Split ``a`` into coefficients of powers of generator ``i``."""
    out: Dict[int, Poly] = {}
    for m, c in a.items():
        e = m[i]
        stripped = m[:i] + (0,) + m[i + 1:]
        out.setdefault(e, {})[stripped] = c
    return out


def monic(a: Poly) -> Poly:
    if not a:
        return a
    lc = a[leading(a)]
    return a if lc == 1 else scale(a, 1 / lc)


class NotDivisible(ArithmeticError):
    pass


def _mono_div(a: Monomial, b: Monomial):
    out = tuple(x - y for x, y in zip(a, b))
    return None if any(e < 0 for e in out) else out


def exact_div(a: Poly, b: Poly) -> Poly:
    """Quotient of ``a`` by ``b``; raises NotDivisible when there is a remainder."""
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    if is_const(b):
        return scale(a, 1 / const_value(b))
    lb = leading(b)
    cb = b[lb]
    q: Poly = {}
    r = dict(a)
    while r:
        lr = leading(r)
        m = _mono_div(lr, lb)
        if m is None:
            raise NotDivisible
        c = r[lr] / cb
        q[m] = q.get(m, 0) + c
        r = sub(r, {mono_mul(m, mb): c * cv for mb, cv in b.items()})
    return q


def _prem(a: Poly, b: Poly, i: int) -> Poly:
    db = degree(b, i)
    lcb = coeffs_in(b, i)[db]
    r = a
    while r:
        dr = degree(r, i)
        if dr < db:
            break
        lcr = coeffs_in(r, i)[dr]
        shift = [0] * len(next(iter(b)))
        shift[i] = dr - db
        xs = {tuple(shift): Fraction(1)}
        r = sub(mul(lcb, r), mul(mul(lcr, xs), b))
    return r


def _content(a: Poly, i: int) -> Poly:
    g: Poly = {}
    for c in coeffs_in(a, i).values():
        g = gcd(g, c)
        if is_const(g):
            break
    return g


def _integral(a: Poly) -> Poly:
    """Scale to integer coefficients with unit content, keeping growth in check."""
    if not a:
        return a
    den = 1
    for c in a.values():
        den = den * c.denominator // math.gcd(den, c.denominator)
    num = 0
    for c in a.values():
        num = math.gcd(num, (c * den).numerator)
    return scale(a, Fraction(den, num))


def _primitive(a: Poly, i: int) -> Poly:
    return _integral(exact_div(a, _content(a, i)))


def _monomial_gcd(a: Poly, b: Poly) -> Poly:
    ms = list(a) + list(b)
    low = tuple(min(col) for col in zip(*ms))
    return {low: Fraction(1)}


_PRIME = 2 ** 61 - 1
_eval_rng = random.Random(0x5EED)


def _image(a: Poly, i: int, point) -> list:
    """Univariate image of ``a`` in generator ``i`` modulo ``_PRIME``, or None."""
    out = [0] * (degree(a, i) + 1)
    for m, c in a.items():
        if c.denominator % _PRIME == 0:
            return None
        v = c.numerator * pow(c.denominator, -1, _PRIME)
        for j, e in enumerate(m):
            if e and j != i:
                v = v * pow(point[j], e, _PRIME)
        out[m[i]] = (out[m[i]] + v) % _PRIME
    return out


def _coprime_image(a: Poly, b: Poly, i: int) -> bool:
    """True only when the gcd of ``a`` and ``b`` provably has degree 0 in ``i``.

    A modular image whose leading coefficients do not vanish can only raise the
    gcd degree, so a constant image gcd is a proof.
    """
    n = len(next(iter(a)))
    point = [_eval_rng.randrange(1, _PRIME) for _ in range(n)]
    fa, fb = _image(a, i, point), _image(b, i, point)
    if fa is None or fb is None or not fa[-1] or not fb[-1]:
        return False
    while fb:
        inv = pow(fb[-1], -1, _PRIME)
        while len(fa) >= len(fb):
            k = fa[-1] * inv % _PRIME
            off = len(fa) - len(fb)
            for j, c in enumerate(fb):
                fa[off + j] = (fa[off + j] - k * c) % _PRIME
            while fa and not fa[-1]:
                fa.pop()
            if not fa:
                break
        fa, fb = fb, fa
    return len(fa) == 1


def gcd(a: Poly, b: Poly) -> Poly:
    """Monic greatest common divisor (primitive PRS, recursive on generators)."""
    if not a:
        return monic(b)
    if not b:
        return monic(a)
    if is_const(a) or is_const(b):
        n = len(next(iter(a)))
        return const(1, n)
    if len(a) == 1 or len(b) == 1:
        if len(a) == 1 and len(b) == 1:
            return _monomial_gcd(a, b)
        mono, other = (a, b) if len(a) == 1 else (b, a)
        return _monomial_gcd(mono, {_monomial_gcd_all(other): Fraction(1)})
    va, vb = variables(a), variables(b)
    i = max(va | vb)
    if i not in vb:
        return gcd(_content(a, i), b)
    if i not in va:
        return gcd(a, _content(b, i))
    if len(b) > len(a):
        a, b = b, a
    try:
        exact_div(a, b)
        return monic(b)
    except NotDivisible:
        pass
    ca, cb = _content(a, i), _content(b, i)
    c = gcd(ca, cb)
    if _coprime_image(a, b, i):
        return c
    pa, pb = _integral(exact_div(a, ca)), _integral(exact_div(b, cb))
    if degree(pa, i) < degree(pb, i):
        pa, pb = pb, pa
    while True:
        r = _prem(pa, pb, i)
        if not r:
            break
        if degree(r, i) == 0:
            pb = const(1, len(next(iter(a))))
            break
        pa, pb = pb, _primitive(r, i)
    g = pb if is_const(pb) else _primitive(pb, i)
    return monic(mul(c, g))


def _monomial_gcd_all(a: Poly) -> Monomial:
    return tuple(min(col) for col in zip(*a.keys()))


# -- rational functions -----------------------------------------------------

RF = Tuple[Poly, Poly]


def rf_normalize(num: Poly, den: Poly) -> RF:
    """Cancel common factors and make the denominator monic."""
    if not den:
        raise ZeroDivisionError("rational function with zero denominator")
    if not num:
        n = len(next(iter(den)))
        return {}, const(1, n)
    if not is_const(den):
        g = gcd(num, den)
        if not is_const(g):
            num = exact_div(num, g)
            den = exact_div(den, g)
    lc = den[leading(den)]
    if lc != 1:
        num = scale(num, 1 / lc)
        den = scale(den, 1 / lc)
    return num, den


def _monic_den(num: Poly, den: Poly) -> RF:
    lc = den[leading(den)]
    if lc != 1:
        num = scale(num, 1 / lc)
        den = scale(den, 1 / lc)
    return num, den


def _cancel(a: Poly, g: Poly) -> Tuple[Poly, Poly]:
    """``a / g`` and ``g`` itself, skipping the division when ``g`` is 1."""
    return (a, g) if is_const(g) else (exact_div(a, g), g)


# Both operands are assumed reduced, so only the shared part of the
# denominators can cancel against the result (Henrici's method).

def rf_add(a: RF, b: RF) -> RF:
    (n1, d1), (n2, d2) = a, b
    if not n1:
        return b
    if not n2:
        return a
    if d1 == d2:
        return rf_normalize(add(n1, n2), d1)
    g = gcd(d1, d2)
    b1, _ = _cancel(d1, g)
    e1, _ = _cancel(d2, g)
    num = add(mul(n1, e1), mul(n2, b1))
    if not num:
        return {}, const(1, len(next(iter(d1))))
    h = gcd(num, g)
    num, _ = _cancel(num, h)
    gh, _ = _cancel(g, h)
    return _monic_den(num, mul(mul(b1, e1), gh))


def rf_mul(a: RF, b: RF) -> RF:
    (n1, d1), (n2, d2) = a, b
    if not n1 or not n2:
        return {}, const(1, len(next(iter(d1))))
    g1, g2 = gcd(n1, d2), gcd(n2, d1)
    n1, _ = _cancel(n1, g1)
    d2, _ = _cancel(d2, g1)
    n2, _ = _cancel(n2, g2)
    d1, _ = _cancel(d1, g2)
    return _monic_den(mul(n1, n2), mul(d1, d2))


def rf_inv(a: RF) -> RF:
    n, d = a
    if not n:
        raise ZeroDivisionError("division by zero")
    return rf_normalize(d, n)


def rf_pow(a: RF, k: int, nvars: int) -> RF:
    if k < 0:
        a = rf_inv(a)
        k = -k
    n, d = a
    return power(n, k, nvars), power(d, k, nvars)
