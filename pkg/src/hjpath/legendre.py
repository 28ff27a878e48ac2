"""Legendre analysis of possibly singular Lagrangians.

Computes the momenta, the velocity Hessian and its rank, splits the
coordinates into solvable ones and parameters, inverts the solvable momentum
relations for their velocities and assembles the canonical Hamiltonian
``H0`` together with the primary constraint functions ``H_mu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .symexpr import (
    ZERO,
    Expr,
    Sym,
    differentiate,
    is_zero,
    simplify,
    substitute,
)


class LegendreError(ValueError):
    pass


@dataclass
class LegendreResult:
    coordinates: List[str]
    momenta: List[Expr]
    hessian: List[List[Expr]]
    rank: int
    solvable: List[str]
    parameters: List[str]
    w: Dict[str, Expr]
    h0: Expr
    h_mu: Dict[str, Expr]
    table: object
    proven: bool = True
    notes: List[str] = field(default_factory=list)

    @property
    def n_parameters(self) -> int:
        return len(self.parameters)

    def primary_constraints(self) -> Dict[str, Expr]:
        """``H'_mu = p_mu + H_mu`` keyed by parameter coordinate."""
        return {mu: simplify(Sym(self.table.momentum(mu)) + h) for mu, h in self.h_mu.items()}


def compute_momenta(spec) -> List[Expr]:
    """``p_i = dL/d(q_i_dot)`` for every coordinate."""
    t = spec.table
    return [differentiate(spec.lagrangian, t.velocity(c)) for c in spec.coordinates]


def _eliminate(rows: List[List[Expr]], ncols: int):
    """Row-reduce a symbolic matrix; returns ([(column, row) pivots], proven)."""
    rows = [list(r) for r in rows]
    used = set()
    pivots: List[Tuple[int, int]] = []
    proven = True
    for col in range(ncols):
        pivot = None
        for r in range(len(rows)):
            if r in used:
                continue
            z = is_zero(rows[r][col])
            proven &= z.proven
            if not z:
                pivot = r
                break
        if pivot is None:
            continue
        used.add(pivot)
        pivots.append((col, pivot))
        pv = rows[pivot][col]
        for r in range(len(rows)):
            if r in used:
                continue
            factor = rows[r][col]
            if is_zero(factor):
                continue
            rows[r] = [simplify(rows[r][k] - factor / pv * rows[pivot][k]) for k in range(ncols)]
    return pivots, proven


def hessian_rank(spec, parameters: Optional[Sequence[str]] = None):
    """Velocity Hessian, its rank and the (solvable, parameter) partition.

    Without an explicit ``parameters`` choice (argument or the system's
    declared ``parameters``) pivots are taken greedily, lowest coordinate
    index first.  Returns ``(hessian, rank, (solvable, parameters), proven)``.
    """
    t = spec.table
    coords = spec.coordinates
    momenta = compute_momenta(spec)
    hess = [[differentiate(p, t.velocity(c)) for c in coords] for p in momenta]
    pivots, proven = _eliminate(hess, len(coords))
    rank = len(pivots)
    chosen = parameters if parameters is not None else getattr(spec, "parameters", None)
    if chosen is None:
        solvable = [coords[c] for c, _ in sorted(pivots)]
    else:
        chosen = list(chosen)
        solvable = [c for c in coords if c not in chosen]
        idx = [coords.index(c) for c in solvable]
        sub = [[hess[i][j] for j in idx] for i in idx]
        sub_pivots, sub_proven = _eliminate(sub, len(idx))
        proven &= sub_proven
        if len(solvable) != rank or len(sub_pivots) != rank:
            raise LegendreError(
                f"irregular Legendre structure: parameters {' '.join(chosen)} do not leave a "
                f"nonsingular block of rank {rank}")
    params = [c for c in coords if c not in solvable]
    return hess, rank, (solvable, params), proven


def _solve_linear(a: List[List[Expr]], b: List[Expr]) -> List[Expr]:
    """Gauss-Jordan solve of a square symbolic system."""
    n = len(a)
    m = [list(row) + [rhs] for row, rhs in zip(a, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if not is_zero(m[r][col])), None)
        if piv is None:
            raise LegendreError("irregular Legendre structure: singular velocity block")
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [simplify(x / pv) for x in m[col]]
        for r in range(n):
            if r != col and not is_zero(m[r][col]):
                f = m[r][col]
                m[r] = [simplify(x - f * y) for x, y in zip(m[r], m[col])]
    return [row[n] for row in m]


def build_constraints(spec, parameters: Optional[Sequence[str]] = None) -> LegendreResult:
    """Full Legendre analysis: velocities, ``H0`` and primary constraints."""
    t = spec.table
    coords = spec.coordinates
    vel = [t.velocity(c) for c in coords]
    momenta = compute_momenta(spec)
    hess, rank, (solvable, params), proven = hessian_rank(spec, parameters)

    for row in hess:
        for entry in row:
            for v in vel:
                if not is_zero(differentiate(entry, v)):
                    raise LegendreError("momentum relations are nonlinear in the velocities; "
                                        "branch selection is not supported")

    zero_vel = {v: ZERO for v in vel}
    offsets = [substitute(p, zero_vel) for p in momenta]
    s_idx = [coords.index(c) for c in solvable]
    m_idx = [coords.index(c) for c in params]
    a_ss = [[hess[i][j] for j in s_idx] for i in s_idx]
    rhs = []
    for i in s_idx:
        r = Sym(t.momentum(coords[i])) - offsets[i]
        for j in m_idx:
            r = r - hess[i][j] * Sym(vel[j])
        rhs.append(simplify(r))
    sol = _solve_linear(a_ss, rhs) if s_idx else []
    w = {coords[i]: s for i, s in zip(s_idx, sol)}
    wv = {vel[i]: s for i, s in zip(s_idx, sol)}

    for i in s_idx:
        back = substitute(momenta[i], wv) - Sym(t.momentum(coords[i]))
        if not is_zero(back):
            raise LegendreError(f"velocity inversion failed for {coords[i]}")

    h_mu: Dict[str, Expr] = {}
    for j in m_idx:
        pm = substitute(momenta[j], wv)
        for v in vel:
            if not is_zero(differentiate(pm, v)):
                raise LegendreError(f"non-projectable constraint for {coords[j]}")
        h_mu[coords[j]] = simplify(-substitute(pm, zero_vel))

    h0 = -substitute(spec.lagrangian, wv)
    for i in s_idx:
        h0 = h0 + Sym(t.momentum(coords[i])) * sol[s_idx.index(i)]
    for j in m_idx:
        h0 = h0 - h_mu[coords[j]] * Sym(vel[j])
    h0 = simplify(h0)
    for v in vel:
        if not is_zero(differentiate(h0, v)):
            raise LegendreError("canonical Hamiltonian depends on velocities")
    h0 = substitute(h0, zero_vel)

    return LegendreResult(
        coordinates=list(coords),
        momenta=momenta,
        hessian=hess,
        rank=rank,
        solvable=solvable,
        parameters=params,
        w=w,
        h0=h0,
        h_mu=h_mu,
        table=t,
        proven=proven,
    )
