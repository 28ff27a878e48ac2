"""Hamilton-Jacobi constraint analysis.

The set of Hamiltonians ``H'_alpha = p_alpha + H_alpha`` (one per parameter
``t_alpha`` = time and the non-invertible coordinates) generates the motion
through total differential equations.  :func:`closure_loop` checks their
integrability: the total variation ``dH'_g = sum_a [H'_g, H'_a] dt_a`` of
every constraint must vanish.  Non-vanishing variations either fix a
parameter differential (a *determination*) or supply new constraints, and
the loop repeats until nothing changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .symexpr import (
    ZERO,
    Expr,
    Sym,
    constant_value,
    differentiate,
    free_symbols,
    is_zero,
    linear_in,
    simplify,
    substitute,
    to_string,
)
from .symexpr.symbols import TIME_MOMENTUM_NAME, TIME_NAME

INTEGRABLE = "integrable"
AFTER_DETERMINATION = "integrable-after-determination"
INCONSISTENT = "inconsistent"


class ClosureError(RuntimeError):
    """The closure loop did not settle within ``max_iter`` passes."""


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class Constraint:
    """One Hamiltonian ``H'``; ``parameter`` is None for generated constraints."""

    label: str
    body: Expr
    parameter: Optional[str] = None
    momentum: Optional[str] = None
    provenance: str = ""

    @property
    def generated(self) -> bool:
        return self.parameter is None

    @property
    def hamiltonian(self) -> Expr:
        """``H_alpha = H'_alpha - p_alpha``."""
        if self.momentum is None:
            raise ValueError(f"{self.label} carries no parameter")
        return simplify(self.body - Sym(self.momentum))


@dataclass
class ConstraintSet:
    entries: List[Constraint]
    table: object
    reduced: List[str]
    notes: List[str] = field(default_factory=list)

    @property
    def parameterized(self) -> List[Constraint]:
        return [c for c in self.entries if not c.generated]

    @property
    def generated(self) -> List[Constraint]:
        return [c for c in self.entries if c.generated]

    @property
    def parameters(self) -> List[str]:
        return [c.parameter for c in self.parameterized]

    def by_label(self, label: str) -> Constraint:
        for c in self.entries:
            if c.label == label:
                return c
        raise KeyError(label)

    def by_parameter(self, param: str) -> Constraint:
        for c in self.parameterized:
            if c.parameter == param:
                return c
        raise KeyError(param)

    def with_entries(self, entries: Sequence[Constraint]) -> "ConstraintSet":
        return ConstraintSet(list(entries), self.table, list(self.reduced), list(self.notes))


def label_for(param: str) -> str:
    return "H'_0" if param == TIME_NAME else f"H'_{param}"


def constraint_set(legendre) -> ConstraintSet:
    """HJPDE set from a Legendre analysis: ``H'_0 = p0 + H0`` and ``H'_mu``."""
    t = legendre.table
    entries = [Constraint(label_for(TIME_NAME), simplify(Sym(TIME_MOMENTUM_NAME) + legendre.h0),
                          TIME_NAME, TIME_MOMENTUM_NAME)]
    for mu, body in legendre.primary_constraints().items():
        entries.append(Constraint(label_for(mu), body, mu, t.momentum(mu)))
    cs = ConstraintSet(entries, t, list(legendre.solvable))
    check_constraint_set(cs)
    return cs


def check_constraint_set(cs: ConstraintSet):
    """Unit linear momentum in every parameterized entry; no proportional pairs."""
    for c in cs.parameterized:
        lin = linear_in(c.body, c.momentum)
        if lin is None or constant_value(lin[0]) != 1:
            raise ValueError(f"{c.label} must contain {c.momentum} linearly with unit coefficient")
    entries = cs.entries
    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            if _proportional(entries[i].body, entries[j].body):
                raise ValueError(f"{entries[i].label} and {entries[j].label} are proportional")


def _proportional(a: Expr, b: Expr) -> bool:
    ratio = simplify(a / b)
    return constant_value(ratio) is not None


# -- brackets ---------------------------------------------------------------------------

def _pairs(table_or_pairs) -> List[Tuple[str, str]]:
    if hasattr(table_or_pairs, "canonical_pairs"):
        return table_or_pairs.canonical_pairs()
    return list(table_or_pairs)


def poisson_bracket(f: Expr, g: Expr, table_or_pairs) -> Expr:
    """Extended bracket ``sum (df/dq dg/dp - df/dp dg/dq)`` over all canonical pairs.

    ``table_or_pairs`` is a symbol table (pairs ``(t, p0)`` and every
    ``(q_i, p_i)``) or an explicit list of ``(coordinate, momentum)`` names.
    """
    table = table_or_pairs if hasattr(table_or_pairs, "canonical_pairs") else None
    for e in (f, g):
        for s in free_symbols(e):
            if (table is not None and table.is_velocity(s)) or s.endswith("_dot"):
                raise BracketError(f"velocity {s} in bracket argument")
    fs, gs = free_symbols(f), free_symbols(g)
    acc: Expr = ZERO
    for q, p in _pairs(table_or_pairs):
        if (q in fs and p in gs) or (p in fs and q in gs):
            acc = acc + differentiate(f, q) * differentiate(g, p) - differentiate(f, p) * differentiate(g, q)
    return simplify(acc)


# -- total differential equations ---------------------------------------------------------

@dataclass
class TotalDiffSystem:
    """Coefficients of ``dF = sum_alpha c_alpha dt_alpha`` for every phase-space variable."""

    parameters: List[str]
    reduced: List[str]
    dq: Dict[str, Dict[str, Expr]]
    dp: Dict[str, Dict[str, Expr]]
    dz: Dict[str, Expr]
    hamiltonians: Dict[str, Expr]
    table: object

    def equation(self, var: str) -> str:
        """Pretty ``dvar = c_t dt + c_q2 dq2`` line."""
        coeffs = self.dq.get(var) or self.dp.get(var)
        if coeffs is None and var == "Z":
            coeffs = self.dz
        if coeffs is None:
            raise KeyError(var)
        return f"d{var} = {_combo(coeffs, self.parameters)}"

    def equations(self) -> List[str]:
        t = self.table
        lines = [self.equation(q) for q in self.reduced]
        lines += [self.equation(t.momentum(q)) for q in self.reduced]
        lines += [self.equation(t.momentum(p)) for p in self.parameters if p != TIME_NAME]
        lines.append(self.equation(TIME_MOMENTUM_NAME))
        lines.append(self.equation("Z"))
        return lines


def _combo(coeffs: Dict[str, Expr], params: Sequence[str]) -> str:
    parts = []
    for p in params:
        c = coeffs[p]
        if is_zero(c):
            continue
        cs = to_string(c)
        if cs == "1":
            term = f"d{p}"
        elif cs == "-1":
            term = f"-d{p}"
        else:
            if " + " in cs or " - " in cs[1:]:
                cs = f"({cs})"
            term = f"{cs} d{p}"
        parts.append(term)
    if not parts:
        return "0"
    out = parts[0]
    for term in parts[1:]:
        out += f" - {term[1:]}" if term.startswith("-") else f" + {term}"
    return out


def build_total_diff(cs: ConstraintSet) -> TotalDiffSystem:
    """Equations of motion as total differential equations in the parameters."""
    t = cs.table
    params = cs.parameters
    dq: Dict[str, Dict[str, Expr]] = {}
    dp: Dict[str, Dict[str, Expr]] = {}
    for q in t.coordinates:
        p = t.momentum(q)
        dq[q] = {c.parameter: differentiate(c.body, p) for c in cs.parameterized}
        dp[p] = {c.parameter: simplify(-differentiate(c.body, q)) for c in cs.parameterized}
    dp[TIME_MOMENTUM_NAME] = {c.parameter: simplify(-differentiate(c.body, TIME_NAME)) for c in cs.parameterized}
    hams = {c.parameter: c.hamiltonian for c in cs.parameterized}
    dz = {}
    for c in cs.parameterized:
        acc = -hams[c.parameter]
        for q in cs.reduced:
            acc = acc + Sym(t.momentum(q)) * dq[q][c.parameter]
        dz[c.parameter] = simplify(acc)
    return TotalDiffSystem(params, list(cs.reduced), dq, dp, dz, hams, t)


# -- closure ---------------------------------------------------------------------------------

class _Surface:
    """Constraint surface by successive linear elimination of one variable per constraint."""

    def __init__(self, table, parameters: Sequence[str]):
        self.table = table
        self.parameters = set(parameters)
        self.solved: Dict[str, Expr] = {}
        self.unsolved: List[Expr] = []

    def reduce(self, e: Expr) -> Expr:
        return substitute(e, self.solved) if self.solved else simplify(e)

    def vanishes(self, e: Expr) -> bool:
        return bool(is_zero(self.reduce(e)))

    def _candidates(self, e: Expr) -> List[str]:
        t = self.table
        names = free_symbols(e)
        momenta = [TIME_MOMENTUM_NAME] + [t.momentum(q) for q in t.coordinates]
        coords = [q for q in t.coordinates if q not in self.parameters]
        return [s for s in momenta + coords if s in names]

    def add(self, body: Expr) -> str:
        """Insert a constraint; returns 'redundant', 'contradiction', 'solved' or 'unsolved'."""
        r = self.reduce(body)
        if is_zero(r):
            return "redundant"
        if constant_value(r) is not None:
            return "contradiction"
        choice = None
        for prefer_const in (True, False):
            for s in self._candidates(r):
                lin = linear_in(r, s)
                if lin is None or is_zero(lin[0]):
                    continue
                if prefer_const and constant_value(lin[0]) is None:
                    continue
                choice = (s, lin)
                break
            if choice:
                break
        if choice is None:
            self.unsolved.append(r)
            return "unsolved"
        s, (coef, rest) = choice
        sol = simplify(-rest / coef)
        self.solved = {k: substitute(v, {s: sol}) for k, v in self.solved.items()}
        self.solved[s] = sol
        return "solved"


@dataclass
class IntegrabilityReport:
    constraints: ConstraintSet
    brackets: Dict[Tuple[str, str], Expr]
    generated: List[Constraint]
    determinations: Dict[str, Expr]
    verdict: str
    iterations: int
    diagnostics: List[str] = field(default_factory=list)
    proven: bool = True

    @property
    def free_parameters(self) -> List[str]:
        return [p for p in self.constraints.parameters if p not in self.determinations]

    @property
    def consistent(self) -> bool:
        return self.verdict != INCONSISTENT

    def bracket_matrix(self) -> List[List[Expr]]:
        rows = self.constraints.entries
        cols = self.constraints.parameterized
        return [[self.brackets[(r.label, c.label)] for c in cols] for r in rows]


def _solve_determinations(rows, free_params):
    """Exact elimination of ``sum_mu M[k][mu] dq_mu = -c0_k dt`` over the rationals.

    Returns ``(solutions, residuals, undetermined)``.
    """
    cols = [mu for mu in free_params if any(r[2].get(mu) for r in rows)]
    mat = [[Fraction(r[2].get(mu, 0)) for mu in cols] for r in rows]
    rhs = [simplify(-r[1]) for r in rows]
    pivots = []
    row = 0
    for ci in range(len(cols)):
        piv = next((k for k in range(row, len(mat)) if mat[k][ci] != 0), None)
        if piv is None:
            continue
        mat[row], mat[piv] = mat[piv], mat[row]
        rhs[row], rhs[piv] = rhs[piv], rhs[row]
        pv = mat[row][ci]
        mat[row] = [x / pv for x in mat[row]]
        rhs[row] = simplify(rhs[row] / pv)
        for k in range(len(mat)):
            if k != row and mat[k][ci] != 0:
                f = mat[k][ci]
                mat[k] = [x - f * y for x, y in zip(mat[k], mat[row])]
                rhs[k] = simplify(rhs[k] - f * rhs[row])
        pivots.append((ci, row))
        row += 1
    undetermined = []
    solutions = {}
    for ci, r in pivots:
        others = [cols[j] for j in range(len(cols)) if j != ci and mat[r][j] != 0]
        if others:
            undetermined.append((cols[ci], others))
        else:
            solutions[cols[ci]] = rhs[r]
    residuals = rhs[row:]
    return solutions, residuals, undetermined


def closure_loop(cs: ConstraintSet, max_iter: int = 16) -> IntegrabilityReport:
    """Integrability/closure analysis of a constraint set.

    Each pass forms the variation rows ``sum_a [H'_g, H'_a] dt_a`` for every
    constraint ``g`` (already-determined parameter differentials substituted)
    and reduces the coefficients on the current constraint surface.  A row
    whose free-parameter coefficients are nonzero rationals determines those
    parameters; otherwise each coefficient that does not vanish on the surface
    becomes a new generated constraint.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    table = cs.table
    params_entries = cs.parameterized
    params = [c.parameter for c in params_entries]
    generated: List[Constraint] = list(cs.generated)
    determinations: Dict[str, Expr] = {}
    brackets: Dict[Tuple[str, str], Expr] = {}
    diagnostics: List[str] = []
    proven = True

    def bracket(a: Constraint, b: Constraint) -> Expr:
        key = (a.label, b.label)
        if key not in brackets:
            if (b.label, a.label) in brackets:
                brackets[key] = simplify(-brackets[(b.label, a.label)])
            else:
                brackets[key] = poisson_bracket(a.body, b.body, table)
        return brackets[key]

    def zero(e: Expr) -> bool:
        nonlocal proven
        z = is_zero(e)
        proven &= z.proven
        return z.zero

    verdict = None
    iterations = 0
    while verdict is None:
        iterations += 1
        if iterations > max_iter:
            raise ClosureError(f"closure loop did not settle within {max_iter} iterations")
        working = params_entries + generated
        surface = _Surface(table, params)
        for c in working:
            if surface.add(c.body) == "contradiction":
                diagnostics.append(f"{c.label} reduces to a nonzero constant on the constraint surface")
                verdict = INCONSISTENT
        if verdict:
            break
        if surface.unsolved:
            diagnostics.append("nonlinear constraints kept unreduced: "
                               + ", ".join(to_string(u) for u in surface.unsolved))

        det_rows = []
        candidates: List[Tuple[Expr, str]] = []
        for c in working:
            row = {p.parameter: bracket(c, p) for p in params_entries}
            c0 = row[TIME_NAME]
            for mu, f in determinations.items():
                c0 = c0 + row[mu] * f
            c0 = simplify(c0)
            free = {}
            for mu in params:
                if mu == TIME_NAME or mu in determinations:
                    continue
                red = surface.reduce(row[mu])
                if not zero(red):
                    free[mu] = red
            consts = {mu: constant_value(v) for mu, v in free.items()}
            if free and all(v is not None for v in consts.values()):
                det_rows.append((c, c0, consts))
            elif any(v is not None for v in consts.values()):
                diagnostics.append(f"undetermined direction in d{c.label}: mixed rational and "
                                   f"phase-space coefficients")
                verdict = INCONSISTENT
            else:
                red0 = surface.reduce(c0)
                if not zero(red0):
                    candidates.append((red0, f"dt coefficient of d{c.label}"))
                for mu, v in free.items():
                    candidates.append((v, f"d{mu} coefficient of d{c.label}"))
        if verdict:
            break

        if det_rows:
            free_params = [mu for mu in params if mu != TIME_NAME and mu not in determinations]
            solutions, residuals, undetermined = _solve_determinations(det_rows, free_params)
            for mu, others in undetermined:
                diagnostics.append(f"undetermined direction: d{mu} coupled to "
                                   + ", ".join(f"d{o}" for o in others))
            for r in residuals:
                if not zero(surface.reduce(r)):
                    diagnostics.append(f"conflicting determinations: {to_string(r)} != 0")
                    verdict = INCONSISTENT
            if undetermined:
                verdict = INCONSISTENT
            if verdict:
                break
            if solutions:
                determinations.update(solutions)
                continue

        added = 0
        for body, prov in candidates:
            status = surface.add(body)
            if status == "contradiction":
                diagnostics.append(f"{prov} forces the contradiction {to_string(body)} = 0")
                verdict = INCONSISTENT
                break
            if status == "redundant":
                continue
            generated.append(Constraint(f"G_{len(generated) + 1}", body, provenance=prov))
            added += 1
        if verdict:
            break
        if added:
            continue

        all_zero = all(zero(bracket(r, c)) for r in working for c in params_entries)
        verdict = INTEGRABLE if (all_zero and not generated and not determinations) else AFTER_DETERMINATION

    final = cs.with_entries(params_entries + generated)
    for r in final.entries:
        for c in params_entries:
            bracket(r, c)
    return IntegrabilityReport(
        constraints=final,
        brackets={(r.label, c.label): brackets[(r.label, c.label)]
                  for r in final.entries for c in params_entries},
        generated=[g for g in generated if g not in cs.generated],
        determinations=determinations,
        verdict=verdict,
        iterations=iterations,
        diagnostics=diagnostics,
        proven=proven,
    )
