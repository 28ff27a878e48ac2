"""User-declared canonical transformations of a constraint set.

A transformation gives every old coordinate and momentum as an expression
in the new canonical variables.  Canonicity is certified by computing the
brackets of those expressions in the new variables, which must reproduce
the canonical table ``{q_i, q_j} = {p_i, p_j} = 0``, ``{q_i, p_j} = delta_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .symexpr import (
    Expr,
    Func,
    Sym,
    SymbolTable,
    constant_value,
    free_symbols,
    is_zero,
    linear_in,
    simplify,
    substitute,
    to_string,
    walk,
)
from .symexpr.symbols import TIME_MOMENTUM_NAME, TIME_NAME


class TransformationError(ValueError):
    pass


@dataclass
class Transformation:
    name: str
    new_coordinates: List[str]
    parameters: List[str]
    momenta: List[str]
    substitutions: Dict[str, Expr]

    @classmethod
    def identity(cls, table, parameters: Sequence[str] = (), name: str = "identity") -> "Transformation":
        coords = table.coordinates
        return cls(name, list(coords), list(parameters), [table.momentum(c) for c in coords], {})

    def table(self, constants: Sequence[str] = (), functions: Optional[Dict[str, int]] = None) -> SymbolTable:
        return SymbolTable.build(self.new_coordinates, constants=constants, functions=functions,
                                 momenta=self.momenta, with_velocities=False)

    def momentum_of(self, coord: str) -> str:
        return self.momenta[self.new_coordinates.index(coord)]

    def full_map(self, old_table) -> Dict[str, Expr]:
        """Old coordinate/momentum -> expression in the new variables.

        Old names absent from the declared substitutions map to the new
        symbol of the same name, which must exist.
        """
        new_names = set(self.new_coordinates) | set(self.momenta)
        out = {}
        for c in old_table.coordinates:
            for old in (c, old_table.momentum(c)):
                if old in self.substitutions:
                    out[old] = self.substitutions[old]
                elif old in new_names:
                    out[old] = Sym(old)
                else:
                    raise TransformationError(f"transformation {self.name} leaves {old} unresolved")
        return out

    def domain_restrictions(self) -> List[str]:
        """Positivity conditions of square-root arguments (principal branch)."""
        seen = []
        for e in self.substitutions.values():
            for node in walk(e):
                if isinstance(node, Func) and node.name == "sqrt":
                    cond = f"{to_string(node.arg)} > 0"
                    if cond not in seen:
                        seen.append(cond)
        return seen


@dataclass
class CanonicityCertificate:
    passed: bool
    brackets: Dict[Tuple[str, str], Expr]
    failures: List[str]
    proven: bool
    domain: List[str] = field(default_factory=list)


def canonicity_certificate(tr: Transformation, old_table) -> CanonicityCertificate:
    """Bracket table of the old variables evaluated in the new canonical variables."""
    from .hjanalysis import poisson_bracket

    new_table = tr.table(old_table.constants, {f: old_table.arity[f] for f in old_table.functions})
    images = tr.full_map(old_table)
    pairs = [(c, new_table.momentum(c)) for c in new_table.coordinates]
    coords = old_table.coordinates
    names = coords + [old_table.momentum(c) for c in coords]
    n = len(coords)
    brackets: Dict[Tuple[str, str], Expr] = {}
    failures = []
    proven = True
    for i, a in enumerate(names):
        for j in range(i + 1, len(names)):
            b = names[j]
            val = poisson_bracket(images[a], images[b], pairs)
            brackets[(a, b)] = val
            expected = 1 if (i < n and j == i + n) else 0
            z = is_zero(simplify(val - expected))
            proven &= z.proven
            if not z:
                failures.append(f"{{{a}, {b}}} = {to_string(val)}, expected {expected}")
    return CanonicityCertificate(not failures, brackets, failures, proven, tr.domain_restrictions())


def apply_transformation(cs, tr: Transformation, waive_canonicity: bool = False):
    """Rewrite every ``H'_alpha`` in the new variables as ``K'_alpha = P_alpha + K_alpha``."""
    from .hjanalysis import Constraint, ConstraintSet, check_constraint_set, label_for

    old = cs.table
    notes = list(cs.notes)
    if waive_canonicity:
        notes.append(f"canonicity of {tr.name} not checked (waived)")
    else:
        cert = canonicity_certificate(tr, old)
        if not cert.passed:
            raise TransformationError(f"transformation {tr.name} is not canonical: " + "; ".join(cert.failures))
        notes.extend(f"domain restriction: {d}" for d in cert.domain)

    new_table = tr.table(old.constants, {f: old.arity[f] for f in old.functions})
    images = tr.full_map(old)
    allowed = {TIME_NAME, TIME_MOMENTUM_NAME} | set(new_table.coordinates) | set(new_table.momenta) \
        | set(old.constants)
    old_params = cs.parameters
    if len(old_params) != len(tr.parameters) + 1:
        raise TransformationError(
            f"transformation {tr.name} declares {len(tr.parameters)} parameter(s); "
            f"the constraint set has {len(old_params) - 1}")
    param_map = {TIME_NAME: TIME_NAME}
    rest = [p for p in old_params if p != TIME_NAME]
    for p in rest:
        param_map[p] = p if p in tr.parameters else None
    unmatched = [p for p in tr.parameters if p not in rest]
    for p in rest:
        if param_map[p] is None:
            param_map[p] = unmatched.pop(0)

    entries = []
    for c in cs.entries:
        body = substitute(c.body, images)
        stray = free_symbols(body) - allowed
        if stray:
            raise TransformationError(f"{c.label} keeps old symbol(s) {', '.join(sorted(stray))}")
        if c.generated:
            entries.append(Constraint(c.label, body, provenance=c.provenance))
            continue
        param = param_map[c.parameter]
        mom = TIME_MOMENTUM_NAME if param == TIME_NAME else new_table.momentum(param)
        lin = linear_in(body, mom)
        scale = constant_value(lin[0]) if lin is not None else None
        if not scale:
            raise TransformationError(f"{c.label} does not contain {mom} linearly after transformation")
        if scale != 1:
            body = simplify(body / scale)
        entries.append(Constraint(label_for(param).replace("H'", "K'"), body, param, mom))
    reduced = [q for q in new_table.coordinates if q not in tr.parameters]
    out = ConstraintSet(entries, new_table, reduced, notes)
    check_constraint_set(out)
    return out
