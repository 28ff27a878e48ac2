"""Analysis pipeline and its serializable report.

JSON layout (expressions are grammar strings that reparse with
:func:`hjpath.sysparse.parse_expression`)::

    {
      "system":        {"name", "coordinates", "lagrangian", "constants", "functions"},
      "transformation": null | {"name", "new_coordinates", "parameters", "momenta", "domain"},
      "momenta":       {"p1": expr, ...},
      "hessian":       [[expr, ...], ...],
      "rank": int, "solvable": [...], "parameters": ["t", ...],
      "h0":            expr,
      "constraints":   [{"label", "parameter", "momentum", "body"}, ...],
      "equations":     ["dq1 = p1 dt", ...],
      "brackets":      [{"row", "col", "value"}, ...],
      "generated":     [{"label", "body", "provenance"}, ...],
      "determinations": {"q2": expr},
      "verdict": str, "free_parameters": [...], "independent_parameters": int,
      "iterations": int, "proven": bool, "warnings": [...]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

from .canontrans import apply_transformation, canonicity_certificate
from .hjanalysis import IntegrabilityReport, TotalDiffSystem, build_total_diff, closure_loop, constraint_set
from .legendre import LegendreResult, build_constraints
from .symexpr import Expr, is_zero, record_probabilistic_tests, simplify, to_string
from .sysparse import SystemSpec, parse_expression


@dataclass
class Analysis:
    spec: SystemSpec
    legendre: LegendreResult
    integrability: IntegrabilityReport
    total_diff: TotalDiffSystem
    transformation: Optional[str]
    domain: List[str]
    warnings: List[str]

    @property
    def constraints(self):
        return self.integrability.constraints


def analyze(spec: SystemSpec, transform: Optional[str] = None, max_iter: int = 16) -> Analysis:
    """Legendre analysis, optional canonical transformation, closure loop and equations of motion."""
    with record_probabilistic_tests() as log:
        lg = build_constraints(spec)
        cs = constraint_set(lg)
        domain: List[str] = []
        if transform is not None:
            if transform not in spec.transformations:
                raise KeyError(f"unknown transformation {transform!r}")
            tr = spec.transformations[transform]
            domain = canonicity_certificate(tr, spec.table).domain
            cs = apply_transformation(cs, tr)
        rep = closure_loop(cs, max_iter=max_iter)
        tds = build_total_diff(rep.constraints)
    warnings = [f"domain restriction: {d}" for d in domain]
    warnings += rep.diagnostics
    if log:
        warnings.append(f"{len(log)} zero test(s) decided by random sampling "
                        "(opaque or transcendental functions present)")
    return Analysis(spec, lg, rep, tds, transform, domain, warnings)


def _fr(v: Optional[Fraction]) -> Optional[str]:
    return None if v is None else str(v)


@dataclass
class AnalysisReport:
    system: dict
    transformation: Optional[dict]
    momenta: Dict[str, Expr]
    hessian: List[List[Expr]]
    rank: int
    solvable: List[str]
    parameters: List[str]
    h0: Expr
    constraints: List[dict]
    equations: List[str]
    brackets: List[dict]
    generated: List[dict]
    determinations: Dict[str, Expr]
    verdict: str
    free_parameters: List[str]
    iterations: int
    proven: bool
    warnings: List[str] = field(default_factory=list)

    @property
    def independent_parameters(self) -> int:
        return len(self.free_parameters)

    @classmethod
    def from_analysis(cls, an: Analysis) -> "AnalysisReport":
        spec, lg, rep = an.spec, an.legendre, an.integrability
        table = spec.table
        tr = None
        if an.transformation is not None:
            t = spec.transformations[an.transformation]
            tr = {"name": t.name, "new_coordinates": list(t.new_coordinates),
                  "parameters": list(t.parameters), "momenta": list(t.momenta), "domain": list(an.domain)}
        cons = [{"label": c.label, "parameter": c.parameter, "momentum": c.momentum, "body": c.body}
                for c in rep.constraints.parameterized]
        return cls(
            system={"name": spec.name, "coordinates": list(spec.coordinates),
                    "lagrangian": spec.lagrangian,
                    "constants": {k: _fr(v) for k, v in spec.constants.items()},
                    "functions": dict(spec.functions)},
            transformation=tr,
            momenta={table.momentum(c): p for c, p in zip(spec.coordinates, lg.momenta)},
            hessian=[list(r) for r in lg.hessian],
            rank=lg.rank,
            solvable=list(lg.solvable),
            parameters=list(rep.constraints.parameters),
            h0=lg.h0,
            constraints=cons,
            equations=an.total_diff.equations(),
            brackets=[{"row": r, "col": c, "value": v} for (r, c), v in rep.brackets.items()],
            generated=[{"label": g.label, "body": g.body, "provenance": g.provenance} for g in rep.generated],
            determinations=dict(rep.determinations),
            verdict=rep.verdict,
            free_parameters=rep.free_parameters,
            iterations=rep.iterations,
            proven=rep.proven,
            warnings=list(an.warnings),
        )

    # -- serialization ------------------------------------------------------------------------

    def to_dict(self) -> dict:
        s = to_string
        system = dict(self.system)
        system["lagrangian"] = s(system["lagrangian"])
        return {
            "system": system,
            "transformation": self.transformation,
            "momenta": {k: s(v) for k, v in self.momenta.items()},
            "hessian": [[s(e) for e in row] for row in self.hessian],
            "rank": self.rank,
            "solvable": self.solvable,
            "parameters": self.parameters,
            "h0": s(self.h0),
            "constraints": [dict(c, body=s(c["body"])) for c in self.constraints],
            "equations": self.equations,
            "brackets": [dict(b, value=s(b["value"])) for b in self.brackets],
            "generated": [dict(g, body=s(g["body"])) for g in self.generated],
            "determinations": {k: s(v) for k, v in self.determinations.items()},
            "verdict": self.verdict,
            "free_parameters": self.free_parameters,
            "independent_parameters": self.independent_parameters,
            "iterations": self.iterations,
            "proven": self.proven,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        funcs = d["system"].get("functions") or {}

        def p(src: str) -> Expr:
            return parse_expression(src, None, funcs)

        system = dict(d["system"])
        system["lagrangian"] = p(system["lagrangian"])
        return cls(
            system=system,
            transformation=d.get("transformation"),
            momenta={k: p(v) for k, v in d["momenta"].items()},
            hessian=[[p(e) for e in row] for row in d["hessian"]],
            rank=d["rank"],
            solvable=list(d["solvable"]),
            parameters=list(d["parameters"]),
            h0=p(d["h0"]),
            constraints=[dict(c, body=p(c["body"])) for c in d["constraints"]],
            equations=list(d["equations"]),
            brackets=[dict(b, value=p(b["value"])) for b in d["brackets"]],
            generated=[dict(g, body=p(g["body"])) for g in d["generated"]],
            determinations={k: p(v) for k, v in d["determinations"].items()},
            verdict=d["verdict"],
            free_parameters=list(d["free_parameters"]),
            iterations=d["iterations"],
            proven=d["proven"],
            warnings=list(d["warnings"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))

    def equivalent(self, other: "AnalysisReport") -> bool:
        """Field-wise equality, expressions compared by zero test of the difference."""
        def same(a: Expr, b: Expr) -> bool:
            return bool(is_zero(simplify(a - b)))

        def same_rows(xs, ys, key):
            return len(xs) == len(ys) and all(
                {k: v for k, v in x.items() if k != key} == {k: v for k, v in y.items() if k != key}
                and same(x[key], y[key]) for x, y in zip(xs, ys))

        sa = {k: v for k, v in self.system.items() if k != "lagrangian"}
        sb = {k: v for k, v in other.system.items() if k != "lagrangian"}
        return (
            sa == sb and same(self.system["lagrangian"], other.system["lagrangian"])
            and self.transformation == other.transformation
            and self.momenta.keys() == other.momenta.keys()
            and all(same(self.momenta[k], other.momenta[k]) for k in self.momenta)
            and len(self.hessian) == len(other.hessian)
            and all(same(a, b) for ra, rb in zip(self.hessian, other.hessian) for a, b in zip(ra, rb))
            and (self.rank, self.solvable, self.parameters) == (other.rank, other.solvable, other.parameters)
            and same(self.h0, other.h0)
            and same_rows(self.constraints, other.constraints, "body")
            and self.equations == other.equations
            and same_rows(self.brackets, other.brackets, "value")
            and same_rows(self.generated, other.generated, "body")
            and self.determinations.keys() == other.determinations.keys()
            and all(same(self.determinations[k], other.determinations[k]) for k in self.determinations)
            and (self.verdict, self.free_parameters, self.iterations, self.proven, self.warnings)
            == (other.verdict, other.free_parameters, other.iterations, other.proven, other.warnings)
        )

    # -- text ------------------------------------------------------------------------------------

    def to_text(self) -> str:
        s = to_string
        out = [f"system {self.system['name']}: coordinates {' '.join(self.system['coordinates'])}",
               f"  L = {s(self.system['lagrangian'])}"]
        if self.transformation:
            t = self.transformation
            out.append(f"transformation {t['name']}: new coordinates {' '.join(t['new_coordinates'])}, "
                       f"canonical")
        out.append("momenta:")
        out += [f"  {k} = {s(v)}" for k, v in self.momenta.items()]
        out.append(f"Hessian rank {self.rank}; solvable {' '.join(self.solvable) or '-'}; "
                   f"parameters {' '.join(self.parameters)}")
        out.append(f"H0 = {s(self.h0)}")
        out.append("constraints:")
        out += [f"  {c['label']} = {s(c['body'])}" for c in self.constraints]
        out.append("equations of motion:")
        out += [f"  {e}" for e in self.equations]
        nonzero = [b for b in self.brackets if not is_zero(b["value"])]
        out.append("nonzero brackets:" if nonzero else "all brackets vanish identically")
        out += [f"  [{b['row']}, {b['col']}] = {s(b['value'])}" for b in nonzero]
        if self.generated:
            out.append("generated constraints:")
            out += [f"  {g['label']} = {s(g['body'])}   ({g['provenance']})" for g in self.generated]
        if self.determinations:
            out.append("determinations:")
            out += [f"  d{k} = ({s(v)}) dt" for k, v in self.determinations.items()]
        out.append(f"verdict: {self.verdict}")
        out.append(f"independent parameters: {self.independent_parameters} ({', '.join(self.free_parameters)})")
        out += [f"warning: {w}" for w in self.warnings]
        return "\n".join(out) + "\n"
