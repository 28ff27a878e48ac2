"""Command-line interface.

Exit codes: 0 success; 1 usage, file or parse errors; 2 inconsistent
constraint set or an initial condition off the constraint surface.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .canontrans import TransformationError, canonicity_certificate
from .hjanalysis import INCONSISTENT, ClosureError
from .legendre import LegendreError
from .pathint import (
    EUCLIDEAN,
    PathIntegralError,
    SlicingPlan,
    propagate_euclidean_mc,
    propagate_quadratic,
)
from .reduced_dynamics import (
    DETERMINED,
    Bindings,
    OffSurfaceError,
    ParameterPath,
    action,
    export,
    export_columns,
    integrate,
)
from .report import AnalysisReport, analyze
from .symexpr import EvaluationError, to_string
from .symexpr.symbols import TIME_NAME
from .sysparse import ParseError, parse_expression, parse_system


class UsageError(Exception):
    pass


class InconsistentSystem(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def shipped_systems() -> List[str]:
    return sorted(p.name[:-4] for p in resources.files("hjpath.systems").iterdir() if p.name.endswith(".hjs"))


def read_system_text(path: str) -> str:
    """File contents; a missing file whose stem names a shipped system falls back to that system."""
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8")
    except OSError:
        stem = p.name[:-4] if p.name.endswith(".hjs") else p.name
        if stem in shipped_systems():
            print(f"note: {path} not found; using the shipped {stem} system", file=sys.stderr)
            return resources.files("hjpath.systems").joinpath(f"{stem}.hjs").read_text(encoding="utf-8")
        raise UsageError(f"cannot read file {path}") from None


def _pairs(text: Optional[str], what: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    if not text:
        return out
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise UsageError(f"malformed {what} entry {item.strip()!r}; expected name=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_values(text: Optional[str], what: str, kind=float) -> Dict[str, object]:
    out = {}
    for k, v in _pairs(text, what).items():
        try:
            out[k] = kind(v.replace(" ", ""))
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad {what} value for {k}: {v!r}") from None
    return out


_POTENTIAL_DEF = re.compile(r"\s*([A-Za-z_]\w*)\s*\(\s*([A-Za-z_]\w*)\s*\)\s*=(.+)")


def build_bindings(spec, args) -> Bindings:
    consts = spec.constant_values()
    consts.update(parse_values(getattr(args, "const", None), "constant", Fraction))
    for k in consts:
        if k not in spec.constants:
            raise UsageError(f"unknown constant {k}")
    potentials = {}
    for text in getattr(args, "potential", None) or []:
        m = _POTENTIAL_DEF.fullmatch(text)
        if not m:
            raise UsageError(f"malformed potential {text!r}; expected e.g. 'V(u)=u/2'")
        name, var, body = m.groups()
        if name not in spec.functions:
            raise UsageError(f"unknown potential {name}")
        potentials[name] = (var, parse_expression(body))
    return Bindings(consts, potentials)


def _analysis(args):
    spec = parse_system(read_system_text(args.file))
    if args.transform is not None and args.transform not in spec.transformations:
        raise UsageError(f"unknown transformation {args.transform!r}")
    return spec, analyze(spec, args.transform)


def _emit(text: str, dest: Optional[str] = None):
    if dest:
        Path(dest).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- commands -------------------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    _, an = _analysis(args)
    rep = AnalysisReport.from_analysis(an)
    _emit(rep.to_json() if args.format == "json" else rep.to_text())
    return 2 if rep.verdict == INCONSISTENT else 0


def cmd_transform(args) -> int:
    spec = parse_system(read_system_text(args.file))
    if args.transform not in spec.transformations:
        raise UsageError(f"unknown transformation {args.transform!r}")
    cert = canonicity_certificate(spec.transformations[args.transform], spec.table)
    if not cert.passed:
        for f in cert.failures:
            print(f"not canonical: {f}", file=sys.stderr)
        return 1
    an = analyze(spec, args.transform)
    rep = AnalysisReport.from_analysis(an)
    if args.format == "json":
        d = {"certificate": {"passed": cert.passed, "proven": cert.proven, "domain": cert.domain,
                             "brackets": [{"pair": list(k), "value": to_string(v)} for k, v in cert.brackets.items()]},
             "report": rep.to_dict()}
        _emit(json.dumps(d, indent=2) + "\n")
    else:
        lines = [f"transformation {args.transform}: canonical ({'proven' if cert.proven else 'probabilistic'})"]
        lines += [f"domain restriction: {d}" for d in cert.domain]
        lines += [f"{c['label']} = {to_string(c['body'])}" for c in rep.constraints]
        lines.append(f"verdict: {rep.verdict}")
        _emit("\n".join(lines) + "\n")
    return 2 if rep.verdict == INCONSISTENT else 0


def _trajectory(args):
    spec, an = _analysis(args)
    rep = an.integrability
    if rep.verdict == INCONSISTENT:
        raise InconsistentSystem("the constraint set is inconsistent; no trajectory exists")
    entries: Dict[str, object] = {}
    free = [p for p in rep.constraints.parameters if p != TIME_NAME]
    for item in args.param or []:
        if item.strip() == DETERMINED:
            entries.update({p: DETERMINED for p in rep.determinations})
            continue
        if "=" not in item:
            raise UsageError(f"malformed --param {item!r}; expected q=<expr in t> or q=determined")
        k, v = (x.strip() for x in item.split("=", 1))
        entries[k] = DETERMINED if v == DETERMINED else parse_expression(v)
    if not args.param and all(p in rep.determinations for p in free):
        entries = {p: DETERMINED for p in free}
    ic = parse_values(args.ic, "initial condition")
    traj = integrate(an.total_diff, rep, ParameterPath(entries), ic, args.t0, args.t1, args.step,
                     bindings=build_bindings(spec, args), drift_tol=args.drift_tol)
    return traj


def cmd_integrate(args) -> int:
    traj = _trajectory(args)
    if args.format == "json":
        cols = export_columns(traj)
        rows = [[float(traj.column(c)[k]) for c in cols] for k in range(len(traj.times))]
        text = json.dumps({"columns": cols, "rows": rows, "step": traj.step, "method": traj.method,
                           "drift": traj.drift, "flagged": traj.flagged}, indent=1) + "\n"
    else:
        text = export(traj)
    _emit(text, args.output)
    if traj.flagged:
        print(f"warning: constraint drift {traj.max_drift:.3e} exceeds {traj.drift_tol:.1e}", file=sys.stderr)
    return 0


def cmd_action(args) -> int:
    traj = _trajectory(args)
    z = action(traj)
    if args.format == "json":
        _emit(json.dumps({"action": z, "t0": args.t0, "t1": args.t1, "step": traj.step,
                          "drift": traj.drift}, indent=2) + "\n")
    else:
        _emit(f"Z = {z:.17g}\n")
    return 0


def _complex(v: complex) -> dict:
    return {"re": v.real, "im": v.imag}


def cmd_propagator(args) -> int:
    spec, an = _analysis(args)
    cs = an.integrability.constraints
    bindings = build_bindings(spec, args)
    if args.regime == "euclidean":
        n = args.slices or 64
        plan = SlicingPlan(n, 0.0, args.beta, {}, {})
        res = propagate_euclidean_mc(cs, plan, sweeps=args.sweeps, seed=args.seed, bindings=bindings)
    else:
        interp = {}
        for item in args.interp or []:
            if "=" not in item:
                raise UsageError(f"malformed --interp {item!r}; expected q2=<expr in s> or q2=linear")
            k, v = (x.strip() for x in item.split("=", 1))
            interp[k] = v if v == "linear" else parse_expression(v)
        plan = SlicingPlan(args.slices or 1024, args.t0, args.t1,
                           parse_values(getattr(args, "from"), "endpoint", complex),
                           parse_values(args.to, "endpoint", complex), interp)
        res = propagate_quadratic(cs, plan, bindings)
    if args.format == "json":
        d = {"regime": res.regime, "quantity": res.quantity, "value": _complex(res.value),
             "error": res.error, "n_sequence": res.n_sequence,
             "raw": [dict(n=n, **_complex(v)) for n, v in res.raw.items()], "warnings": res.warnings}
        _emit(json.dumps(d, indent=2) + "\n")
    else:
        lines = [f"regime: {res.regime}"]
        if res.regime == EUCLIDEAN:
            lines.append(f"ground-state energy: {res.value.real:.10g} +/- {res.error:.3g}")
        else:
            lines.append(f"amplitude: {res.value.real:.15g} {res.value.imag:+.15g}i  (error {res.error:.3g})")
            lines += [f"  N={n}: {v.real:.15g} {v.imag:+.15g}i" for n, v in res.raw.items()]
        lines += [f"warning: {w}" for w in res.warnings]
        _emit("\n".join(lines) + "\n")
    return 0


# -- argument parsing -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hjpath", description="Hamilton-Jacobi analysis of singular Lagrangian systems.")
    ap.add_argument("--version", action="version", version=f"hjpath {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, transform_required=False):
        p.add_argument("file", help=".hjs system file")
        p.add_argument("--transform", required=transform_required, help="canonical transformation block name")
        p.add_argument("--format", choices=("text", "json"), default="text")

    def numeric(p):
        p.add_argument("--const", help="constant values, e.g. 'a1=1,a2=2'")
        p.add_argument("--potential", action="append", help="potential body, e.g. 'V(u)=u/2'")

    p = sub.add_parser("analyze", help="constraint analysis and integrability")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("transform", help="apply and certify a canonical transformation")
    common(p, transform_required=True)
    p.set_defaults(func=cmd_transform)

    for name, fn, helptext in (("integrate", cmd_integrate, "integrate the equations of motion"),
                               ("action", cmd_action, "canonical action along a trajectory")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        numeric(p)
        p.add_argument("--ic", required=True, help="initial values, e.g. 'q1=0,p1=0.5'")
        p.add_argument("--t0", type=float, default=0.0)
        p.add_argument("--t1", type=float, default=1.0)
        p.add_argument("--step", type=float, default=1e-3)
        p.add_argument("--param", action="append", help="'q2=<expr in t>', 'q2=determined' or 'determined'")
        p.add_argument("--drift-tol", type=float, default=1e-8)
        if name == "integrate":
            p.add_argument("--output", help="write the trajectory to this file")
        p.set_defaults(func=fn)

    p = sub.add_parser("propagator", help="sliced path integral")
    common(p)
    numeric(p)
    p.add_argument("--regime", choices=("gaussian", "euclidean"), default="gaussian")
    p.add_argument("--from", help="initial values of reduced coordinates and parameters")
    p.add_argument("--to", help="final values of reduced coordinates and parameters")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--slices", type=int, help="largest slice count (default 1024; 64 for euclidean)")
    p.add_argument("--interp", action="append", help="parameter profile in s, e.g. 'q2=3*s^2-2*s^3'")
    p.add_argument("--beta", type=float, default=8.0, help="imaginary-time extent (euclidean)")
    p.add_argument("--sweeps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_propagator)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OffSurfaceError, InconsistentSystem) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, LegendreError, TransformationError, PathIntegralError, ClosureError,
            EvaluationError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
