"""Numeric integration of the total differential equations.

Every parameter ``t_alpha`` is driven by the physical time ``t``: the time
itself, an explicit path ``q_mu(t)``, or a determination ``dq_mu = f dt``
from the closure loop.  Along such a path the total differential system
collapses to an ordinary ODE, integrated with fixed-step RK4 together with
the canonical action ``Z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .hjanalysis import IntegrabilityReport, TotalDiffSystem
from .symexpr import (
    Expr,
    Num,
    bind_functions,
    compile_expressions,
    differentiate,
    free_symbols,
    simplify,
    substitute,
    to_string,
)
from .symexpr.numeric import EvaluationError
from .symexpr.symbols import TIME_MOMENTUM_NAME, TIME_NAME

DETERMINED = "determined"
ON_SURFACE_TOL = 1e-9


class OffSurfaceError(ValueError):
    def __init__(self, label: str, residual: float):
        super().__init__(f"initial condition violates {label}: residual {residual:.3e}")
        self.label = label
        self.residual = residual


@dataclass
class Bindings:
    """Numeric values for constants and concrete bodies for opaque functions."""

    constants: Dict[str, Fraction] = field(default_factory=dict)
    potentials: Dict[str, tuple] = field(default_factory=dict)  # name -> (variable, body)

    def apply(self, e: Expr) -> Expr:
        e = bind_functions(e, self.potentials)
        if self.constants:
            e = substitute(e, {k: Num(Fraction(v)) for k, v in self.constants.items()})
        return e


@dataclass
class ParameterPath:
    """One entry per non-time parameter: an expression in ``t`` or ``"determined"``."""

    entries: Dict[str, Union[Expr, str]]

    def validate(self, parameters: Sequence[str], report: Optional[IntegrabilityReport]):
        needed = [p for p in parameters if p != TIME_NAME]
        missing = [p for p in needed if p not in self.entries]
        extra = [p for p in self.entries if p not in needed]
        if missing:
            raise ValueError(f"no path given for parameter(s) {', '.join(missing)}")
        if extra:
            raise ValueError(f"{', '.join(extra)} is not a parameter")
        for p, spec in self.entries.items():
            if spec == DETERMINED:
                if report is None or p not in report.determinations:
                    raise ValueError(f"parameter {p} has no determination")
            elif free_symbols(spec) - {TIME_NAME}:
                raise ValueError(f"path for {p} may depend on t only")
        if report is not None:
            for p in report.determinations:
                if self.entries.get(p) != DETERMINED:
                    raise ValueError(f"parameter {p} is fixed by the closure loop; use 'determined'")

    @classmethod
    def determined(cls, report: IntegrabilityReport) -> "ParameterPath":
        return cls({p: DETERMINED for p in report.determinations})


@dataclass
class Trajectory:
    times: np.ndarray
    names: List[str]  # state columns: coordinates, momenta, p0
    states: np.ndarray
    z: np.ndarray
    parameters: List[str]
    reduced: List[str]
    momenta: List[str]
    step: float
    method: str = "rk4"
    drift: Dict[str, float] = field(default_factory=dict)
    drift_tol: float = 1e-8
    error_estimate: Optional[float] = None

    @property
    def flagged(self) -> bool:
        return any(d > self.drift_tol for d in self.drift.values())

    @property
    def max_drift(self) -> float:
        return max(self.drift.values(), default=0.0)

    def column(self, name: str) -> np.ndarray:
        if name == TIME_NAME:
            return self.times
        if name == "Z":
            return self.z
        return self.states[:, self.names.index(name)]

    def final(self) -> Dict[str, float]:
        out = {n: float(v) for n, v in zip(self.names, self.states[-1])}
        out[TIME_NAME] = float(self.times[-1])
        out["Z"] = float(self.z[-1])
        return out


def action(traj: Trajectory) -> float:
    """``Z(t1) - Z(t0)``."""
    return float(traj.z[-1] - traj.z[0])


def export_columns(traj: Trajectory) -> List[str]:
    params = [p for p in traj.parameters if p != TIME_NAME]
    return [TIME_NAME] + params + list(traj.reduced) + list(traj.momenta) + ["Z"]


def export(traj: Trajectory) -> str:
    """Whitespace-separated table with a header line of symbol names."""
    cols = export_columns(traj)
    data = np.column_stack([traj.column(c) for c in cols])
    lines = [" ".join(cols)]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in data]
    return "\n".join(lines) + "\n"


def _stepping(t0: float, t1: float, step: float):
    if step <= 0:
        raise ValueError("step must be positive")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    n = int(math.ceil((t1 - t0) / step - 1e-9)) if t1 > t0 else 0
    return n, ((t1 - t0) / n if n else step)


def integrate(tds: TotalDiffSystem, report: Optional[IntegrabilityReport], path: ParameterPath,
              ic: Mapping[str, float], t0: float, t1: float, step: float,
              bindings: Optional[Bindings] = None, drift_tol: float = 1e-8,
              estimate_error: bool = False) -> Trajectory:
    """Fixed-step RK4 integration of the total differential system along ``path``.

    Parameter momenta and ``p0`` missing from ``ic`` are filled from their
    own constraints; the completed state must satisfy every constraint of
    the report to ``1e-9``.
    """
    bindings = bindings or Bindings()
    table = tds.table
    params = tds.parameters
    path.validate(params, report)
    coords = table.coordinates
    momenta = [table.momentum(c) for c in coords]
    names = coords + momenta + [TIME_MOMENTUM_NAME]
    args = [TIME_NAME] + names
    index = {n: i for i, n in enumerate(names)}

    def prep(e: Expr) -> Expr:
        e = bindings.apply(e)
        stray = free_symbols(e) - set(args)
        if stray:
            raise ValueError(f"unbound symbol(s) {', '.join(sorted(stray))}; supply constant values")
        return e

    coeff_exprs = []
    for p in params:
        for n in coords:
            coeff_exprs.append(prep(tds.dq[n][p]))
        for n in momenta + [TIME_MOMENTUM_NAME]:
            coeff_exprs.append(prep(tds.dp[n][p]))
        coeff_exprs.append(prep(tds.dz[p]))
    coeff_fn = compile_expressions(coeff_exprs, args)
    m = len(names) + 1

    rate_exprs = []
    path_values = {}
    for p in params:
        if p == TIME_NAME:
            rate_exprs.append(Num(1))
        elif path.entries[p] == DETERMINED:
            rate_exprs.append(prep(report.determinations[p]))
        else:
            body = prep(path.entries[p])
            path_values[p] = compile_expressions([body], [TIME_NAME])
            rate_exprs.append(differentiate(body, TIME_NAME))
    rate_fn = compile_expressions(rate_exprs, args)

    constraints = report.constraints.entries if report is not None else []
    cons_exprs = [prep(c.body) for c in constraints]
    cons_fn = compile_expressions(cons_exprs, args, backend="numpy") if cons_exprs else None

    y0 = _initial_state(ic, t0, names, index, params, path, path_values, report, prep)
    if cons_fn is not None:
        res = cons_fn(t0, *y0)
        for c, r in zip(constraints, res):
            if not abs(r) <= ON_SURFACE_TOL:
                raise OffSurfaceError(c.label, float(abs(r)))

    n_steps, h = _stepping(t0, t1, step)
    times, states, z = _rk4(coeff_fn, rate_fn, len(params), m, t0, h, n_steps, y0)

    drift = {}
    if cons_fn is not None:
        cols = cons_fn(times, *states.T)
        for c, v in zip(constraints, cols):
            drift[c.label] = float(np.max(np.abs(np.broadcast_to(v, times.shape))))
    err = None
    if estimate_error and n_steps:
        _, fine, zf = _rk4(coeff_fn, rate_fn, len(params), m, t0, h / 2, 2 * n_steps, y0)
        diff = np.abs(np.column_stack([fine[::2], zf[::2]]) - np.column_stack([states, z]))
        err = float(np.max(diff)) / 15.0
    return Trajectory(times, names, states, z, list(params), list(tds.reduced), momenta,
                      h, drift=drift, drift_tol=drift_tol, error_estimate=err)


def _initial_state(ic, t0, names, index, params, path, path_values, report, prep) -> List[float]:
    unknown = [k for k in ic if k not in index]
    if unknown:
        raise ValueError(f"unknown initial-condition symbol(s) {', '.join(unknown)}")
    y = [None] * len(names)
    for k, v in ic.items():
        y[index[k]] = float(v)
    for p, fn in path_values.items():
        v = fn(t0)[0]
        if y[index[p]] is not None and abs(y[index[p]] - v) > 1e-12:
            raise ValueError(f"initial {p} = {y[index[p]]} conflicts with its path value {v}")
        y[index[p]] = v
    # momenta conjugate to parameters follow from their own constraints
    fill = {}
    if report is not None:
        for c in report.constraints.parameterized:
            if y[index[c.momentum]] is None:
                fill[c.momentum] = prep(simplify(-c.hamiltonian))
    missing = [n for n in names if y[index[n]] is None and n not in fill]
    if missing:
        raise ValueError(f"initial condition missing {', '.join(missing)}")
    point = {TIME_NAME: t0}
    point.update({n: y[index[n]] for n in names if y[index[n]] is not None})
    for mom, e in fill.items():
        if free_symbols(e) & set(fill):
            raise ValueError(f"cannot fill {mom} from the constraints")
        y[index[mom]] = compile_expressions([e], list(point))(*point.values())[0]
    return y


def _rk4(coeff_fn: Callable, rate_fn: Callable, n_params: int, m: int, t0: float, h: float,
         n_steps: int, y0: Sequence[float]):
    coeff_shape = (n_params, m)

    def deriv(t, y):
        try:
            c = np.asarray(coeff_fn(t, *y), dtype=float).reshape(coeff_shape)
            r = np.asarray(rate_fn(t, *y), dtype=float)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise EvaluationError(f"evaluation failed at t={t:.6g}: {exc}") from None
        return r @ c

    times = t0 + h * np.arange(n_steps + 1)
    out = np.empty((n_steps + 1, m))
    out[0, :-1] = y0
    out[0, -1] = 0.0
    y = out[0].copy()
    comp = np.zeros(m)  # compensated summation keeps roundoff below the truncation error
    for k in range(n_steps):
        t = times[k]
        k1 = deriv(t, y[:-1])
        k2 = deriv(t + h / 2, y[:-1] + h / 2 * k1[:-1])
        k3 = deriv(t + h / 2, y[:-1] + h / 2 * k2[:-1])
        k4 = deriv(t + h, y[:-1] + h * k3[:-1])
        inc = h / 6 * (k1 + 2 * k2 + 2 * k3 + k4) - comp
        nxt = y + inc
        comp = (nxt - y) - inc
        y = nxt
        out[k + 1] = y
    return times, out[:, :-1], out[:, -1]


def describe_path(path: ParameterPath) -> Dict[str, str]:
    return {p: (v if v == DETERMINED else to_string(v)) for p, v in path.entries.items()}
