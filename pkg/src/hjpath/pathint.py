"""Reduced phase-space path integrals.

Quadratic systems are evaluated exactly on the time lattice: every slice
contributes ``p.(q_{k+1} - q_k) - sum_alpha H_alpha dt_alpha`` with ``H``
averaged over the slice ends, so the sliced integral is one large
Fresnel-Gaussian integral over all slice momenta and interior coordinates.
It is reduced by a block-tridiagonal LDL^T factorisation, whose pivot
inertia supplies the Fresnel phase.  Results at several slice counts are
Richardson-extrapolated in ``1/N^2``.

General potentials are handled in imaginary time by lattice Metropolis
sampling of the ground-state energy.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .hjanalysis import INTEGRABLE, ConstraintSet, closure_loop
from .reduced_dynamics import Bindings
from .symexpr import (
    ZERO,
    Expr,
    Sym,
    compile_expressions,
    constant_value,
    differentiate,
    free_symbols,
    is_zero,
    simplify,
    substitute,
)
from .symexpr.symbols import TIME_MOMENTUM_NAME, TIME_NAME

GAUSSIAN = "gaussian-exact"
EUCLIDEAN = "euclidean-mc"
QUADRATIC = "quadratic"
GENERAL = "general"
SLICE_VAR = "s"
DEFAULT_SEQUENCE = (64, 128, 256, 512, 1024)


class PathIntegralError(ValueError):
    pass


class CausticError(PathIntegralError):
    """The sliced quadratic form is singular (focal point)."""


@dataclass
class SlicingPlan:
    """Boundary data and lattice for a sliced path integral.

    ``initial``/``final`` hold values of the reduced coordinates (complex
    allowed) and of the non-time parameters; ``interpolation`` maps a
    parameter to ``"linear"`` or a profile ``g(s)`` with ``g(0)=0``,
    ``g(1)=1`` so that ``q_mu(s) = q_mu0 + (q_mu1 - q_mu0) g(s)``.
    """

    n: int
    t0: float
    t1: float
    initial: Dict[str, complex]
    final: Dict[str, complex]
    interpolation: Dict[str, Union[str, Expr]] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("slice count must be at least 2")
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")

    def sequence(self) -> List[int]:
        """Halvings of ``n`` down to ``n/16`` (the default plan gives 64..1024)."""
        seq = [self.n >> k for k in range(4, -1, -1)]
        return [m for m in seq if m >= 2]

    def profile(self, param: str) -> Expr:
        spec = self.interpolation.get(param, "linear")
        if spec == "linear":
            return Sym(SLICE_VAR)
        for s_val, want in ((0, 0), (1, 1)):
            got = constant_value(substitute(spec, {SLICE_VAR: s_val}))
            if got != want:
                raise PathIntegralError(f"profile for {param} must satisfy g({s_val}) = {want}")
        return spec


@dataclass
class PropagatorResult:
    value: complex
    error: float
    regime: str
    n_sequence: List[int]
    raw: Dict[int, complex]
    quantity: str = "amplitude"
    warnings: List[str] = field(default_factory=list)


# -- quadratic (Gaussian) evaluator ---------------------------------------------------------

@dataclass
class _Quadratic:
    """``H_alpha = 1/2 z^T M z + b.z + c`` over ``z = (q_a, p_a)``, coefficients compiled in params."""

    reduced: List[str]
    params: List[str]
    m: list
    b: list
    c: list


def _hamiltonians(cs: ConstraintSet, bindings: Bindings) -> Dict[str, Expr]:
    out = {}
    forbidden = {TIME_MOMENTUM_NAME} | {cs.table.momentum(p) for p in cs.parameters if p != TIME_NAME}
    for c in cs.parameterized:
        h = bindings.apply(c.hamiltonian)
        if free_symbols(h) & forbidden:
            raise PathIntegralError(f"{c.label} depends on parameter momenta")
        out[c.parameter] = h
    return out


def classify(cs: ConstraintSet, bindings: Optional[Bindings] = None) -> str:
    """``quadratic`` iff every second derivative of every ``H_alpha`` is free of ``(q_a, p_a)``."""
    bindings = bindings or Bindings()
    t = cs.table
    z = list(cs.reduced) + [t.momentum(q) for q in cs.reduced]
    for h in _hamiltonians(cs, bindings).values():
        for i, a in enumerate(z):
            da = differentiate(h, a)
            for b in z[i:]:
                if free_symbols(differentiate(da, b)) & set(z):
                    return GENERAL
    return QUADRATIC


def _decompose(cs: ConstraintSet, bindings: Bindings) -> _Quadratic:
    t = cs.table
    z = list(cs.reduced) + [t.momentum(q) for q in cs.reduced]
    zero = {v: ZERO for v in z}
    params = list(cs.parameters)
    allowed = set(params) | set(z)
    mats, lins, consts = [], [], []
    for alpha, h in _hamiltonians(cs, bindings).items():
        stray = free_symbols(h) - allowed
        if stray:
            raise PathIntegralError(f"unbound symbol(s) {', '.join(sorted(stray))}; supply values")
        grads = [differentiate(h, a) for a in z]
        m = [substitute(differentiate(g, b), zero) for g in grads for b in z]
        b = [substitute(g, zero) for g in grads]
        c = substitute(h, zero)
        mats.append(compile_expressions(m, params, backend="numpy"))
        lins.append(compile_expressions(b, params, backend="numpy"))
        consts.append(compile_expressions([c], params, backend="numpy"))
    return _Quadratic(list(cs.reduced), params, mats, lins, consts)


def _node_parameters(cs: ConstraintSet, plan: SlicingPlan, s: np.ndarray) -> Dict[str, np.ndarray]:
    vals = {TIME_NAME: plan.t0 + (plan.t1 - plan.t0) * s}
    for p in cs.parameters:
        if p == TIME_NAME:
            continue
        if p not in plan.initial or p not in plan.final:
            raise PathIntegralError(f"endpoint values for parameter {p} are required")
        g = compile_expressions([plan.profile(p)], [SLICE_VAR], backend="numpy")
        prof = np.broadcast_to(np.asarray(g(s)[0], dtype=float), s.shape)
        a, b = float(plan.initial[p].real), float(plan.final[p].real)
        vals[p] = a + (b - a) * prof
    return vals


def _eval(fn, params, point, count):
    return [np.broadcast_to(np.asarray(v, dtype=float), (count,)) for v in fn(*[point[p] for p in params])]


def _slice_forms(quad: _Quadratic, cs: ConstraintSet, plan: SlicingPlan, n: int):
    """Per-slice weighted ``M``, ``b``, ``c`` (sum over parameters of ``coef * dt_alpha``)."""
    a = len(quad.reduced)
    nodes = _node_parameters(cs, plan, np.arange(n + 1) / n)
    mids = _node_parameters(cs, plan, (np.arange(n) + 0.5) / n)
    m_tot = np.zeros((n, 2 * a, 2 * a))
    b_tot = np.zeros((n, 2 * a))
    c_tot = np.zeros(n)
    for k, alpha in enumerate(quad.params):
        dt = np.diff(nodes[alpha])
        m = np.stack(_eval(quad.m[k], quad.params, mids, n), axis=-1).reshape(n, 2 * a, 2 * a)
        b = np.stack(_eval(quad.b[k], quad.params, mids, n), axis=-1) if a else np.zeros((n, 0))
        c = _eval(quad.c[k], quad.params, mids, n)[0]
        m_tot += m * dt[:, None, None]
        b_tot += b * dt[:, None]
        c_tot += c * dt
    return m_tot, b_tot, c_tot


def _local_form(m: np.ndarray, b: np.ndarray, c: float, a: int):
    """Slice phase as ``1/2 y^T F y + f.y + f0`` over ``y = (q_k, q_k+1, p_k)``.

    ``H`` is averaged over the two slice ends.  Terms linear in ``q``
    (including the ``p q`` couplings) therefore sit at the midpoint, while the
    ``q q`` block splits onto the nodes, which keeps the lattice error at
    second order in the slice width.
    """
    eye = np.eye(a)
    zero = np.zeros((a, a))
    tmap = np.block([[eye / 2, eye / 2, zero], [zero, zero, eye]])
    sym = np.block([[zero, zero, -eye], [zero, zero, eye], [-eye, eye, zero]])
    mixed = m.copy()
    mixed[:a, :a] = 0.0
    mqq = m[:a, :a] / 2
    nodes = np.block([[mqq, zero, zero], [zero, mqq, zero], [zero, zero, zero]])
    return sym - tmap.T @ mixed @ tmap - nodes, -tmap.T @ b, -c


def _amplitude(quad: _Quadratic, cs: ConstraintSet, plan: SlicingPlan, n: int) -> complex:
    a = len(quad.reduced)
    if a == 0:
        raise PathIntegralError("no reduced degrees of freedom to integrate")
    q_start = np.array([complex(plan.initial[q]) for q in quad.reduced])
    q_end = np.array([complex(plan.final[q]) for q in quad.reduced])
    m_all, b_all, c_all = _slice_forms(quad, cs, plan, n)

    # unknown blocks: block 0 = p_0, block j = (q_j, p_j) for j = 1..n-1
    sizes = [a] + [2 * a] * (n - 1)
    diag = [np.zeros((s, s)) for s in sizes]
    low = [None] + [np.zeros((2 * a, sizes[j - 1])) for j in range(1, n)]  # K[j, j-1]
    g = [np.zeros(s, dtype=complex) for s in sizes]
    const = 0j

    def locate(kind: str, k: int):
        """(block, offset) of an unknown, or None for a fixed endpoint."""
        if kind == "p":
            return (0, 0) if k == 0 else (k, a)
        if k == 0 or k == n:
            return None
        return (k, 0)

    for k in range(n):
        f2, f1, f0 = _local_form(m_all[k], b_all[k], c_all[k], a)
        parts = [("q", k), ("q", k + 1), ("p", k)]
        fixed = {0: q_start if k == 0 else None, 1: q_end if k + 1 == n else None}
        const += f0
        for u, (ku, iu) in enumerate(parts):
            su = slice(u * a, (u + 1) * a)
            lu = locate(ku, iu)
            if lu is None:
                const += f1[su] @ fixed[u]
            else:
                g[lu[0]][lu[1]:lu[1] + a] += f1[su]
            for v, (kv, iv) in enumerate(parts):
                sv = slice(v * a, (v + 1) * a)
                blk = f2[su, sv]
                lv = locate(kv, iv)
                if lu is None and lv is None:
                    const += 0.5 * fixed[u] @ blk @ fixed[v]
                elif lu is None:
                    g[lv[0]][lv[1]:lv[1] + a] += 0.5 * fixed[u] @ blk
                elif lv is None:
                    g[lu[0]][lu[1]:lu[1] + a] += 0.5 * blk @ fixed[v]
                elif lu[0] == lv[0]:
                    diag[lu[0]][lu[1]:lu[1] + a, lv[1]:lv[1] + a] += blk
                elif lu[0] == lv[0] + 1:
                    low[lu[0]][lu[1]:lu[1] + a, lv[1]:lv[1] + a] += blk

    # block LDL^T: pivots D_j = K_jj - L_j D_{j-1}^{-1} L_j^T
    logdet = 0.0
    signature = 0
    pivots = []
    y = []
    scale = max(np.max(np.abs(d)) for d in diag)
    for j in range(n):
        d = diag[j].copy()
        r = g[j].copy()
        if j:
            w = np.linalg.solve(pivots[-1], low[j].T).T
            d -= w @ low[j].T
            r -= w @ y[-1]
        d = (d + d.T) / 2
        eig = np.linalg.eigvalsh(d)
        if np.min(np.abs(eig)) <= 1e-13 * scale:
            raise CausticError(f"singular slice matrix at N={n}")
        logdet += float(np.sum(np.log(np.abs(eig))))
        signature += int(np.sum(eig > 0) - np.sum(eig < 0))
        pivots.append(d)
        y.append(r)
    x = [None] * n
    x[n - 1] = np.linalg.solve(pivots[n - 1], y[n - 1])
    for j in range(n - 2, -1, -1):
        x[j] = np.linalg.solve(pivots[j], y[j] - low[j + 1].T @ x[j + 1])
    quad_term = sum(gj @ xj for gj, xj in zip(g, x))
    dim = sum(sizes)
    # measure: prod_k d^a p_k / (2 pi)^a times interior d^a q_j
    log_mag = -n * a * math.log(2 * math.pi) + dim / 2 * math.log(2 * math.pi) - logdet / 2
    phase = complex(const - 0.5 * quad_term)
    return cmath.exp(log_mag + 1j * math.pi * signature / 4 + 1j * phase)


def richardson(values: Sequence[complex], ratio: float = 2.0, order: int = 2):
    """Richardson table for errors in ``h^order, h^(2 order), ...``; returns (value, error)."""
    table = [list(values)]
    while len(table[-1]) > 1:
        level = len(table)
        fac = ratio ** (order * level)
        prev = table[-1]
        table.append([(fac * prev[i + 1] - prev[i]) / (fac - 1) for i in range(len(prev) - 1)])
    best = table[-1][0]
    if len(table) > 1:
        err = abs(best - table[-2][-1])
    else:
        err = float("inf")
    return best, err


def check_propagatable(cs: ConstraintSet):
    rep = closure_loop(cs)
    if rep.verdict != INTEGRABLE:
        raise PathIntegralError("path integral requires an integrable constraint set "
                                f"(verdict {rep.verdict})")


def amplitude_at(cs: ConstraintSet, plan: SlicingPlan, n: int, bindings: Optional[Bindings] = None) -> complex:
    """Sliced amplitude at a single slice count ``n``."""
    bindings = bindings or Bindings()
    if classify(cs, bindings) != QUADRATIC:
        raise PathIntegralError("Hamiltonian is not quadratic in the reduced variables")
    return _amplitude(_decompose(cs, bindings), cs, plan, n)


def propagate_quadratic(cs: ConstraintSet, plan: SlicingPlan, bindings: Optional[Bindings] = None,
                        n_sequence: Optional[Sequence[int]] = None) -> PropagatorResult:
    """Exact sliced Gaussian evaluation, Richardson-extrapolated over the slice sequence."""
    bindings = bindings or Bindings()
    check_propagatable(cs)
    if classify(cs, bindings) != QUADRATIC:
        raise PathIntegralError("Hamiltonian is not quadratic in the reduced variables")
    quad = _decompose(cs, bindings)
    seq = list(n_sequence) if n_sequence is not None else plan.sequence()
    raw: Dict[int, complex] = {}
    warnings = []
    used = []
    for n in seq:
        try:
            raw[n] = _amplitude(quad, cs, plan, n)
            used.append(n)
        except CausticError as exc:
            alt = n + 1
            raw[alt] = _amplitude(quad, cs, plan, alt)
            used.append(alt)
            warnings.append(f"{exc}; value taken at N={alt} (caustic)")
    doubling = all(b == 2 * a for a, b in zip(used, used[1:]))
    if len(used) > 1 and doubling:
        value, err = richardson([raw[n] for n in used])
    else:
        value = raw[used[-1]]
        err = abs(raw[used[-1]] - raw[used[-2]]) if len(used) > 1 else float("inf")
    return PropagatorResult(value, float(err), GAUSSIAN, used, raw, warnings=warnings)


# -- Euclidean Monte Carlo ----------------------------------------------------------------------

def kinetic_potential_split(cs: ConstraintSet, bindings: Optional[Bindings] = None):
    """Masses and potential of ``H0 = sum p^2/(2 m) + U(q)``; other ``H_alpha`` must vanish."""
    bindings = bindings or Bindings()
    t = cs.table
    hams = _hamiltonians(cs, bindings)
    for alpha, h in hams.items():
        if alpha != TIME_NAME and not is_zero(h):
            raise PathIntegralError("Euclidean evaluation needs a single time parameter "
                                    f"(H for {alpha} does not vanish)")
    h0 = hams[TIME_NAME]
    momenta = [t.momentum(q) for q in cs.reduced]
    zero_p = {p: ZERO for p in momenta}
    u = substitute(h0, zero_p)
    kin = simplify(h0 - u)
    masses = []
    for i, p in enumerate(momenta):
        for j, p2 in enumerate(momenta):
            d2 = constant_value(differentiate(differentiate(kin, p), p2))
            if d2 is None or (i != j and d2 != 0) or (i == j and d2 <= 0):
                raise PathIntegralError("Hamiltonian is not of the form sum p^2/2m + U(q)")
        masses.append(1 / Fraction(constant_value(differentiate(differentiate(kin, p), p))))
    check = simplify(kin - sum((Sym(p) ** 2 / (2 * m) for p, m in zip(momenta, masses)), ZERO))
    if not is_zero(check):
        raise PathIntegralError("Hamiltonian is not of the form sum p^2/2m + U(q)")
    stray = free_symbols(u) - set(cs.reduced)
    if stray:
        raise PathIntegralError(f"potential depends on {', '.join(sorted(stray))}")
    return [float(m) for m in masses], u


def _compile_potential(u: Expr, coords: Sequence[str]):
    import numba

    scalar = numba.njit(cache=False)(compile_expressions([u], coords))
    args = ", ".join(f"x[{i}]" for i in range(len(coords)))
    src = f"def _row(x):\n    return _u({args})[0]\n"
    ns = {"_u": scalar}
    exec(src, ns)
    return numba.njit(cache=False)(ns["_row"])


def _make_sweeper(potential):
    import numba

    @numba.njit(cache=False)
    def sweep(x, masses, eps, delta, props, energy_out):
        n, a = x.shape
        for s in range(props.shape[0]):
            r = 0
            for k in range(n):
                km = (k - 1) % n
                kp = (k + 1) % n
                for d in range(a):
                    old = x[k, d]
                    new = old + delta * (2.0 * props[s, r, 0] - 1.0)
                    u_old = potential(x[k])
                    x[k, d] = new
                    u_new = potential(x[k])
                    m = masses[d]
                    dk = m / (2.0 * eps) * ((x[kp, d] - new) ** 2 + (new - x[km, d]) ** 2
                                            - (x[kp, d] - old) ** 2 - (old - x[km, d]) ** 2)
                    ds = dk + eps * (u_new - u_old)
                    if ds > 0.0 and props[s, r, 1] >= np.exp(-ds):
                        x[k, d] = old
                    r += 1
            kin = 0.0
            pot = 0.0
            for k in range(n):
                kp = (k + 1) % n
                for d in range(a):
                    kin += masses[d] * (x[kp, d] - x[k, d]) ** 2
                pot += potential(x[k])
            energy_out[s] = a / (2.0 * eps) - kin / (2.0 * eps * eps * n) + pot / n
        return x

    return sweep


def propagate_euclidean_mc(cs: ConstraintSet, plan: SlicingPlan, sweeps: int = 100_000, seed: int = 0,
                           bindings: Optional[Bindings] = None, thermalize: Optional[int] = None,
                           chunk: int = 2000, bins: int = 50) -> PropagatorResult:
    """Ground-state energy from an imaginary-time lattice of ``plan.n`` sites over ``beta = t1 - t0``.

    Uses single-site Metropolis updates with the primitive (thermodynamic)
    energy estimator; the error is the standard error over ``bins`` blocks.
    The same seed gives bit-identical output.
    """
    masses, u = kinetic_potential_split(cs, bindings)
    coords = list(cs.reduced)
    a = len(coords)
    n = plan.n
    beta = plan.t1 - plan.t0
    eps = beta / n
    potential = _compile_potential(u, coords)
    sweep = _make_sweeper(potential)
    thermalize = sweeps // 10 if thermalize is None else thermalize
    masses_arr = np.array(masses)
    delta = 2.0 * math.sqrt(eps / min(masses))
    rng = np.random.Generator(np.random.PCG64(seed))
    x = np.zeros((n, a))
    energies = np.empty(sweeps)
    total = thermalize + sweeps
    done = 0
    while done < total:
        m = min(chunk, total - done)
        props = rng.random((m, n * a, 2))
        out = np.empty(m)
        x = sweep(x, masses_arr, eps, delta, props, out)
        lo = max(done, thermalize)
        if done + m > thermalize:
            energies[lo - thermalize: done + m - thermalize] = out[lo - done:]
        done += m
    blocks = np.array_split(energies, bins)
    means = np.array([b.mean() for b in blocks])
    value = float(energies.mean())
    err = float(means.std(ddof=1) / math.sqrt(bins))
    return PropagatorResult(complex(value), err, EUCLIDEAN, [n], {n: complex(value)},
                            quantity="ground_state_energy")
