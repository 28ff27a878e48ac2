import random
from fractions import Fraction

import pytest

from hjpath.hjanalysis import (
    AFTER_DETERMINATION,
    INCONSISTENT,
    INTEGRABLE,
    BracketError,
    ClosureError,
    Constraint,
    build_total_diff,
    check_constraint_set,
    closure_loop,
    constraint_set,
    poisson_bracket,
)
from hjpath.legendre import build_constraints
from hjpath.symexpr import Num, Sym, SymbolTable, constant_value, is_zero, simplify
from hjpath.sysparse import parse_expression, parse_system

from randexpr import PHASE, rand_coef, rand_poly

TABLE = SymbolTable.build(["q1", "q2", "q3"])


def same(a, b):
    r = is_zero(simplify(a - b))
    return r.zero and r.proven


def P(src, spec):
    return parse_expression(src, spec.table, spec.functions)


def analysed(spec):
    cs = constraint_set(build_constraints(spec))
    return cs, closure_loop(cs)


# -- brackets -------------------------------------------------------------------------------------

def test_canonical_pair():
    assert poisson_bracket(Sym("q1"), Sym("p1"), TABLE) == Num(1)
    assert poisson_bracket(Sym("p1"), Sym("q1"), TABLE) == Num(-1)
    assert poisson_bracket(Sym("t"), Sym("p0"), TABLE) == Num(1)
    assert poisson_bracket(Sym("q1"), Sym("p2"), TABLE) == Num(0)


def test_second_class_brackets(second_class):
    cs = constraint_set(build_constraints(second_class))
    h0, h2 = cs.by_label("H'_0").body, cs.by_label("H'_q2").body
    assert same(poisson_bracket(h2, h0, cs.table), P("2*p3 - 2*q3 - p1 - 1", second_class))
    h3 = P("2*p3 - 2*q3 - p1 - 1", second_class)
    assert same(poisson_bracket(h3, h2, cs.table), Num(-1))


def test_velocity_in_bracket_is_rejected():
    with pytest.raises(BracketError, match="q1_dot"):
        poisson_bracket(Sym("q1_dot"), Sym("p1"), TABLE)


def test_explicit_pair_list():
    f = parse_expression("x^2*px")
    assert same(poisson_bracket(f, Sym("px"), [("x", "px")]), parse_expression("2*x*px"))


def _triples(seed, count):
    rng = random.Random(seed)
    for _ in range(count):
        yield tuple(rand_poly(rng, PHASE, max_deg=3, max_terms=3) for _ in range(3))


def test_bracket_antisymmetry():
    for f, g, _ in _triples(21, 200):
        r = is_zero(simplify(poisson_bracket(f, g, TABLE) + poisson_bracket(g, f, TABLE)))
        assert r.zero and r.proven


def test_bracket_jacobi_identity():
    for f, g, h in _triples(22, 200):
        pb = lambda a, b: poisson_bracket(a, b, TABLE)
        total = pb(f, pb(g, h)) + pb(g, pb(h, f)) + pb(h, pb(f, g))
        r = is_zero(simplify(total))
        assert r.zero and r.proven


def test_bracket_leibniz_rule():
    for f, g, h in _triples(23, 200):
        lhs = poisson_bracket(f, g * h, TABLE)
        rhs = g * poisson_bracket(f, h, TABLE) + poisson_bracket(f, g, TABLE) * h
        r = is_zero(simplify(lhs - rhs))
        assert r.zero and r.proven


# -- constraint sets --------------------------------------------------------------------------------

def test_constraint_set_invariants(first_class):
    cs = constraint_set(build_constraints(first_class))
    assert [c.label for c in cs.entries] == ["H'_0", "H'_q2"]
    assert cs.parameters == ["t", "q2"]
    h0 = cs.by_parameter("t")
    assert h0.momentum == "p0" and same(h0.hamiltonian, h0.body - Sym("p0"))


def test_proportional_entries_are_rejected(first_class):
    cs = constraint_set(build_constraints(first_class))
    dup = Constraint("G_1", simplify(Num(3) * cs.entries[1].body))
    with pytest.raises(ValueError, match="proportional"):
        check_constraint_set(cs.with_entries(cs.entries + [dup]))


def test_non_unit_momentum_is_rejected(first_class):
    cs = constraint_set(build_constraints(first_class))
    bad = Constraint("H'_q2", simplify(Num(2) * cs.entries[1].body), "q2", "p2")
    with pytest.raises(ValueError, match="unit coefficient"):
        check_constraint_set(cs.with_entries([cs.entries[0], bad]))


# -- total differential equations --------------------------------------------------------------------

def test_second_class_equations(second_class):
    tds = build_total_diff(constraint_set(build_constraints(second_class)))
    assert tds.equation("q3") == "dq3 = -2*p3 dt + dq2"
    assert tds.equation("p1") == "dp1 = -dt + dq2"


def test_first_class_equations(first_class):
    tds = build_total_diff(constraint_set(build_constraints(first_class)))
    for p in ("p1", "p2", "p3"):
        assert tds.equation(p) == f"d{p} = 0"
    assert tds.equation("q1") == "dq1 = p1/a1 dt"
    assert tds.equation("q3") == "dq3 = -p3/a2 dt + dq2"


def test_regular_equations():
    spec = parse_system("[system]\ncoordinates = q\nlagrangian = (1/2)*q_dot^2\n")
    tds = build_total_diff(constraint_set(build_constraints(spec)))
    assert tds.equation("q") == "dq = p_q dt"
    assert tds.equation("p_q") == "dp_q = 0"
    # action differential: -H + p dH/dp = p^2/2
    assert same(tds.dz["t"], parse_expression("p_q^2/2"))


# -- closure ------------------------------------------------------------------------------------------

def test_first_class_closure(first_class):
    _, rep = analysed(first_class)
    assert rep.verdict == INTEGRABLE and rep.generated == [] and rep.determinations == {}
    assert rep.free_parameters == ["t", "q2"]
    assert all(is_zero(b).zero for row in rep.bracket_matrix() for b in row)


def test_second_class_closure(second_class, second_class_report):
    rep = second_class_report
    assert rep.verdict == AFTER_DETERMINATION
    assert len(rep.generated) == 1
    ratio = constant_value(simplify(rep.generated[0].body / P("2*p3 - 2*q3 - p1 - 1", second_class)))
    assert ratio is not None and ratio != 0
    assert same(rep.determinations["q2"], P("1 - 4*q3 + 4*p3", second_class))
    assert rep.free_parameters == ["t"]
    assert rep.generated[0].provenance


def test_radial_closure(radial):
    _, rep = analysed(radial)
    assert rep.verdict == INTEGRABLE and rep.generated == []
    assert all(is_zero(b).zero for b in rep.brackets.values())


def test_closure_is_idempotent(first_class, second_class_report):
    cs, rep = analysed(first_class)
    again = closure_loop(rep.constraints)
    assert again.verdict == rep.verdict and again.generated == []
    again = closure_loop(second_class_report.constraints)
    assert again.verdict == second_class_report.verdict and again.generated == []
    assert same(again.determinations["q2"], second_class_report.determinations["q2"])


@pytest.mark.parametrize("k", [Fraction(-1), Fraction(3, 7), Fraction(-5, 2)])
def test_scaled_generated_constraint_changes_nothing(second_class_report, k):
    rep = second_class_report
    g = rep.generated[0]
    scaled = Constraint(g.label, simplify(Num(k) * g.body), provenance=g.provenance)
    cs = rep.constraints.with_entries(rep.constraints.parameterized + [scaled])
    again = closure_loop(cs)
    assert again.verdict == rep.verdict
    assert same(again.determinations["q2"], rep.determinations["q2"])


def test_inconsistent_system():
    # a Lagrangian with no velocities at all forces 0 = 1
    spec = parse_system("[system]\ncoordinates = q\nlagrangian = q\n")
    _, rep = analysed(spec)
    assert rep.verdict == INCONSISTENT and rep.diagnostics


def test_max_iter_is_enforced(second_class):
    cs = constraint_set(build_constraints(second_class))
    with pytest.raises(ClosureError):
        closure_loop(cs, max_iter=1)
    with pytest.raises(ValueError):
        closure_loop(cs, max_iter=0)


def test_random_coefficients_stay_integrable():
    # free particles with arbitrary gauge couplings b*q2_dot stay first class
    rng = random.Random(31)
    for _ in range(5):
        a1, a2, b = (abs(rand_coef(rng)) + 1 for _ in range(3))
        spec = parse_system(f"[system]\ncoordinates = q1 q2 q3\nparameters = q2\n"
                            f"lagrangian = ({a1}/2)*q1_dot^2 - ({a2}/2)*(q2_dot - q3_dot)^2 + ({b})*q2_dot\n")
        _, rep = analysed(spec)
        assert rep.verdict == INTEGRABLE
