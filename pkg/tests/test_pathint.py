import cmath
import math

import numpy as np
import pytest
from scipy.integrate import quad

from hjpath.canontrans import apply_transformation
from hjpath.hjanalysis import constraint_set
from hjpath.legendre import build_constraints
from hjpath.pathint import (
    EUCLIDEAN,
    GAUSSIAN,
    GENERAL,
    QUADRATIC,
    CausticError,
    PathIntegralError,
    SlicingPlan,
    amplitude_at,
    classify,
    kinetic_potential_split,
    propagate_euclidean_mc,
    propagate_quadratic,
    richardson,
)
from hjpath.reduced_dynamics import Bindings
from hjpath.sysparse import parse_expression

FREE = Bindings(potentials={"V": ("u", parse_expression("0"))})
HARMONIC = Bindings(potentials={"V": ("u", parse_expression("u/2"))})
QUARTIC = Bindings(potentials={"V": ("u", parse_expression("u^2"))})
FIRST = Bindings(constants={"a1": 1, "a2": 2, "b": 0.5, "c": 1})


@pytest.fixture(scope="module")
def reduced(radial):
    cs = constraint_set(build_constraints(radial))
    return apply_transformation(cs, radial.transformations["radial"])


def plan(n, r0, r1, t0=0.0, t1=1.0):
    return SlicingPlan(n, t0, t1, {"R": r0, "y": 0.0, "z": 0.0}, {"R": r1, "y": 0.0, "z": 0.0})


def free_kernel(r0, r1, T):
    return cmath.sqrt(1 / (2j * math.pi * T)) * cmath.exp(1j * (r1 - r0) ** 2 / (2 * T))


def test_classification(reduced, first_class):
    assert classify(reduced, HARMONIC) == QUADRATIC
    assert classify(reduced, QUARTIC) == GENERAL
    with pytest.raises(PathIntegralError, match="not quadratic"):
        amplitude_at(reduced, plan(8, 0, 0), 8, QUARTIC)


@pytest.mark.parametrize("n", [2, 3, 7, 64, 1024])
def test_free_kernel_exact_at_every_n(reduced, n):
    for r0, r1, T in [(0.0, 1.0, 1.0), (0.3, -0.7, 2.5), (1 + 0.2j, 0.5, 0.4)]:
        got = amplitude_at(reduced, plan(n, r0, r1, 0.0, T), n, FREE)
        want = free_kernel(r0, r1, T)
        assert abs(got - want) / abs(want) <= 1e-12


def _gelfand_yaglom(n, T=1.0):
    eps = T / n
    d_prev, d = 1.0, 2.0 - eps * eps
    for _ in range(n - 2):
        d_prev, d = d, (2.0 - eps * eps) * d - d_prev
    return 1 / cmath.sqrt(2j * math.pi * eps * d)


def test_harmonic_lattice_matches_determinant_recursion(reduced):
    # same lattice, two routes: block LDL of the phase-space form vs the
    # configuration-space tridiagonal determinant
    for n in (4, 33, 256):
        got = amplitude_at(reduced, plan(n, 0.0, 0.0), n, HARMONIC)
        assert abs(got - _gelfand_yaglom(n)) / abs(got) < 1e-11


def test_harmonic_convergence_is_second_order(reduced):
    vals = [amplitude_at(reduced, plan(n, 0.0, 0.0), n, HARMONIC) for n in (32, 64, 128, 256)]
    diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
    for a, b in zip(diffs, diffs[1:]):
        assert math.log2(a / b) == pytest.approx(2.0, rel=0.1)


def test_harmonic_extrapolation(reduced):
    res = propagate_quadratic(reduced, plan(1024, 0.0, 0.0), HARMONIC)
    want = cmath.sqrt(1 / (2j * math.pi * math.sin(1.0)))
    assert res.regime == GAUSSIAN and res.n_sequence == [64, 128, 256, 512, 1024]
    assert abs(res.value - want) / abs(want) < 1e-10
    assert math.isfinite(res.error) and res.error < 1e-8


def test_harmonic_kernel_off_axis(reduced):
    r0, r1, T = 0.4, -0.3, 0.8
    res = propagate_quadratic(reduced, plan(512, r0, r1, 0.0, T), HARMONIC)
    s, c = math.sin(T), math.cos(T)
    want = cmath.sqrt(1 / (2j * math.pi * s)) * cmath.exp(1j * ((r0 ** 2 + r1 ** 2) * c - 2 * r0 * r1) / (2 * s))
    assert abs(res.value - want) / abs(want) < 1e-9


def test_chapman_kolmogorov(reduced):
    r0, r2, T = 0.2, 0.9, 1.0
    rot = cmath.exp(1j * math.pi / 4)
    centre = (r0 + r2) / 2

    def integrand(u, part):
        r1 = centre + rot * u
        v = amplitude_at(reduced, plan(4, r1, r2, T / 2, T), 4, FREE) \
            * amplitude_at(reduced, plan(4, r0, r1, 0.0, T / 2), 4, FREE) * rot
        return v.real if part == 0 else v.imag

    total = complex(quad(integrand, -12, 12, args=(0,), limit=200)[0],
                    quad(integrand, -12, 12, args=(1,), limit=200)[0])
    direct = amplitude_at(reduced, plan(4, r0, r2, 0.0, T), 4, FREE)
    assert abs(total - direct) / abs(direct) < 1e-6


def _first_plan(n, profile=None):
    p = SlicingPlan(n, 0.0, 1.0, {"q1": 0.0, "q3": 0.2, "q2": 0.1}, {"q1": 0.5, "q3": -0.3, "q2": 0.7})
    if profile is not None:
        p.interpolation["q2"] = parse_expression(profile)
    return p


def test_gauge_path_independence(first_class):
    cs = constraint_set(build_constraints(first_class))
    lin = propagate_quadratic(cs, _first_plan(1024), FIRST)
    cub = propagate_quadratic(cs, _first_plan(1024, "3*s^2 - 2*s^3"), FIRST)
    assert abs(lin.value - cub.value) <= 1e-8


def test_bad_profile(first_class):
    cs = constraint_set(build_constraints(first_class))
    with pytest.raises(PathIntegralError, match="g\\(1\\) = 1"):
        propagate_quadratic(cs, _first_plan(64, "s^2/2"), FIRST)


def test_second_class_is_refused(second_class):
    cs = constraint_set(build_constraints(second_class))
    with pytest.raises(PathIntegralError, match="integrable"):
        propagate_quadratic(cs, SlicingPlan(64, 0.0, 1.0, {"q1": 0, "q3": 0, "q2": 0}, {"q1": 0, "q3": 0, "q2": 0}))


def test_caustic(reduced):
    # half period of the unit oscillator: every path refocuses
    with pytest.raises(CausticError):
        amplitude_at(reduced, plan(2, 0.0, 0.0, 0.0, 2 * math.sqrt(2)), 2, HARMONIC)


def test_plan_validation():
    with pytest.raises(ValueError):
        SlicingPlan(1, 0.0, 1.0, {}, {})
    with pytest.raises(ValueError):
        SlicingPlan(8, 1.0, 1.0, {}, {})
    assert SlicingPlan(64, 0.0, 1.0, {}, {}).sequence() == [4, 8, 16, 32, 64]


def test_richardson_on_synthetic_sequence():
    exact = 2.0 + 1.0j
    vals = [exact + 3.0 / n ** 2 - 5.0 / n ** 4 for n in (8, 16, 32)]
    value, err = richardson(vals)
    assert abs(value - exact) < 1e-12 and err < 1e-3


# -- Euclidean Monte Carlo ----------------------------------------------------------------------------

def test_kinetic_potential_split(reduced, first_class):
    masses, u = kinetic_potential_split(reduced, HARMONIC)
    assert masses == [1.0] and u == parse_expression("R^2/2")
    cs = constraint_set(build_constraints(first_class))
    with pytest.raises(PathIntegralError):
        kinetic_potential_split(cs, FIRST)


def test_mc_free_case_matches_lattice_value(reduced):
    p = SlicingPlan(64, 0.0, 8.0, {}, {})
    res = propagate_euclidean_mc(reduced, p, sweeps=20000, seed=3, bindings=FREE)
    # periodic free lattice: the primitive estimator averages to 1/(2 beta)
    assert res.regime == EUCLIDEAN and res.quantity == "ground_state_energy"
    assert abs(res.value.real - 1 / 16) < 4 * res.error


def test_mc_quartic_runs_and_is_deterministic(reduced):
    p = SlicingPlan(32, 0.0, 4.0, {}, {})
    a = propagate_euclidean_mc(reduced, p, sweeps=3000, seed=9, bindings=QUARTIC)
    b = propagate_euclidean_mc(reduced, p, sweeps=3000, seed=9, bindings=QUARTIC)
    c = propagate_euclidean_mc(reduced, p, sweeps=3000, seed=10, bindings=QUARTIC)
    assert a.value == b.value and a.error == b.error
    assert a.value != c.value
    # ground state of p^2/2 + R^4 lies near 0.668
    assert abs(a.value.real - 0.668) < 0.1
