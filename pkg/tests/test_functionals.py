import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from stablemv.functionals import (CompositeFunctional, QuadraticFunctional, builtin_functionals,
                                  centered_flat_derivative, empirical_projection_gradient_check,
                                  flat_derivative_fd, holder_linear, make_functional)
from stablemv.measures import EmpiricalMeasure, GridDensity

BUILTINS = builtin_functionals()


def test_registry():
    assert set(BUILTINS) == {"linear_sin", "linear_atan", "holder_0.5", "quadratic_cos",
                             "quadratic_cos2", "composite_sin"}
    assert make_functional("holder", delta=0.3).certificate.delta == 0.3
    with pytest.raises(ValueError):
        make_functional("unknown")
    with pytest.raises(ValueError):
        holder_linear(1.5)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_flat_derivative_against_lateral_difference(name, rng):
    phi = BUILTINS[name]
    mu = EmpiricalMeasure(rng.uniform(-2, 2, 30))
    for v in (-1.3, 0.4, 2.5):
        fd = flat_derivative_fd(phi, mu, v)
        assert fd == pytest.approx(centered_flat_derivative(phi, mu, v), abs=2e-5)


@pytest.mark.parametrize("name", ["quadratic_cos", "composite_sin"])
def test_second_flat_derivative(name, rng):
    phi = BUILTINS[name]
    mu = EmpiricalMeasure(rng.uniform(-2, 2, 20))
    v, w = 0.7, -1.1
    e = 1e-6
    # d/de of [dphi/dm((1-e) mu + e delta_w)(v) - same at a reference point] is
    # the centered second derivative in the second slot; mixture weights must stay
    # nonnegative so the difference is one-sided
    def g(m):
        return (phi.flat_derivative(m, np.array([v])) - phi.flat_derivative(m, np.array([0.0])))[0]
    fd = (g(mu.perturb(e, w)) - g(mu)) / e
    mean = np.mean([phi.second_flat_derivative(mu, np.array([v]), mu.points[i])
                    - phi.second_flat_derivative(mu, np.array([0.0]), mu.points[i]) for i in range(mu.n)])
    exact = (phi.second_flat_derivative(mu, np.array([v]), np.array([w]))
             - phi.second_flat_derivative(mu, np.array([0.0]), np.array([w])) - mean)
    assert fd == pytest.approx(float(np.ravel(exact)[0]), abs=1e-5)


@pytest.mark.parametrize("name", sorted(BUILTINS))
@pytest.mark.parametrize("n", [1, 3, 10, 100])
def test_empirical_projection_identity(name, n, rng):
    atoms = rng.uniform(-3, 3, n)
    if name == "holder_0.5":
        atoms = np.where(np.abs(atoms) < 0.05, 0.3, atoms)
    for i in {0, n - 1}:
        fd, formula, gap = empirical_projection_gradient_check(BUILTINS[name], atoms, i)
        assert gap < 1e-6


def test_quadratic_eval_samples_matches_eval(rng):
    phi = QuadraticFunctional(2.0)
    s = rng.standard_normal((5, 40))
    np.testing.assert_allclose(phi.eval_samples(s), [phi.eval(EmpiricalMeasure(r)) for r in s], atol=1e-14)


def test_quadratic_on_point_mass_is_one():
    assert QuadraticFunctional(1.0).eval(EmpiricalMeasure([0.3, 0.3])) == pytest.approx(1.0)


def test_functionals_on_grid_density():
    g = np.linspace(-np.pi, np.pi, 20001)
    d = GridDensity(g, np.full_like(g, 1 / (2 * np.pi)))
    assert BUILTINS["linear_sin"].eval(d) == pytest.approx(0.0, abs=1e-12)
    assert CompositeFunctional().eval(d) == pytest.approx(0.0, abs=1e-12)


@given(arrays(float, 8, elements=st.floats(-5, 5)), st.floats(-5, 5), st.floats(-5, 5))
def test_holder_certificate(atoms, v1, v2):
    for phi in BUILTINS.values():
        mu = EmpiricalMeasure(atoms)
        c = phi.certificate
        d = abs(np.ravel(phi.flat_derivative(mu, np.array([v1])))[0]
                - np.ravel(phi.flat_derivative(mu, np.array([v2])))[0])
        assert d <= c.L * abs(v1 - v2) ** c.delta * (1 + 1e-9) + 1e-12
