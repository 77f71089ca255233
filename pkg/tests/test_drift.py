import numpy as np
import pytest
from hypothesis import given, strategies as st

from stablemv.drift import (ConstantDrift, ConvolutionDrift, HolderDrift, SaturatedMeanFieldDrift,
                            ZeroDrift, _BinnedTanhField, make_drift)
from stablemv.measures import EmpiricalMeasure
from stablemv.rng import RandomStream
from stablemv.stable import StableLaw, sample


@pytest.fixture(scope="module")
def heavy_sample():
    return sample(StableLaw(1.5), 1.0, RandomStream(0), 50_000)[:, 0]


def test_registry():
    assert isinstance(make_drift("zero"), ZeroDrift)
    assert make_drift("convolution", amp=1.0).amp == 1.0
    with pytest.raises(ValueError):
        make_drift("nope")


@pytest.mark.parametrize("drift", [ConstantDrift(0.3), HolderDrift(0.5, 0.7), ConvolutionDrift(0.5),
                                   SaturatedMeanFieldDrift(0.5)])
def test_declared_meta_holds_on_samples(drift, rng):
    m = EmpiricalMeasure(rng.standard_normal(300))
    x = rng.uniform(-10, 10, (2000, 1))
    y = x + rng.uniform(-2, 2, (2000, 1))
    bx, by = drift.eval(0, x, m), drift.eval(0, y, m)
    assert np.max(np.abs(bx)) <= drift.meta.sup_norm + 1e-12
    d = np.abs(x - y)[:, 0]
    ok = d > 0
    ratio = np.abs(bx - by)[ok, 0] / d[ok] ** drift.meta.eta
    assert np.max(ratio) <= drift.meta.holder_x * (1 + 1e-9) + 1e-12


def test_convolution_flat_derivative_by_difference(rng):
    d = ConvolutionDrift(0.5)
    m = EmpiricalMeasure(rng.standard_normal(50))
    x = np.array([[0.3], [2.0]])
    v = 1.1
    eps = 1e-3
    fd = (d.eval(0, x, m.perturb(eps, v)) - d.eval(0, x, m)) / eps
    centered = d.flat_derivative(0, x, m, np.array([v])) - np.mean(
        [d.flat_derivative(0, x, m, m.points[i]) for i in range(m.n)], axis=0)
    np.testing.assert_allclose(fd, centered, atol=1e-10)
    np.testing.assert_array_equal(d.second_flat_derivative(0, x, m, [v], [0.0]), 0.0)


def test_saturated_flat_derivatives_by_difference(rng):
    d = SaturatedMeanFieldDrift(0.5)
    m = EmpiricalMeasure(rng.standard_normal(40))
    x = np.array([[0.4]])
    v1, v2 = 1.5, -0.7

    def dd(e):
        return (d.eval(0, x, m.perturb(e, v1)) - d.eval(0, x, m.perturb(e, v2))) / e
    fd = 2 * dd(1e-4) - dd(2e-4)
    exact = d.flat_derivative(0, x, m, np.array([v1])) - d.flat_derivative(0, x, m, np.array([v2]))
    np.testing.assert_allclose(fd, exact, atol=1e-7)


def test_self_interaction_single_particle():
    d = ConvolutionDrift(0.5)
    np.testing.assert_array_equal(d.eval_self(0, np.array([[3.0]])), [[0.0]])


@pytest.mark.parametrize("weighted", [False, True])
def test_binned_field_matches_exact_sum(heavy_sample, weighted):
    y = heavy_sample
    w = None
    if weighted:
        w = np.random.default_rng(1).dirichlet(np.ones(len(y)))
    field = _BinnedTanhField(y, 0.5, 1.0, 1 / 64, 20, w)
    q = np.concatenate([np.linspace(-5000, 5000, 301), y[:300], np.array([field.lo - 1, field.hi + 1])])
    ww = np.full(len(y), 1 / len(y)) if w is None else w
    exact = np.array([0.5 * np.tanh(qq - y) @ ww for qq in q])
    assert np.max(np.abs(field(q) - exact)) < 1e-5


def test_frozen_matches_eval(heavy_sample):
    d = ConvolutionDrift(0.5)
    m = EmpiricalMeasure(heavy_sample[:5000])
    x = np.linspace(-30, 30, 61)[:, None]
    np.testing.assert_allclose(d.frozen(0, m)(x), d.eval(0, x, m), atol=1e-5)


@given(st.floats(-1e6, 1e6))
def test_holder_drift_bounded(x):
    d = HolderDrift(0.5, 0.7)
    assert abs(d.eval(0, np.array([[x]]))[0, 0]) <= 0.5
