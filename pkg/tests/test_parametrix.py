import numpy as np
import pytest

from stablemv.drift import ConstantDrift, ConvolutionDrift, HolderDrift, ZeroDrift
from stablemv.parametrix import (ParametrixConfig, TruncationError, centering_residual,
                                 chapman_kolmogorov_residual, density_bound_ratio, density_truncated,
                                 graded_nodes, holder_ratio, kernel_H, kernel_iterate, proxy_density,
                                 truncation_bounds)
from stablemv.reference import series_tail
from stablemv.stable import stable_table

TAB = stable_table(1.5)


def q2(t, y, h=1e-3):
    return (TAB.density(t, y + h) - 2 * TAB.density(t, y) + TAB.density(t, y - h)) / h ** 2


def test_config_validation():
    with pytest.raises(ValueError):
        ParametrixConfig(truncation_K=0)
    with pytest.raises(ValueError):
        ParametrixConfig(grading_power=1.0)
    assert ParametrixConfig().power(1.5) == pytest.approx(3.0)


def test_graded_nodes_cluster_and_span():
    r, w = graded_nodes(0.0, 1.0, 12, 3.0)
    assert np.all((r > 0) & (r < 1))
    assert np.sum(w) == pytest.approx(1.0, abs=1e-12)


def test_proxy_requires_ordered_times():
    assert proxy_density(0.0, 1.0, 0.2, 0.2) == pytest.approx(TAB.density(1.0, np.array([0.0]))[0])
    with pytest.raises(ValueError):
        proxy_density(1.0, 1.0, 0.0, 0.0)


def test_zero_drift_is_exactly_the_proxy():
    r = density_truncated(ZeroDrift(), None, 0.0, 1.0, 0.0, return_result=True)
    np.testing.assert_array_equal(r.density.values, r.proxy)
    assert r.truncation_estimate == 0.0
    assert r.density.mass_defect < 0.02


def test_constant_drift_matches_shifted_stable_density():
    r = density_truncated(ConstantDrift(0.3), None, 0.0, 1.0, 0.0, ParametrixConfig(truncation_K=3),
                          return_result=True)
    d = r.density
    h = d.grid[1] - d.grid[0]
    exact = TAB.density(1.0, d.grid - 0.3)
    assert np.abs(d.values - exact).sum() * h < 1e-2
    # the first correction is the first-order Taylor term -b tau q'
    np.testing.assert_allclose(r.terms[0], -0.3 * TAB.gradient(1.0, d.grid), atol=2e-3)
    # correction norms shrink and partial sums approach the shift
    assert r.term_l1[0] > r.term_l1[1] > r.term_l1[2]
    errs = [np.abs(r.partial(k) - exact).sum() * h for k in range(4)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_pointwise_kernel_square_constant_drift():
    # H (x) H = b^2 (t - r) d^2/dy^2 q for constant b
    H2 = kernel_iterate(kernel_H(ConstantDrift(0.5)), 2)
    y = np.array([0.0, 0.3, 1.5])
    np.testing.assert_allclose(H2(0.0, 0.0, 1.0, 0.0, y), 0.25 * q2(1.0, y), atol=2e-3)


def test_kernel_needs_flow_for_measure_dependence():
    with pytest.raises(ValueError):
        kernel_H(ConvolutionDrift())
    with pytest.raises(ValueError):
        density_truncated(ConvolutionDrift(), None, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        density_truncated(ZeroDrift(), None, 1.0, 1.0, 0.0)


def test_tolerance_is_opt_in():
    with pytest.raises(TruncationError):
        density_truncated(ConstantDrift(0.3), None, 0.0, 1.0, 0.0,
                          ParametrixConfig(truncation_K=1, tolerance=1e-3))


def test_truncation_bound_dominates_term_norms():
    r = density_truncated(ConstantDrift(0.3), None, 0.0, 1.0, 0.0, return_result=True)
    assert np.all(r.term_bounds[:3] >= np.array(r.term_l1))
    assert r.truncation_estimate >= r.term_l1[2]


def test_truncation_bounds_finite_or_honestly_infinite():
    b, c = truncation_bounds(1.5, 0.3, 1.0)
    assert np.isfinite(series_tail(b, 3))
    assert b[-1] / b[-2] < 0.5
    b, _ = truncation_bounds(1.5, 0.3, 0.01)
    assert series_tail(b, 3) < series_tail(truncation_bounds(1.5, 0.3, 1.0)[0], 3)
    assert truncation_bounds(1.5, 0.0, 1.0)[1]["C"] == 0.0


def test_centering_and_chapman_kolmogorov():
    for t in (0.1, 1.0, 3.0):
        assert centering_residual(t) < 1e-5
    assert chapman_kolmogorov_residual(0.0, 0.4, 1.0, 0.0, [0.0, 0.5, 2.0, 10.0]) < 1e-6


def test_density_bounded_by_reference_profile():
    d = density_truncated(HolderDrift(), None, 0.0, 1.0, 0.0)
    assert density_bound_ratio(d, 0.0, 1.0, 0.0) < 5.0


def test_holder_ratio_finite_for_holder_drift():
    d = HolderDrift()
    dens = {x: density_truncated(d, None, 0.0, 1.0, x, ParametrixConfig(truncation_K=2))
            for x in (0.0, 0.1, 0.5)}
    assert 0 < holder_ratio(dens, 0.0, 1.0, 0.5) < 10.0
