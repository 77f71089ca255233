import math

import numpy as np
import pytest

from stablemv.initial import INIT_STEP, ParetoInit, PointInit, UniformInit, make_init
from stablemv.rng import RandomStream


@pytest.mark.parametrize("init", [UniformInit(-1, 2), ParetoInit(1.5, 2.0), PointInit(0.7)])
def test_ppf_integral_is_antiderivative(init):
    u = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    d = (init.ppf_integral(u + h) - init.ppf_integral(u - h)) / (2 * h)
    np.testing.assert_allclose(d, init.ppf(u), rtol=1e-6)


@pytest.mark.parametrize("init", [UniformInit(-1, 2), ParetoInit(1.5, 2.0)])
def test_cdf_inverts_ppf(init):
    u = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(init.cdf(init.ppf(u)), u, atol=1e-12)


def test_moment_orders():
    assert UniformInit().moment_order == math.inf
    assert ParetoInit(1.5).moment_order == 1.5
    with pytest.raises(ValueError):
        ParetoInit(0.9)


def test_sampling_uses_reserved_step_and_is_deterministic():
    s = RandomStream(1)
    a = UniformInit().sample(s, 10)
    u = s.uniforms(np.arange(10), INIT_STEP, 1)
    np.testing.assert_array_equal(a, u)
    np.testing.assert_array_equal(a[3:], UniformInit().sample(s, 7, offset=3))


def test_make_init_roundtrip():
    for init in (UniformInit(0, 2), ParetoInit(1.5, 1.0), PointInit(1.0)):
        assert make_init(init.to_dict()) == init
    with pytest.raises(ValueError):
        make_init({"kind": "nope"})
