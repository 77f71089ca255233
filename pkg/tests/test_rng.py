import numpy as np
import pytest
from hypothesis import given, strategies as st

from stablemv import _core_py
from stablemv._backend import BACKEND
from stablemv.rng import RandomStream, particle_ids
from stablemv.stable import StableLaw, sample_increments

try:
    from stablemv import _core
except ImportError:
    _core = None

needs_ext = pytest.mark.skipif(_core is None, reason="compiled extension not built")


def test_uniforms_in_open_unit_interval():
    u = RandomStream(1).uniforms(particle_ids(10_000), 0, 3)
    assert u.shape == (10_000, 3)
    assert np.all((u > 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 0.01


def test_draws_are_addressable():
    s = RandomStream(3, "exp", 2)
    full = s.uniforms(particle_ids(100), 7, 2)
    subset = s.uniforms(np.array([42, 5, 99]), 7, 2)
    np.testing.assert_array_equal(subset, full[[42, 5, 99]])


def test_streams_differ_by_label():
    base = RandomStream(0)
    a = base.uniforms(particle_ids(50), 0, 1)
    for other in (RandomStream(1), base.substream(experiment="x"), base.substream(replication=1)):
        assert not np.array_equal(a, other.uniforms(particle_ids(50), 0, 1))
    assert not np.array_equal(a, base.uniforms(particle_ids(50), 1, 1))


def test_seed_validation():
    with pytest.raises(ValueError):
        RandomStream(-1)


@needs_ext
@pytest.mark.parametrize("step", [-1, 0, 17, 2**40])
def test_backend_uniform_parity_bitwise(step):
    key = RandomStream(9, "parity").key
    ids = np.arange(-5, 500, dtype=np.int64)
    a, b = np.empty((len(ids), 5)), np.empty((len(ids), 5))
    _core.keyed_uniforms(key, ids, step, a)
    _core_py.keyed_uniforms(key, ids, step, b)
    np.testing.assert_array_equal(a, b)


@needs_ext
@pytest.mark.parametrize("alpha,dim", [(1.2, 1), (1.5, 2), (1.8, 3)])
def test_backend_increment_parity(alpha, dim):
    key = RandomStream(4).key
    ids = particle_ids(2000)
    a, b = np.empty((2000, dim)), np.empty((2000, dim))
    _core.stable_increments(key, ids, 3, alpha, 0.7, a)
    _core_py.stable_increments(key, ids, 3, alpha, 0.7, b)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_ext
def test_backend_interaction_parity(rng):
    x = rng.standard_normal(300)
    q = rng.standard_normal(50)
    a, b = np.empty(300), np.empty(300)
    _core.conv_tanh_self_1d(x, 0.5, 1.3, a)
    _core_py.conv_tanh_self_1d(x, 0.5, 1.3, b)
    np.testing.assert_allclose(a, b, atol=1e-14)
    a, b = np.empty(50), np.empty(50)
    _core.conv_tanh_cross_1d(q, x, 0.5, 1.3, a)
    _core_py.conv_tanh_cross_1d(q, x, 0.5, 1.3, b)
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_backend_selected():
    assert BACKEND in ("cython", "python")


@given(st.integers(0, 2**64 - 1), st.integers(-1, 10**6), st.integers(0, 10**9))
def test_keyed_draw_is_pure(seed, step, pid):
    s = RandomStream(seed)
    a = s.uniforms(np.array([pid]), step, 2)
    b = s.uniforms(np.array([pid, pid + 1]), step, 2)[:1]
    np.testing.assert_array_equal(a, b)


def test_increments_depend_on_step_and_particle():
    law = StableLaw(1.5)
    s = RandomStream(0)
    a = sample_increments(law, 0.1, s, particle_ids(10), 0)
    b = sample_increments(law, 0.1, s, particle_ids(10), 1)
    assert not np.array_equal(a, b)
    assert len(np.unique(a)) == 10
