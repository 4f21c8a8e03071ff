import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from molfield.core import ConvergenceError
from molfield.quadrature import DEFAULT_QUAD, QuadratureConfig, integrate, integrate_semi_infinite


def test_exponential_tail():
    res = integrate_semi_infinite(lambda x: np.exp(-x), 5.0, DEFAULT_QUAD)
    assert float(res.value) == pytest.approx(math.exp(-5.0), rel=1e-13)
    assert res.error < 1e-12


def test_gaussian_moment():
    res = integrate_semi_infinite(lambda x: x * x * np.exp(-x * x), 0.0, DEFAULT_QUAD)
    assert float(res.value) == pytest.approx(math.sqrt(math.pi) / 4, rel=1e-13)


def test_finite_interval_polynomial_exact():
    res = integrate(lambda x: 3 * x**2, 0.0, 2.0)
    assert float(res.value) == pytest.approx(8.0, rel=1e-15)


def test_vector_integrand_shares_mesh():
    k = np.arange(4)[:, None]
    res = integrate_semi_infinite(lambda x: x[None, :] ** k * np.exp(-x[None, :]), 0.0, DEFAULT_QUAD)
    assert np.allclose(res.value, [1, 1, 2, 6], rtol=1e-12)
    assert res.parts.shape == (4, res.lo.size)


def test_mesh_is_contiguous():
    res = integrate_semi_infinite(lambda x: 1 / (1 + x) ** 3, 0.0, DEFAULT_QUAD)
    assert np.all(res.lo[1:] == res.hi[:-1])
    assert float(res.value) == pytest.approx(0.5, rel=1e-10)
    assert res.parts.sum() == pytest.approx(float(res.value), rel=1e-14)


def test_non_convergence_carries_partial():
    cfg = QuadratureConfig(max_subdivisions=5)
    with pytest.raises(ConvergenceError) as exc:
        integrate(lambda x: np.sin(1 / x), 1e-6, 1.0, cfg)
    assert exc.value.partial is not None


def test_non_decaying_tail_raises():
    with pytest.raises(ConvergenceError):
        integrate_semi_infinite(lambda x: np.ones_like(x), 0.0, QuadratureConfig(max_panels=10))


def test_tolerances_validated():
    with pytest.raises(ValueError):
        QuadratureConfig(epsrel=0)
    with pytest.raises(ValueError):
        QuadratureConfig(growth=1.0)


@given(st.floats(0.01, 50.0), st.floats(0.0, 20.0))
def test_scaled_exponential(rate, lower):
    res = integrate_semi_infinite(lambda x: np.exp(-rate * (x - lower)), lower, DEFAULT_QUAD, scale=1 / rate)
    assert float(res.value) == pytest.approx(1 / rate, rel=1e-9)
