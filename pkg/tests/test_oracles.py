import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emclbench.oracles import (
    MAX_ZERO_OUT_PARAMS, finite_diff_grad, numeric_prox, zero_out_importance,
)


class Flat:
    """Stand-in model exposing only ``flatten``."""

    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=np.float64)

    def flatten(self):
        return self.theta.copy()


def test_finite_diff_of_square():
    g = finite_diff_grad(lambda th: float(th[0] ** 2), np.array([3.0]), 1e-6)
    assert g[0] == pytest.approx(6.0, abs=1e-6)


def test_finite_diff_of_constant_is_zero():
    np.testing.assert_array_equal(finite_diff_grad(lambda th: 4.2, np.ones(5)), np.zeros(5))


def test_finite_diff_does_not_mutate_input():
    theta = np.array([1.0, 2.0])
    finite_diff_grad(lambda th: float(th @ th), theta)
    np.testing.assert_array_equal(theta, [1.0, 2.0])


def test_finite_diff_errors():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda th: 0.0, np.ones(2), step=0)
    with pytest.raises(FloatingPointError):
        finite_diff_grad(lambda th: np.nan, np.ones(2))


def test_numeric_prox_trivial_cases():
    assert numeric_prox(3.0, 1.0, 0.0, 0.7) == 3.0
    assert numeric_prox(2.5, 2.5, 4.0, 0.7) == 2.5


def test_numeric_prox_known_minimizer():
    # c (x - 0)^2 + (x - 2)^2 / (2 * 0.5) with c = 1 is minimized at x = 1
    assert numeric_prox(2.0, 0.0, 1.0, 0.5) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(v=st.floats(-50, 50), x0=st.floats(-50, 50), c=st.floats(1e-3, 1e3),
       gamma=st.floats(1e-3, 10))
def test_numeric_prox_is_stationary(v, x0, c, gamma):
    # derivative of the prox objective vanishes at the returned point
    x = numeric_prox(v, x0, c, gamma)
    slope = 2 * c * (x - x0) + (x - v) / gamma
    assert abs(slope) <= 1e-8 * (2 * c + 1 / gamma) * 10


def test_numeric_prox_rejects_bad_args():
    with pytest.raises(ValueError):
        numeric_prox(1.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        numeric_prox(1.0, 0.0, -1.0, 1.0)


def test_oracles_are_deterministic():
    args = (np.array([1.0, -2.0]), np.array([0.5, 0.5]), np.array([2.0, 3.0]), 0.3)
    assert numeric_prox(*args).tobytes() == numeric_prox(*args).tobytes()


def test_zero_out_exact_on_linear_loss():
    rng = np.random.default_rng(0)
    g = rng.normal(size=30)
    theta = rng.normal(size=30)
    theta[4] = 0.0
    out = zero_out_importance(Flat(theta), lambda th, data: float(g @ th), None)
    np.testing.assert_allclose(out, np.abs(g * theta), rtol=0, atol=1e-10)
    assert out[4] == 0.0


def test_zero_out_size_limit():
    with pytest.raises(ValueError):
        zero_out_importance(Flat(np.ones(MAX_ZERO_OUT_PARAMS + 1)), lambda th, d: 0.0, None)
