import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmocp import (
    AdaptationParams,
    ModelState,
    importance_loss,
    mw_update,
    pinball_gradient,
    pinball_loss,
    scale_exponent,
    sf_ogd_update,
)


def test_pinball_examples():
    assert pinball_loss(0.5, 0.3, 0.1) == pytest.approx(0.02)
    assert pinball_loss(0.4, 0.4, 0.7) == 0.0
    assert pinball_loss(0.2, 0.5, 0.1) == pytest.approx(0.27)


def test_gradient_examples():
    assert pinball_gradient(0.05, 0.1, 0.1) == pytest.approx(0.9)
    assert pinball_gradient(0.5, 0.1, 0.1) == pytest.approx(-0.1)
    assert pinball_gradient(0.5, 0.1, 0.0) == 0.0


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 0.99))
def test_pinball_nonnegative(ab, a, target):
    assert pinball_loss(ab, a, target) >= 0.0


def test_sf_ogd_first_step():
    s = ModelState(alpha=0.1)
    assert sf_ogd_update(s, 0.9, 0.05) == pytest.approx(0.05)
    assert s.grad_sq_sum == pytest.approx(0.81)


def test_sf_ogd_zero_grad():
    s = ModelState(alpha=0.3)
    assert sf_ogd_update(s, 0.0, 0.05) == 0.3
    assert s.grad_sq_sum == 0.0


def test_sf_ogd_two_steps():
    s = ModelState(alpha=0.1)
    sf_ogd_update(s, 0.9, 0.05)
    sf_ogd_update(s, -0.1, 0.05)
    assert s.alpha == pytest.approx(0.05 + 0.05 * 0.1 / math.sqrt(0.82))


def test_sf_ogd_clamps():
    s = ModelState(alpha=0.01)
    sf_ogd_update(s, 0.9, 0.5)
    assert s.alpha == 0.0


@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=200), st.floats(0.01, 0.99),
       st.floats(0.001, 0.5))
def test_sf_ogd_step_bound_and_direction(errs, target, eta):
    s = ModelState(alpha=target)
    prev_sq = 0.0
    for err in errs:
        before = s.alpha
        sf_ogd_update(s, err - target, eta)
        assert abs(s.alpha - before) <= eta + 1e-12
        assert 0.0 <= s.alpha <= 1.0
        assert s.grad_sq_sum >= prev_sq
        prev_sq = s.grad_sq_sum
        # covered raises alpha, a miss lowers it (up to the clamp)
        if err == 0.0:
            assert s.alpha >= before
        else:
            assert s.alpha <= before


def test_importance_loss():
    assert importance_loss(0.3, 0.5, False) == 0.0
    assert importance_loss(0.02, 0.25, True) == pytest.approx(0.08)
    assert importance_loss(0.0, 0.25, True) == 0.0
    with pytest.raises(ValueError):
        importance_loss(0.1, 0.0, True)


def test_mw_update():
    assert mw_update(2.5, 0.0, 0.5, 0) == 2.5
    assert mw_update(1.0, 0.02, 0.5, 0) == pytest.approx(0.990050, abs=1e-6)
    assert math.log(mw_update(1.0, 0.4, 0.5, scale_exponent(4))) == pytest.approx(-0.5 * 0.4 / 4)


@given(st.lists(st.floats(0, 10), max_size=100))
def test_weights_stay_positive(losses):
    w = 1.0
    for loss in losses:
        w = mw_update(w, loss, 0.5, 0)
        assert w > 0.0


@pytest.mark.parametrize("J,b", [(1, 0), (2, 1), (3, 1), (4, 2), (7, 2), (8, 3)])
def test_scale_exponent(J, b):
    assert scale_exponent(J) == b


def test_param_validation():
    with pytest.raises(ValueError):
        AdaptationParams(alpha_target=0.0)
    with pytest.raises(ValueError):
        AdaptationParams(epsilon=1.0)
    with pytest.raises(ValueError):
        ModelState(weight=0.0)
    with pytest.raises(ValueError):
        scale_exponent(0)
