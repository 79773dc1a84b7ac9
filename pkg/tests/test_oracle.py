import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from levelcg.errors import DimMismatch, InvalidConstant, NonFiniteInput
from levelcg.geometry import Box, ScaledSimplexLeq
from levelcg.oracle import (AffineMinorant, SmoothOracle, combine_minorant,
                            estimate_constants, eta_schedule, fd_check,
                            groupmax_sum_oracle, hinge_sum_oracle, linear_oracle,
                            linearize, quadratic_oracle, sigmoid_indicator_eval,
                            smoothed_groupmax_eval, smoothed_hinge_eval,
                            with_estimated_constants)

# high-precision reference for eta*log(mean(exp(v/eta))) at v=(1, 0), eta=0.1,
# computed once with mpmath at 30 digits (see test_groupmax_mpmath_reference)
GROUPMAX_REF_VALUE = 0.930689821833927155522953736637
GROUPMAX_REF_GRAD = (0.999954602131297565605495223767, 0.0000453978687024343945047762327635)


def square():
    return SmoothOracle(lambda x: (float(x @ x), 2 * x), 1, 2.0, 2.0)


def test_linearize_examples():
    m = linearize(square(), np.array([1.0]))
    assert m.slope[0] == 2.0 and m.intercept == -1.0
    assert m(np.array([0.0])) == -1.0 <= 0.0
    lin = linearize(linear_oracle([3.0, -1.0], 0.5), np.array([0.2, 0.7]))
    assert np.allclose(lin.slope, [3.0, -1.0]) and lin.intercept == pytest.approx(0.5)


def test_linearize_rejects_nonfinite():
    bad = SmoothOracle(lambda x: (np.nan, x), 1, 1.0, 1.0)
    with pytest.raises(NonFiniteInput):
        linearize(bad, np.array([0.0]))


def test_minorant_property_convex_quadratic(rng):
    B = rng.normal(size=(3, 3))
    f = quadratic_oracle(B @ B.T, rng.normal(size=3), 0.3)
    for _ in range(1000):
        a, x = rng.normal(size=3), rng.normal(size=3)
        assert linearize(f, a)(x) <= f.value(x) + 1e-10


def test_combine_minorant_examples():
    prev = AffineMinorant(np.zeros(1), 0.0)
    new = AffineMinorant(np.array([2.0]), -1.0)
    assert combine_minorant(prev, new, 1.0).intercept == -1.0
    assert combine_minorant(prev, new, 0.0).slope[0] == 0.0
    mid = combine_minorant(prev, new, 0.5)
    assert mid.slope[0] == 1.0 and mid.intercept == -0.5
    with pytest.raises(DimMismatch):
        combine_minorant(prev, AffineMinorant(np.zeros(2), 0.0), 0.5)


def test_affine_minimize_over_set():
    m = AffineMinorant(np.array([1.0, -2.0]), 0.5)
    val, x = m.minimize(Box([0, 0], [1, 1]))
    assert val == pytest.approx(-1.5) and np.allclose(x, [0, 1])


def test_hinge_examples():
    assert smoothed_hinge_eval(0.3, -1.0) == (0.0, 0.0)
    eta = 0.25
    assert smoothed_hinge_eval(eta, eta) == pytest.approx((eta / 2, 1.0))
    # brute force: max over y in [0, 1] of 2y - y^2/2
    y = np.linspace(0, 1, 100001)
    brute = float(np.max(2 * y - y ** 2 / 2))
    assert smoothed_hinge_eval(1.0, 2.0)[0] == pytest.approx(brute, abs=1e-9)
    assert smoothed_hinge_eval(1.0, 2.0) == pytest.approx((1.5, 1.0))


def test_hinge_sandwich_on_grid():
    a = np.linspace(-10, 10, 4001)
    for eta in (1e-3, 0.1, 1.0, 5.0):
        v, _ = smoothed_hinge_eval(eta, a)
        gap = np.maximum(a, 0) - v
        assert np.all(gap >= -1e-15) and np.all(gap <= eta / 2 + 1e-12)


def test_groupmax_examples():
    v, g = smoothed_groupmax_eval(0.3, np.full(4, 1.7))
    assert v == pytest.approx(1.7) and np.allclose(g, 0.25)
    v, g = smoothed_groupmax_eval(0.3, np.array([2.5]))
    assert v == pytest.approx(2.5) and g[0] == pytest.approx(1.0)
    v, g = smoothed_groupmax_eval(0.1, np.array([1.0, 0.0]))
    assert v == pytest.approx(GROUPMAX_REF_VALUE, abs=1e-12)
    assert np.allclose(g, GROUPMAX_REF_GRAD, atol=1e-12)
    assert 1.0 - 0.1 * math.log(2) <= v <= 1.0


def test_groupmax_mpmath_reference():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 30
    ref = mp.mpf("0.1") * mp.log((mp.e ** 10 + 1) / 2)
    assert float(ref) == pytest.approx(GROUPMAX_REF_VALUE, abs=1e-15)


def test_groupmax_rejects_nonfinite():
    with pytest.raises(NonFiniteInput):
        smoothed_groupmax_eval(0.1, np.array([np.nan, 1.0]))


@given(arrays(float, st.integers(1, 8), elements=st.floats(-50, 50)),
       st.floats(1e-3, 10.0))
def test_groupmax_sandwich(v, eta):
    val, g = smoothed_groupmax_eval(eta, v)
    gap = v.max() - val
    assert -1e-9 <= gap <= eta * math.log(v.size) + 1e-9
    assert abs(g.sum() - 1.0) < 1e-9


def test_eta_schedule_examples():
    assert eta_schedule(4, 1.0, 1.0, 1.0) == pytest.approx(0.5)
    assert eta_schedule(1, 2.0, 3.0, 1.0) == pytest.approx(6.0)
    assert eta_schedule(40, 1.3, 0.7, 0.4) == pytest.approx(eta_schedule(10, 1.3, 0.7, 0.4) / 2)
    with pytest.raises(InvalidConstant):
        eta_schedule(1, 0.0, 1.0, 1.0)


@given(st.integers(1, 10 ** 6), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10))
def test_eta_schedule_nonincreasing(t, b, d, u):
    assert eta_schedule(t + 1, b, d, u) <= eta_schedule(t, b, d, u)


def test_sigmoid_indicator():
    s, ds = sigmoid_indicator_eval(0.5, np.array([-3.0, 0.0, 3.0]))
    assert np.all((s > 0) & (s < 1)) and s[1] == 0.5
    assert np.all(np.diff(s) > 0) and np.all(ds > 0)
    # small temperature approaches the step function away from 0
    s, _ = sigmoid_indicator_eval(1e-4, np.array([-0.1, 0.1]))
    assert np.allclose(s, [0.0, 1.0])


def test_fd_check_examples(rng):
    lin = linear_oracle([1.0, -2.0, 0.5], 0.1)
    assert fd_check(lin, rng.normal(size=(5, 3))) <= 1e-9
    sq = quadratic_oracle([[2.0]], [0.0])
    assert fd_check(sq, [np.array([0.3])]) <= 1e-8
    sig = SmoothOracle(lambda x: (float(sigmoid_indicator_eval(0.2, x)[0].sum()),
                                  sigmoid_indicator_eval(0.2, x)[1]), 2)
    assert fd_check(sig, rng.normal(size=(20, 2))) <= 1e-4


def test_smoothed_structured_gradients_pass_fd(rng):
    A = rng.normal(size=(6, 3))
    h = hinge_sum_oracle(A, rng.normal(size=6), 0.5, linear=rng.normal(size=3))
    g = groupmax_sum_oracle([[0, 1], [2]], 3, const=-0.1)
    for o in (h, g):
        assert fd_check(o, rng.normal(size=(20, 3)), eta=0.05) <= 1e-4


def test_hinge_sum_sandwich_and_constants(rng):
    A = rng.normal(size=(5, 2))
    b = rng.normal(size=5)
    w = rng.uniform(0.1, 1.0, size=5)
    h = hinge_sum_oracle(A, b, w)
    assert h.d_u == pytest.approx(math.sqrt(w.sum() / 2))
    assert h.b_norm == pytest.approx(math.sqrt(np.sum(w * np.sum(A ** 2, axis=1))))
    X = rng.normal(size=(200, 2))
    exact = h.values(X)
    for eta in (0.01, 0.5):
        sm = np.array([h(x, eta)[0] for x in X])
        assert np.all(exact - sm >= -1e-12)
        assert np.all(exact - sm <= h.smoothing_gap(eta) + 1e-12)


def test_structured_values_are_exact():
    h = hinge_sum_oracle([[1.0]], [-0.5], 1.0)
    assert h.values(np.array([[0.2], [0.9]])).tolist() == pytest.approx([0.0, 0.4])
    assert h.value(np.array([0.9]), 0.0) == pytest.approx(0.4)


def test_shift_moves_value_only():
    q = quadratic_oracle([[2.0]], [1.0], 0.5)
    s = q.shift(-2.0)
    x = np.array([0.3])
    assert s.value(x) == pytest.approx(q.value(x) - 2.0)
    assert np.allclose(s.grad(x), q.grad(x))


def test_estimated_constants_flagged(rng):
    bare = SmoothOracle(lambda x: (float(x @ x), 2 * x), 2)
    filled = with_estimated_constants(bare, ScaledSimplexLeq(2))
    assert filled.estimated
    assert filled.lipschitz_grad >= 2.0 * 0.99
    L, M = estimate_constants(bare.func, Box([0, 0], [1, 1]), rng)
    assert L > 0 and M > 0


def test_quadratic_declared_constants_hold(rng):
    B = rng.normal(size=(2, 2))
    q = quadratic_oracle(B @ B.T, rng.normal(size=2), 0.0, radius=math.sqrt(2))
    X = Box([-1, -1], [1, 1]).sample(rng, 500)
    Y = Box([-1, -1], [1, 1]).sample(rng, 500)
    for x, y in zip(X, Y):
        d = np.linalg.norm(x - y)
        assert np.linalg.norm(q.grad(x) - q.grad(y)) <= q.lipschitz_grad * d + 1e-12
        assert abs(q.value(x) - q.value(y)) <= q.lipschitz_val * d + 1e-12
