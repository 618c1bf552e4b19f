import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointnav_vo.se2 import (
    IDENTITY,
    Se2,
    Vec2,
    apply,
    compose,
    integrate,
    inverse,
    polar_goal_encoding,
    update_goal,
    wrap_angle,
)


def hom(h: Se2) -> np.ndarray:
    """Independent 3x3 homogeneous matrix built straight from the definition."""
    c, s = math.cos(h.theta), math.sin(h.theta)
    return np.array([[c, -s, h.x], [s, c, h.z], [0.0, 0.0, 1.0]])


def hom_apply(h: Se2, p) -> np.ndarray:
    return (hom(h) @ np.array([p[0], p[1], 1.0]))[:2]


def assert_se2_close(a: Se2, b: Se2, tol=1e-12):
    assert abs(wrap_angle(a.theta - b.theta)) < tol
    assert abs(a.x - b.x) < tol
    assert abs(a.z - b.z) < tol


angles = st.floats(-10.0, 10.0, allow_nan=False)
coords = st.floats(-50.0, 50.0, allow_nan=False)
se2s = st.builds(Se2, angles, coords, coords)


class TestWrapAngle:
    @pytest.mark.parametrize(
        "raw, expected",
        [(0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi), (3 * math.pi, math.pi),
         (2 * math.pi, 0.0), (-0.5, -0.5), (7.0, 7.0 - 2 * math.pi)],
    )
    def test_values(self, raw, expected):
        assert wrap_angle(raw) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(-1e3, 1e3, allow_nan=False))
    def test_range_and_equivalence(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
        assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


class TestCompose:
    def test_identity_left(self):
        h = Se2(0.4, 1.0, -2.0)
        assert compose(IDENTITY, h) == h

    def test_inverse_rotation(self):
        out = compose(Se2(math.pi / 2), Se2(-math.pi / 2))
        assert_se2_close(out, IDENTITY)

    def test_derived_example(self):
        a, b = Se2(math.pi / 2, 1.0, 0.0), Se2(0.0, 1.0, 0.0)
        oracle = Se2.from_matrix(hom(a) @ hom(b))
        out = compose(a, b)
        assert_se2_close(out, oracle)
        assert_se2_close(out, Se2(math.pi / 2, 1.0, 1.0))

    @given(se2s, se2s)
    def test_matches_matrix_product(self, a, b):
        out = compose(a, b)
        np.testing.assert_allclose(hom(out), hom(a) @ hom(b), atol=1e-9)
        assert -math.pi < out.theta <= math.pi

    @given(se2s, se2s, se2s)
    def test_associative(self, a, b, c):
        assert_se2_close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-10)


class TestInverse:
    def test_identity(self):
        assert_se2_close(inverse(IDENTITY), IDENTITY)

    def test_pure_rotation(self):
        assert_se2_close(inverse(Se2(0.3)), Se2(-0.3))

    def test_derived_example(self):
        h = Se2(math.pi / 2, 1.0, 0.0)
        oracle = Se2.from_matrix(np.linalg.inv(hom(h)))
        assert_se2_close(inverse(h), oracle)
        assert_se2_close(inverse(h), Se2(-math.pi / 2, 0.0, 1.0))

    @given(se2s)
    def test_two_sided(self, h):
        assert_se2_close(compose(h, inverse(h)), IDENTITY)
        assert_se2_close(compose(inverse(h), h), IDENTITY)


class TestApply:
    def test_identity(self):
        assert apply(IDENTITY, (1.0, 2.0)) == Vec2(1.0, 2.0)

    def test_quarter_turn(self):
        out = apply(Se2(math.pi / 2), (1.0, 0.0))
        assert out.x == pytest.approx(0.0, abs=1e-15) and out.z == pytest.approx(1.0)

    def test_derived_example(self):
        h = Se2(math.pi / 2, 3.0, -1.0)
        np.testing.assert_allclose(apply(h, (1.0, 0.0)), hom_apply(h, (1.0, 0.0)), atol=1e-15)
        np.testing.assert_allclose(apply(h, (1.0, 0.0)), (3.0, 0.0), atol=1e-15)

    @given(se2s, coords, coords)
    def test_round_trip(self, h, px, pz):
        back = apply(inverse(h), apply(h, (px, pz)))
        assert back.x == pytest.approx(px, abs=1e-10)
        assert back.z == pytest.approx(pz, abs=1e-10)

    def test_matmul_sugar(self):
        h = Se2(0.2, 1.0, 2.0)
        assert h @ (1.0, 1.0) == apply(h, (1.0, 1.0))
        assert h @ h == compose(h, h)


class TestMatrixRoundTrip:
    @given(se2s)
    def test_from_to_matrix(self, h):
        assert_se2_close(Se2.from_matrix(h.to_matrix()), h)

    def test_tuple_order(self):
        assert Se2(0.1, 2.0, 3.0).to_tuple() == (0.1, 2.0, 3.0)
        assert Se2.from_tuple((0.1, 2.0, 3.0)) == Se2(0.1, 2.0, 3.0)


class TestUpdateGoal:
    def test_identity(self):
        assert update_goal((5.0, 0.0), IDENTITY) == Vec2(5.0, 0.0)

    def test_quarter_turn(self):
        out = update_goal((1.0, 0.0), Se2(math.pi / 2))
        np.testing.assert_allclose(out, (0.0, 1.0), atol=1e-15)

    def test_derived_example(self):
        h = Se2(math.pi / 6, 0.1, -0.25)
        np.testing.assert_allclose(update_goal((2.0, -3.0), h), hom_apply(h, (2.0, -3.0)), atol=1e-14)


class TestIntegrate:
    def test_empty(self):
        assert integrate([]) == [IDENTITY]

    def test_round_trip(self):
        h = Se2(0.7, 0.3, -0.2)
        out = integrate([h, inverse(h)])
        assert len(out) == 3
        assert_se2_close(out[1], h)
        assert_se2_close(out[2], IDENTITY)

    def test_closed_square(self):
        step = Se2(math.pi / 2, 0.0, -1.0)
        out = integrate([step] * 4)
        m = np.eye(3)
        for k in range(4):
            m = hom(step) @ m
            np.testing.assert_allclose(hom(out[k + 1]), m, atol=1e-12)
        assert_se2_close(out[-1], IDENTITY)

    @settings(max_examples=30)
    @given(st.lists(se2s, max_size=20), coords, coords)
    def test_goal_closure(self, steps, gx, gz):
        goal = Vec2(gx, gz)
        cumulative = integrate(steps)
        for k, h in enumerate(steps):
            goal = update_goal(goal, h)
            expected = apply(cumulative[k + 1], (gx, gz))
            assert goal.x == pytest.approx(expected.x, abs=1e-8)
            assert goal.z == pytest.approx(expected.z, abs=1e-8)


class TestPolarGoal:
    def test_pythagorean(self):
        mag, unit = polar_goal_encoding((3.0, 4.0))
        assert mag == 5.0
        assert unit == pytest.approx((0.6, 0.8))

    def test_degenerate(self):
        assert polar_goal_encoding((0.0, 0.0)) == (0.0, Vec2(0.0, 0.0))

    def test_axis(self):
        assert polar_goal_encoding((0.0, -2.0)) == (2.0, Vec2(0.0, -1.0))
