import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pointnav_vo.metrics import (
    SUCCESS_DISTANCE,
    aggregate,
    episode_metrics,
    path_efficiency,
    per_step_vo_error,
    soft_spl,
    spl,
    success,
    sys_error,
)

lengths = st.floats(0.01, 100.0)


class TestSuccess:
    @pytest.mark.parametrize(
        "d_g, stopped, expected",
        [(0.30, True, 1), (0.40, True, 0), (0.10, False, 0), (0.36, True, 0), (0.0, True, 1)],
    )
    def test_fixture(self, d_g, stopped, expected):
        assert success(d_g, stopped) == expected

    def test_threshold_is_twice_radius(self):
        assert SUCCESS_DISTANCE == 2 * 0.18

    def test_negative(self):
        with pytest.raises(ValueError):
            success(-0.1)


class TestSpl:
    @pytest.mark.parametrize(
        "s, l, l_a, expected",
        [(1, 5.0, 5.0, 1.0), (0, 3.0, 7.0, 0.0), (1, 4.0, 5.0, 0.8), (1, 0.0, 0.0, 1.0), (1, 6.0, 3.0, 1.0)],
    )
    def test_fixture(self, s, l, l_a, expected):
        assert spl(s, l, l_a) == expected

    @given(st.integers(0, 1), lengths, lengths)
    def test_bounds(self, s, l, l_a):
        v = spl(s, l, l_a)
        assert 0.0 <= v <= s
        assert v <= l / max(l, l_a) + 1e-15


class TestSoftSpl:
    @pytest.mark.parametrize(
        "d_init, d_g, l, l_a, expected",
        [(5.0, 5.0, 5.0, 6.0, 0.0), (5.0, 0.0, 5.0, 5.0, 1.0), (10.0, 2.0, 8.0, 10.0, 0.64)],
    )
    def test_fixture(self, d_init, d_g, l, l_a, expected):
        assert soft_spl(d_init, d_g, l, l_a) == pytest.approx(expected, abs=1e-15)

    def test_negative_unless_clamped(self):
        assert soft_spl(2.0, 3.0, 2.0, 2.0) == -0.5
        assert soft_spl(2.0, 3.0, 2.0, 2.0, clamp=True) == 0.0

    def test_degenerate(self):
        with pytest.raises(ValueError, match="degenerate episode"):
            soft_spl(0.0, 0.0, 1.0, 1.0)

    @given(lengths, st.floats(0, 50), lengths, lengths)
    def test_shares_efficiency_factor(self, d_init, d_g, l, l_a):
        eff = path_efficiency(l, l_a)
        assert soft_spl(d_init, d_g, l, l_a) == pytest.approx((1 - d_g / d_init) * eff, rel=1e-12, abs=1e-15)
        assert spl(1, l, l_a) == eff

    @given(lengths, st.floats(0, 50), st.floats(0, 50), lengths, lengths)
    def test_monotone_in_d_g(self, d_init, a, b, l, l_a):
        lo, hi = sorted((a, b))
        assert soft_spl(d_init, hi, l, l_a) <= soft_spl(d_init, lo, l, l_a)

    @given(lengths, st.floats(0, 5), st.floats(0.01, 10), st.floats(0, 10), st.floats(0, 10))
    def test_monotone_in_agent_length(self, d_init, d_g, l, e1, e2):
        lo, hi = l + min(e1, e2), l + max(e1, e2)
        d_g = min(d_g, d_init)
        assert soft_spl(d_init, d_g, l, hi) <= soft_spl(d_init, d_g, l, lo)


def _episode(d_g, stopped, l, l_a):
    return SimpleNamespace(d_g=d_g, stopped=stopped, shortest_length=l, path_length=l_a, d_init=l)


class TestEpisodeMetrics:
    def test_row(self):
        m = episode_metrics(_episode(0.1, True, 4.0, 5.0))
        assert m.row() == (1, 0.8, pytest.approx(0.975 * 0.8), 0.1)

    def test_aggregate(self):
        rows = [episode_metrics(_episode(0.0, True, 3.0, 3.0)), episode_metrics(_episode(2.0, False, 4.0, 4.0))]
        agg = aggregate(rows)
        assert agg["success"] == 0.5 and agg["spl"] == 0.5
        assert agg["soft_spl"] == pytest.approx(0.75)

    def test_aggregate_empty(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestVoError:
    def test_zero(self):
        g = np.random.default_rng(0).normal(size=(6, 3))
        assert per_step_vo_error(g, g).overall == (0.0, 0.0, 0.0)

    def test_single_step(self):
        r = per_step_vo_error([(0.1, -0.2, 0.0)], [(0.0, -0.25, 0.01)])
        np.testing.assert_allclose(r.overall, (0.1, 0.05, 0.01), atol=1e-15)

    def test_per_action(self):
        p = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0]])
        r = per_step_vo_error(p, np.zeros((3, 3)), ["move_forward", "turn_left", "move_forward"])
        assert r.per_action["move_forward"] == (0.5, 0.0, 1.5)
        assert r.counts == {"move_forward": 2, "turn_left": 1}

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            per_step_vo_error(np.zeros((2, 3)), np.zeros((3, 3)))

    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        p, g = rng.normal(size=(2, 9, 3))
        acts = list(rng.choice(["move_forward", "turn_left", "turn_right"], 9))
        perm = rng.permutation(9)
        a = per_step_vo_error(p, g, acts)
        b = per_step_vo_error(p[perm], g[perm], [acts[i] for i in perm])
        np.testing.assert_allclose(a.overall, b.overall, rtol=1e-12)
        for k in a.per_action:
            np.testing.assert_allclose(a.per_action[k], b.per_action[k], rtol=1e-12)


class TestSysError:
    def test_constant(self):
        c = [(0.0, 0.25, 0.01)] * 4
        assert sys_error(c, ["move_forward"] * 4, c, ["move_forward"] * 4).overall == (0.0, 0.0, 0.0)

    def test_mean_deviation(self):
        vals = np.array([[1.0, 1, 1], [2, 2, 2], [3, 3, 3]])
        r = sys_error(vals, ["turn_left"] * 3, vals, ["turn_left"] * 3)
        np.testing.assert_allclose(r.overall, (2 / 3,) * 3, rtol=1e-15)

    def test_per_action_means(self):
        train = np.array([[0, 1.0, 0], [0, 3.0, 0], [0, 0, 0.5]])
        r = sys_error(train, ["f", "f", "l"], [(0, 2.0, 0), (0, 0, 0.6)], ["f", "l"])
        assert r.per_action["f"] == (0.0, 0.0, 0.0)
        assert r.per_action["l"][2] == pytest.approx(0.1)

    def test_missing_action(self):
        with pytest.raises(ValueError, match="turn_right"):
            sys_error([(0, 0, 0)], ["turn_left"], [(0, 0, 0)], ["turn_right"])


def test_efficiency_zero_length():
    assert path_efficiency(0.0, 0.0) == 1.0
    assert math.isclose(path_efficiency(2.0, 4.0), 0.5)
