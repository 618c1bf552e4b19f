import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointnav_vo.errors import InvalidState, NoPath
from pointnav_vo.se2 import IDENTITY, Se2, Vec2, compose, inverse
from pointnav_vo.sim import (
    Action,
    ActuationNoiseModel,
    AgentState,
    CameraRig,
    GreedyPolicy,
    OccupancyGrid,
    augment_turn_pairs,
    empty_scene,
    generate_vo_dataset,
    geodesic_distance,
    ground_truth_estimator,
    procedural_scene,
    read_dataset,
    read_episode_log,
    read_grid,
    render_correspondences,
    render_depth,
    run_episode,
    sample_start_goal,
    shortest_path,
    step,
    write_dataset,
    write_episode_log,
    write_grid,
    zero_estimator,
)
from pointnav_vo.vo_classical import _bearings

NOISELESS = ActuationNoiseModel().noiseless()
SMALL_RIG = CameraRig.default(width=65, height=37)


def walled(h, w):
    cells = np.zeros((h, w), bool)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
    return cells


def planar_essential_oracle(h: Se2) -> np.ndarray:
    """E = [t]x R built from the 3-D lift of the planar motion (camera z = -agent z)."""
    c, s = math.cos(h.theta), math.sin(h.theta)
    A = np.array([[c, 0, -s], [0, 1, 0], [s, 0, c]])  # acts on agent (x, y, z)
    C = np.diag([1.0, 1.0, -1.0])
    R = C @ A @ C
    t = C @ np.array([h.x, 0.0, h.z])
    tx = np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0]])
    return tx @ R


class TestGrid:
    def test_boundary_required(self):
        cells = walled(5, 5)
        cells[0, 2] = False
        with pytest.raises(ValueError, match="boundary"):
            OccupancyGrid(cells)

    def test_round_trip(self, tmp_path):
        g = procedural_scene(3, 4.0, 3.0)
        write_grid(tmp_path / "s.txt", g)
        text = (tmp_path / "s.txt").read_text().splitlines()
        assert text[0] == "GRID1 80 60 0.05"
        assert set("".join(text[1:])) <= {"#", "."}
        assert read_grid(tmp_path / "s.txt") == g

    def test_too_small_for_doorway(self):
        with pytest.raises(ValueError, match="too small"):
            procedural_scene(0, 1.5, 1.5)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "s.txt").write_text("GRID2 3 3 0.05\n###\n#.#\n###\n")
        with pytest.raises(ValueError, match="magic"):
            read_grid(tmp_path / "s.txt")

    def test_ragged_rows(self, tmp_path):
        (tmp_path / "s.txt").write_text("GRID1 3 3 0.05\n###\n#.\n###\n")
        with pytest.raises(ValueError):
            read_grid(tmp_path / "s.txt")

    def test_disc_free(self):
        g = empty_scene(2.0, 2.0)
        assert g.disc_free((1.0, 1.0), 0.18)
        # wall face at 0.05 m
        assert g.disc_free((0.23, 1.0), 0.18)
        assert not g.disc_free((0.22, 1.0), 0.18)

    def test_raycast_to_wall(self):
        g = empty_scene(4.0, 4.0)
        d = g.raycast((2.0, 2.0), np.array([[0.0, -1.0], [1.0, 0.0]]), 10.0)
        np.testing.assert_allclose(d, [1.95, 1.95], atol=1e-12)


class TestStep:
    start = AgentState(Vec2(5.0, 5.0), 0.0)

    def test_forward_noiseless(self):
        new, gt, collided = step(self.start, "move_forward", empty_scene(), NOISELESS, 0)
        assert not collided
        assert new.position == pytest.approx((5.0, 4.75))
        # the old agent origin sits 0.25 m behind the new one
        assert gt.to_tuple() == pytest.approx((0.0, 0.0, 0.25), abs=1e-15)

    def test_turn_left_noiseless(self):
        new, gt, collided = step(self.start, Action.TURN_LEFT, empty_scene(), NOISELESS, 0)
        assert gt.theta == pytest.approx(math.radians(30), abs=1e-15)
        assert (gt.x, gt.z) == pytest.approx((0.0, 0.0), abs=1e-15)
        assert new.position == self.start.position and not collided
        # turning left from heading 0 points the agent toward world -x
        fwd = new.to_world((0.0, -1.0))
        assert fwd.x < 5.0

    def test_forward_into_wall(self):
        s = AgentState(Vec2(5.0, 0.3), 0.0)
        new, gt, collided = step(s, "move_forward", empty_scene(), ActuationNoiseModel(), 4)
        assert collided
        assert (gt.x, gt.z) == (0.0, 0.0)
        assert gt.theta != 0.0 and abs(gt.theta) < math.radians(5)
        assert new.position == s.position

    def test_no_rotation_when_disabled(self):
        noise = ActuationNoiseModel(rotate_on_collision=False)
        _, gt, collided = step(AgentState(Vec2(5.0, 0.3), 0.0), "move_forward", empty_scene(), noise, 4)
        assert collided and gt == IDENTITY

    def test_stop_is_identity(self):
        new, gt, collided = step(self.start, "stop", empty_scene(), ActuationNoiseModel(), 0)
        assert new == self.start and gt == IDENTITY and not collided

    def test_invalid_state(self):
        with pytest.raises(InvalidState):
            step(AgentState(Vec2(0.1, 5.0)), "move_forward", empty_scene(), NOISELESS)

    def test_unknown_action(self):
        with pytest.raises(ValueError, match="unknown action"):
            step(self.start, "jump", empty_scene(), NOISELESS)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_soundness_and_gt_chain(self, seed):
        rng = np.random.default_rng(seed)
        g = procedural_scene(seed % 7, 5.0, 5.0)
        free = np.argwhere(g.clearance > 0.25)
        r, c = free[rng.integers(len(free))]
        state = start = AgentState(Vec2(*g.cell_center(r, c)), rng.uniform(-math.pi, math.pi))
        chain = IDENTITY
        for _ in range(40):
            a = rng.choice(["move_forward", "move_forward", "turn_left", "turn_right"])
            state, gt, _ = step(state, a, g, ActuationNoiseModel(), rng)
            assert g.disc_free(state.position, state.radius)
            chain = compose(gt, chain)
        rebuilt = compose(start.pose, inverse(chain))
        assert rebuilt.theta == pytest.approx(state.heading, abs=1e-9)
        assert (rebuilt.x, rebuilt.z) == pytest.approx(tuple(state.position), abs=1e-9)


class TestShortestPath:
    def test_start_equals_goal(self):
        assert shortest_path(empty_scene(), (2.0, 2.0), (2.0, 2.0)).length == 0.0

    def test_empty_room(self):
        res = shortest_path(empty_scene(), (1.0, 1.0), (4.0, 5.0))
        assert 5.0 <= res.length <= 5.0 + 0.05 * math.sqrt(2)

    def test_sealed_room(self):
        cells = walled(80, 80)
        cells[30:50, 30] = cells[30:50, 50] = cells[30, 30:51] = cells[50, 30:51] = True
        with pytest.raises(NoPath, match="no path"):
            shortest_path(OccupancyGrid(cells), (0.5, 0.5), (2.0, 2.0))

    def test_occupied_goal(self):
        with pytest.raises(InvalidState):
            shortest_path(empty_scene(), (1.0, 1.0), (0.01, 0.01))

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 1000))
    def test_at_least_euclidean(self, seed):
        g = procedural_scene(seed, 6.0, 6.0)
        rng = np.random.default_rng(seed)
        free = np.argwhere(g.clearance > 0.25)
        a, b = (Vec2(*g.cell_center(*free[i])) for i in rng.integers(len(free), size=2))
        try:
            res = shortest_path(g, a, b)
        except NoPath:
            return
        assert res.length >= math.dist(a, b) - 1e-12
        for p in res.waypoints:
            assert not g.occupied_at(p)


class TestRender:
    def wall_scene(self):
        cells = walled(200, 200)
        cells[60, :] = True  # face toward the agent at z = 3.05
        return OccupancyGrid(cells)

    def test_wall_ahead(self):
        d = render_depth(self.wall_scene(), AgentState(Vec2(5.0, 5.05), 0.0), SMALL_RIG)
        assert d.values[18, 32] == pytest.approx(2.0, abs=0.025)
        assert d.values.shape == (37, 65)

    def test_corridor_clamped(self):
        cells = np.ones((40, 700), bool)
        cells[1:-1, 1:-1] = False
        g = OccupancyGrid(cells)
        d = render_depth(g, AgentState(Vec2(34.0, 1.0), -math.pi / 2), SMALL_RIG)
        assert d.values[18, 32] == 10.0
        assert d.values.max() == 10.0

    def test_deterministic_and_noise(self):
        g, s = self.wall_scene(), AgentState(Vec2(5.0, 5.05), 0.3)
        assert render_depth(g, s, SMALL_RIG) == render_depth(g, s, SMALL_RIG)
        noisy = CameraRig.default(width=65, height=37, depth_noise=0.05)
        a, b = render_depth(g, s, noisy, 1), render_depth(g, s, noisy, 1)
        assert a == b and a != render_depth(g, s, SMALL_RIG)

    @pytest.mark.parametrize("action", ["move_forward", "turn_left", "turn_right"])
    def test_epipolar(self, action):
        g = procedural_scene(5)
        s1 = AgentState(Vec2(2.0, 2.0), 0.4)
        if not g.disc_free(s1.position, 0.3):
            g = empty_scene()
        s2, gt, _ = step(s1, action, g, ActuationNoiseModel(), 3)
        c = render_correspondences(g, s1, s2, SMALL_RIG, 40, 0)
        assert len(c) >= 8
        E = planar_essential_oracle(gt)
        b1, b2 = _bearings(c.uv, SMALL_RIG.K), _bearings(c.uv2, SMALL_RIG.K)
        assert np.abs(np.einsum("ni,ij,nj->n", b2, E, b1)).max() < 1e-8


class TestEpisodes:
    def test_gt_dead_reckoning(self):
        g = empty_scene()
        start, goal = AgentState(Vec2(2.0, 2.0), 1.0), Vec2(7.0, 6.0)
        ep = run_episode(g, start, goal, GreedyPolicy(), ground_truth_estimator, ActuationNoiseModel(), 5)
        assert ep.stopped and ep.d_g < 0.36
        for rec in ep.steps:
            world = compose(start.pose, rec.true_pose)
            truth = AgentState.from_pose(world).to_agent(goal)
            assert rec.goal_estimate == pytest.approx(tuple(truth), abs=1e-9)
            assert rec.dead_reckoned.to_tuple() == pytest.approx(rec.true_pose.to_tuple(), abs=1e-9)
        final = compose(start.pose, inverse(ep.gt_chain()))
        assert (final.x, final.z) == pytest.approx(tuple(ep.final.position), abs=1e-9)

    def test_zero_estimator_never_updates(self):
        g = empty_scene()
        start, goal = AgentState(Vec2(2.0, 2.0), 0.0), Vec2(2.0, 5.0)
        ep = run_episode(g, start, goal, GreedyPolicy(), zero_estimator, ActuationNoiseModel(), 1, max_steps=60)
        assert not ep.stopped
        assert {tuple(r.goal_estimate) for r in ep.steps} == {tuple(start.to_agent(goal))}

    def test_max_steps_zero(self):
        g = empty_scene()
        start, goal = AgentState(Vec2(2.0, 2.0)), Vec2(6.0, 2.0)
        ep = run_episode(g, start, goal, GreedyPolicy(), zero_estimator, NOISELESS, 0, max_steps=0)
        assert not ep.steps and not ep.stopped
        assert ep.d_g == ep.d_init == geodesic_distance(g, start.position, goal)

    def test_unknown_policy_action(self):
        with pytest.raises(ValueError, match="unknown action"):
            run_episode(empty_scene(), AgentState(Vec2(2.0, 2.0)), (6.0, 2.0), lambda v: "fly", zero_estimator, NOISELESS)

    def test_log_round_trip(self, tmp_path):
        g = empty_scene()
        ep = run_episode(g, AgentState(Vec2(2.0, 2.0), 0.5), (4.0, 3.0), GreedyPolicy(), ground_truth_estimator, ActuationNoiseModel(), 9, episode_id="e0")
        write_episode_log(tmp_path / "e.jsonl", ep)
        back = read_episode_log(tmp_path / "e.jsonl")
        assert back.steps == ep.steps
        assert (back.stopped, back.d_g, back.path_length, back.shortest_length) == (ep.stopped, ep.d_g, ep.path_length, ep.shortest_length)
        assert len((tmp_path / "e.jsonl").read_text().splitlines()) == len(ep.steps) + 1

    def test_episode_reproducible(self):
        g = procedural_scene(2)
        start, goal, _ = sample_start_goal(g, np.random.default_rng(0))
        args = (g, start, goal, GreedyPolicy(), ground_truth_estimator, ActuationNoiseModel())
        a, b = run_episode(*args, rng=11), run_episode(*args, rng=11)
        assert a.steps and a.steps == b.steps


class TestDataset:
    scenes = [procedural_scene(k, 6.0, 6.0) for k in range(2)]

    def test_deterministic(self):
        a = generate_vo_dataset(self.scenes, 60, rng_seed=4, rig=SMALL_RIG)
        b = generate_vo_dataset(self.scenes, 60, rng_seed=4, rig=SMALL_RIG)
        assert [s.gt for s in a] == [s.gt for s in b]
        assert a.manifest == b.manifest
        assert a.samples[7].depth_t == b.samples[7].depth_t

    def test_jobs_independent(self):
        a = generate_vo_dataset(self.scenes, 80, rng_seed=1, rig=SMALL_RIG)
        b = generate_vo_dataset(self.scenes, 80, rng_seed=1, rig=SMALL_RIG, jobs=2)
        assert [(s.action, s.gt, s.collided) for s in a] == [(s.action, s.gt, s.collided) for s in b]

    def test_zero_noise_empty_scene(self):
        ds = generate_vo_dataset([empty_scene(6.0, 6.0)], 300, NOISELESS, rng_seed=2, rig=SMALL_RIG)
        assert ds.manifest["collisions"] == 0
        assert sum(ds.manifest["actions"].values()) == 300

    def test_gt_matches_states(self):
        ds = generate_vo_dataset(self.scenes, 40, rng_seed=3, rig=SMALL_RIG)
        for s in ds:
            h = compose(inverse(s.after.pose), s.before.pose)
            assert h.to_tuple() == pytest.approx(s.gt.to_tuple(), abs=1e-12)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_vo_dataset(self.scenes, 0)
        with pytest.raises(ValueError):
            generate_vo_dataset([], 5)

    def test_no_free_space(self):
        with pytest.raises(InvalidState, match="no free space"):
            generate_vo_dataset([OccupancyGrid(np.ones((10, 10), bool))], 5)

    def test_write_read(self, tmp_path):
        ds = generate_vo_dataset(self.scenes, 6, rng_seed=0, rig=SMALL_RIG)
        write_dataset(tmp_path, ds.samples, ds.manifest)
        back = read_dataset(tmp_path)
        assert [s.gt for s in back] == [s.gt for s in ds]
        np.testing.assert_allclose(back[2].depth_t1.values, ds.samples[2].depth_t1.values, atol=1e-5)
        assert len(back[1].correspondences) == len(ds.samples[1].correspondences)


class TestAugment:
    ds = generate_vo_dataset([procedural_scene(1, 6.0, 6.0)], 50, rng_seed=8, rig=SMALL_RIG)

    def test_forward_untouched(self):
        fwd = [s for s in self.ds if s.action == Action.MOVE_FORWARD]
        assert augment_turn_pairs(fwd) == fwd

    def test_pairs_invert(self):
        out = augment_turn_pairs(self.ds.samples)
        turns = sum(s.action != Action.MOVE_FORWARD for s in self.ds)
        assert len(out) == len(self.ds) + turns
        for a, b in zip(out, out[1:]):
            if b.flipped:
                assert {a.action, b.action} == {Action.TURN_LEFT, Action.TURN_RIGHT}
                assert compose(a.gt, b.gt).to_tuple() == pytest.approx((0, 0, 0), abs=1e-12)
                assert b.depth_t == a.depth_t1 and b.depth_t1 == a.depth_t
