import math

import numpy as np
import pytest

from drillsim.haptics import (
    DrillState,
    ProxyResult,
    ToolCursor,
    control_law,
    drill_prims,
    make_drill_state,
    resolve_drill,
    update_proxies,
)
from drillsim.pose import Pose, quat_from_euler_xyz
from drillsim.scene import DrillParams
from drillsim.volume import LabelInfo, VoxelVolume
from conftest import make_block_volume

PARAMS = DrillParams(tip_radius=1e-3, shaft_radius=1.5e-3, shaft_cursors=5,
                     shaft_length=0.05)


def wall_volume(n=32, spacing=1e-3):
    """Occupied half-space x >= 0 (local x >= n/2 voxels)."""
    lab = np.zeros((n, n, n), dtype=np.uint8)
    lab[:, :, n // 2:] = 1
    return VoxelVolume.from_labels(
        lab, (spacing,) * 3,
        Pose((-n * spacing / 2, -n * spacing / 2, -n * spacing / 2)),
        {1: LabelInfo("bone", (255, 255, 255))},
    )


class TestControlLaw:
    def test_zero(self):
        assert np.array_equal(control_law((0, 0, 0)), np.zeros(3))

    def test_reference_value(self):
        f = control_law((0.002, 0.0, 0.0), stiffness=500.0)
        assert np.allclose(f, (1.0, 0.0, 0.0))

    def test_clamp_preserves_direction(self):
        e = np.array([3.0, 4.0, 0.0])
        f = control_law(e, stiffness=500.0, f_max=5.0)
        assert np.linalg.norm(f) == pytest.approx(5.0)
        assert np.allclose(f / np.linalg.norm(f), e / np.linalg.norm(e))


class TestUpdateProxies:
    def test_free_space_proxies_reach_goals(self):
        vol = make_block_volume(n=16, solid=False)
        state = make_drill_state(PARAMS, Pose((0.1, 0.0, 0.0)))
        target = Pose((0.12, 0.01, -0.02))
        pr = update_proxies(target, vol, state)
        assert np.allclose(pr.deltas, 0.0, atol=1e-12)
        assert pr.s_max == 0
        for cur in state.cursors:
            assert np.allclose(cur.proxy, cur.goal)

    def test_push_into_wall_stops_at_surface(self):
        vol = wall_volume()
        r = 1e-3
        # single-cursor drill, pushed 3 mm into the wall along +x
        params = DrillParams(tip_radius=r, shaft_radius=r, shaft_cursors=1,
                             shaft_length=0.05)
        start = Pose((-6e-3, 0.0, 0.0))
        state = make_drill_state(params, start)
        update_proxies(start, vol, state)
        goal_x = 3e-3
        pr = update_proxies(Pose((goal_x, 0.0, 0.0)), vol, state)
        tip = state.tip
        # analytic rest: wall face at x=0, sphere touches when center = -r,
        # quantized by one march step
        step = 0.5 * min(vol.spacing)
        assert tip.proxy[0] <= -r + 1e-12
        assert tip.proxy[0] >= -r - step - 1e-12
        expect = goal_x - tip.proxy[0]
        assert np.linalg.norm(pr.deltas[0]) == pytest.approx(expect, abs=1e-12)
        # delta parallel to the surface normal (x axis)
        assert abs(pr.deltas[0][1]) < 1e-9 and abs(pr.deltas[0][2]) < 1e-9

    def test_slide_along_wall(self):
        vol = wall_volume()
        r = 1e-3
        params = DrillParams(tip_radius=r, shaft_radius=r, shaft_cursors=1,
                             shaft_length=0.05)
        # start in contact with the wall
        start = Pose((-r - 0.2e-3, 0.0, 0.0))
        state = make_drill_state(params, start)
        update_proxies(start, vol, state)
        # command a diagonal move: into the wall and up along +y
        pr = update_proxies(Pose((3e-3, 6e-3, 0.0)), vol, state)
        tip = state.tip
        # proxy slid tangentially: most of the +y motion is realized
        assert tip.proxy[1] > 0.9 * 6e-3
        # the residual tangential error is < 10% of the commanded motion
        assert abs(pr.deltas[0][1]) < 0.1 * 6e-3
        # and the proxy never penetrated
        assert tip.proxy[0] <= -r + 1e-12

    def test_argmax_matches_bruteforce(self):
        from drillsim.haptics import deciding_cursor

        rng = np.random.default_rng(0)
        for _ in range(300):
            count = int(rng.integers(2, 8))
            norms = rng.choice([0.0, 0.25, 0.5, 1.0], size=count)  # force ties
            got = deciding_cursor(norms)
            best = max(norms)
            assert norms[got] == best
            assert got == min(i for i in range(count) if norms[i] == best)

    def test_tie_prefers_lowest_index(self):
        from drillsim.haptics import deciding_cursor

        assert deciding_cursor(np.array([0.5, 0.5, 0.5])) == 0
        assert deciding_cursor(np.array([0.1, 0.5, 0.5])) == 1


class TestResolveDrill:
    def test_shaft_contact_snaps_pose_no_removal(self):
        vol = wall_volume()
        params = DrillParams(tip_radius=1e-3, shaft_radius=1.5e-3,
                             shaft_cursors=2, shaft_length=0.04)
        # drill axis +x: shaft cursors extend +x beyond the tip after rotation
        q = quat_from_euler_xyz(0.0, math.pi / 2, 0.0)  # +z -> +x
        start = Pose((-0.05, 0.0, 0.0), q)
        state = make_drill_state(params, start)
        update_proxies(start, vol, state)
        state.drilling_enabled = True
        # move so a shaft cursor (20/40 mm ahead) penetrates but the tip stays free
        target = Pose((-0.018, 0.0, 0.0), q)
        pr = update_proxies(target, vol, state)
        assert pr.s_max != 0
        before = vol.occupied_count
        out = resolve_drill(state, pr, vol, target, tick=1)
        assert out.edit is None
        assert vol.occupied_count == before
        # pose snapped: recovered drill origin = shaft proxy - R*offset
        cur = state.cursors[pr.s_max]
        expect = np.array(cur.proxy) - np.array(target.rotate(cur.offset))
        assert np.allclose(out.pose.position, expect, atol=1e-12)
        assert np.allclose(out.force, control_law(pr.e_max), atol=1e-15)

    def test_free_space_all_zero(self):
        vol = make_block_volume(n=16, solid=False)
        state = make_drill_state(PARAMS, Pose((0.2, 0.0, 0.0)))
        state.drilling_enabled = True
        target = Pose((0.2, 0.0, 0.0))
        pr = update_proxies(target, vol, state)
        out = resolve_drill(state, pr, vol, target, tick=0)
        assert np.allclose(out.pose.position, target.position)
        assert np.allclose(out.force, 0.0)
        assert out.edit is None  # removal set empty in free space

    def test_tip_contact_removes_with_spring_force(self):
        vol = wall_volume()
        r = 1e-3
        params = DrillParams(tip_radius=r, shaft_radius=r, shaft_cursors=1,
                             shaft_length=0.05)
        start = Pose((-5e-3, 0.0, 0.0))
        state = make_drill_state(params, start)
        state.drilling_enabled = True
        update_proxies(start, vol, state)
        target = Pose((1e-3, 0.0, 0.0))  # goal 1 mm inside the wall
        pr = update_proxies(target, vol, state)
        assert pr.s_max == 0
        out = resolve_drill(state, pr, vol, target, tick=3)
        assert out.edit is not None and out.edit.count > 0
        assert out.edit.tick == 3
        # exact arithmetic: F = k * delta_tip
        assert np.array_equal(out.force, control_law(pr.deltas[0], state.stiffness,
                                                     state.f_max))

    def test_drilling_disabled_never_removes(self):
        vol = wall_volume()
        state = make_drill_state(PARAMS, Pose((-5e-3, 0.0, 0.0)))
        state.drilling_enabled = False
        update_proxies(Pose((-5e-3, 0, 0)), vol, state)
        pr = update_proxies(Pose((2e-3, 0.0, 0.0)), vol, state)
        before = vol.occupied_count
        out = resolve_drill(state, pr, vol, Pose((2e-3, 0.0, 0.0)), tick=0)
        assert out.edit is None
        assert vol.occupied_count == before

    def test_tip_exclusivity_randomized(self):
        vol = wall_volume()
        state = make_drill_state(PARAMS, Pose((-0.01, 0.0, 0.0)))
        state.drilling_enabled = True
        rng = np.random.default_rng(7)
        pose = np.array([-0.01, 0.0, 0.0])
        for tick in range(500):
            pose = pose + rng.normal(scale=0.3e-3, size=3)
            pose[0] = min(pose[0], 0.004)
            target = Pose(tuple(pose))
            pr = update_proxies(target, vol, state)
            out = resolve_drill(state, pr, vol, target, tick=tick)
            if out.edit is not None:
                # removal happened only on the tip branch
                assert pr.s_max == 0 or pr.norms[pr.s_max] <= state.epsilon

    def test_force_continuity_under_small_input_change(self):
        vol = wall_volume()
        r = 1e-3
        params = DrillParams(tip_radius=r, shaft_radius=r, shaft_cursors=1,
                             shaft_length=0.05)
        step = 0.5 * min(vol.spacing)
        k = 500.0
        delta = 0.2e-3
        forces = []
        for off in (0.0, delta):
            state = make_drill_state(params, Pose((-5e-3, 0.0, 0.0)))
            update_proxies(Pose((-5e-3, 0.0, 0.0)), vol, state)
            target = Pose((1e-3 + off, 0.0, 0.0))
            pr = update_proxies(target, vol, state)
            out = resolve_drill(state, pr, vol, target)
            forces.append(out.force)
        diff = np.linalg.norm(forces[1] - forces[0])
        assert diff <= k * (delta + 2 * step) + 1e-9


class TestNonPenetration:
    def test_proxy_centers_never_inside_occupied(self):
        vol = wall_volume()
        state = make_drill_state(PARAMS, Pose((-0.02, 0.0, 0.0)))
        rng = np.random.default_rng(11)
        pose = np.array([-0.02, 0.0, 0.0])
        for tick in range(1000):
            pose = pose + rng.normal(scale=0.5e-3, size=3)
            target = Pose(tuple(pose))
            pr = update_proxies(target, vol, state)
            resolve_drill(state, pr, vol, target, tick=tick)
            for cur in state.cursors:
                assert not vol.sample(tuple(cur.proxy)).occupied


class TestDrillPrims:
    def test_tip_sphere_and_shaft_capsule(self):
        state = make_drill_state(PARAMS, Pose((1.0, 2.0, 3.0)))
        prims = drill_prims(state)
        assert len(prims) == 2
        assert prims[0].a == (1.0, 2.0, 3.0)
        assert prims[0].radius == PARAMS.tip_radius
        assert prims[1].radius == PARAMS.shaft_radius
        # capsule spans the first..last shaft cursor along +z
        assert prims[1].a[2] == pytest.approx(3.0 + 0.01)
        assert prims[1].b[2] == pytest.approx(3.0 + 0.05)
