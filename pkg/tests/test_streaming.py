import numpy as np
import pytest

import drillsim.streaming as st
from drillsim.pose import Pose
from drillsim.render import PointCloud
from drillsim.scene import load_scene_file
from drillsim.simloop import SimConfig, make_builtin_trajectory, run_loop, Simulation
from drillsim.volume import VoxelEdit
from conftest import write_sim_scene
from test_simloop import small_scene


def make_message(topic=st.SEG, ts=1000, header=None, payload=b"\x01\x02\x03"):
    return st.TopicMessage(topic, ts, header or {"w": 3, "h": 1, "encoding": "label8",
                                                 "frame_id": 0}, payload)


class TestFraming:
    def test_wire_layout(self):
        msg = st.TopicMessage(st.SEG, 0x0102030405060708, {}, b"PAYLOAD")
        wire = st.encode_message(msg)
        assert wire[:4] == b"AMBP"
        assert wire[4] == 1  # version
        assert wire[5] == st.SEG
        assert wire[6:8] == b"\x00\x00"  # reserved
        assert int.from_bytes(wire[8:16], "little") == 0x0102030405060708
        hlen = int.from_bytes(wire[16:20], "little")
        plen = int.from_bytes(wire[20:24], "little")
        assert wire[24:24 + hlen] == b"{}"
        assert plen == 7
        assert wire[24 + hlen:] == b"PAYLOAD"

    def test_round_trip(self):
        msg = make_message()
        back, end = st.decode_message(st.encode_message(msg))
        assert back == msg
        assert end == len(st.encode_message(msg))

    def test_bad_magic_is_corrupt(self):
        wire = bytearray(st.encode_message(make_message()))
        wire[0] = ord("X")
        with pytest.raises(st.CorruptRecording):
            st.decode_message(bytes(wire))

    def test_short_buffer_is_truncated(self):
        wire = st.encode_message(make_message())
        with pytest.raises(st.TruncatedFile):
            st.decode_message(wire[:10])

    def test_header_bytes_canonical(self):
        a = st.encode_message(st.TopicMessage(1, 0, {"b": 1, "a": 2}, b""))
        b = st.encode_message(st.TopicMessage(1, 0, {"a": 2, "b": 1}, b""))
        assert a == b  # sorted keys -> byte-identical regardless of dict order


class TestPayloadCodecs:
    def test_image_round_trip(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 255, (12, 16, 3)).astype(np.uint8)
        msg = st.image_message(st.COLOR_LEFT, img, 5, 2, "rgb8")
        assert np.array_equal(st.decode_image(msg), img)

    def test_depth_sentinel_infinite(self):
        depth = np.array([[0.5, np.inf]], dtype=np.float32)
        msg = st.depth_message(depth, 0, 0)
        back = st.decode_image(msg)
        assert back[0, 0] == np.float32(0.5)
        assert np.isinf(back[0, 1])
        assert msg.payload == depth.astype("<f4").tobytes()

    def test_cloud_round_trip_and_layout(self):
        pc = PointCloud(
            xyz=np.array([[1.0, 2.0, 3.0]], dtype=np.float32),
            rgb=np.array([[10, 20, 30]], dtype=np.uint8),
            label=np.array([7], dtype=np.uint8),
            pixel=np.array([[0, 0]], dtype=np.uint32),
        )
        msg = st.cloud_message(pc, 0, 0)
        assert len(msg.payload) == 4 + 16  # count u32 + 16 bytes per point
        xyz, rgb, label = st.decode_cloud(msg)
        assert np.array_equal(xyz, pc.xyz)
        assert np.array_equal(rgb, pc.rgb)
        assert np.array_equal(label, pc.label)

    def test_pose_round_trip(self):
        p = Pose((0.1, -0.2, 0.3), (0.9238795325112867, 0.0, 0.3826834323650898, 0.0))
        name, back = st.decode_pose(st.pose_message("drill", p, 9, 4))
        assert name == "drill"
        assert back == p

    def test_camera_info_round_trip(self):
        info = {
            "width": 640, "height": 480, "fx": 579.4, "fy": 579.4,
            "cx": 320.0, "cy": 240.0, "near": 0.05, "far": 2.0,
            "fva": 0.785, "baseline": 0.065,
            "right_from_left": {"position": [0.065, 0.0, 0.0],
                                "orientation": [1.0, 0.0, 0.0, 0.0]},
        }
        back = st.decode_camera_info(st.camera_info_message("left", info, 0, 0))
        for key in ("width", "height", "fx", "baseline"):
            assert back[key] == info[key]
        assert back["right_from_left"] == info["right_from_left"]

    def test_force_round_trip(self):
        msg = st.force_message(42, (0.5, -0.25, 0.0), True, 3, 7)
        back = st.decode_force(msg)
        assert back == {"tick": 42, "force": (0.5, -0.25, 0.0), "contact": True, "s_max": 3}

    def test_control_round_trips(self):
        p = Pose((1, 2, 3))
        t, pose, drilling = st.decode_control_drill(st.control_drill_message(5, p, True, 0))
        assert (t, pose, drilling) == (5, p, True)
        t, pose = st.decode_control_camera(st.control_camera_message(6, p, 0))
        assert (t, pose) == (6, p)

    def test_voxel_edit_round_trip(self):
        edit = VoxelEdit(3, np.array([[1, 2, 3]], dtype=np.uint32),
                         np.array([1.0], dtype=np.float32),
                         np.array([2], dtype=np.uint8))
        back = st.decode_voxel_edit(st.voxel_edit_message(edit, 0))
        assert back == edit


class TestPublish:
    def run_records(self, tmp_path, frames=3, render_every=10):
        scene = load_scene_file(small_scene(tmp_path))
        cfg = SimConfig(render_every=render_every, frames=frames, width=64, height=48)
        traj = make_builtin_trajectory("moving_camera", frames, render_every=render_every)
        return list(run_loop(scene, traj, cfg, tmp_path))

    def test_frame_message_count_7_plus_tracked(self, tmp_path):
        records = self.run_records(tmp_path)
        frame = next(r.frame for r in records if r.frame)
        msgs = st.publish(frame)
        assert len(msgs) == 7 + len(frame.poses)
        assert len(frame.poses) == 2  # camera + drill tracked by default
        ids = [m.topic_id for m in msgs]
        assert ids[:7] == [st.COLOR_LEFT, st.COLOR_RIGHT, st.DEPTH, st.SEG,
                           st.POINT_CLOUD, st.CAMERA_INFO, st.CAMERA_INFO]
        assert ids[7:] == [st.POSE, st.POSE]

    def test_user_frequency_stride(self, tmp_path):
        records = self.run_records(tmp_path, frames=9)
        pub = st.Publisher(frame_stride=3)
        published = []
        for r in records:
            published.extend(m for m in pub.publish_record(r)
                             if m.topic_id == st.COLOR_LEFT)
        assert len(published) == 3  # every 3rd of 9 frames

    def test_recording_without_subscribers(self, tmp_path):
        records = self.run_records(tmp_path)
        out = tmp_path / "r.ambr"
        with st.RecordingWriter(out) as w:
            pub = st.Publisher(recorder=w)
            for r in records:
                pub.publish_record(r)
        msgs = st.RecordingReader(out).messages()
        assert sum(1 for m in msgs if m.topic_id == st.COLOR_LEFT) == 3
        assert sum(1 for m in msgs if m.topic_id == st.FORCE) == len(records)

    def test_timestamps_non_decreasing_per_topic(self, tmp_path):
        records = self.run_records(tmp_path)
        pub = st.Publisher()
        seen: dict[int, int] = {}
        for r in records:
            for m in pub.publish_record(r):
                assert m.timestamp_ns >= seen.get(m.topic_id, 0)
                seen[m.topic_id] = m.timestamp_ns


class TestRecordingFile:
    def test_file_layout(self, tmp_path):
        out = tmp_path / "r.ambr"
        with st.RecordingWriter(out) as w:
            w.write(make_message())
        data = out.read_bytes()
        assert data[:4] == b"AMBR"
        assert data[4] == 1
        assert data[5:9] == b"AMBP"
        assert b"AMBX" in data  # footer present

    def test_record_replay_identical(self, tmp_path):
        msgs = [make_message(ts=i * 1000, payload=bytes([i])) for i in range(100)]
        out = tmp_path / "r.ambr"
        st.record_messages(out, msgs)
        back = list(st.replay(out, speed=0.0))
        assert back == msgs

    def test_record_replay_record_byte_identical(self, tmp_path):
        msgs = [make_message(ts=i * 7, payload=bytes([i % 251])) for i in range(50)]
        a = tmp_path / "a.ambr"
        b = tmp_path / "b.ambr"
        st.record_messages(a, msgs)
        st.record_messages(b, st.replay(a, speed=0.0))
        assert a.read_bytes() == b.read_bytes()

    def test_replay_without_footer(self, tmp_path):
        out = tmp_path / "r.ambr"
        w = st.RecordingWriter(out)
        w.write(make_message())
        w.close(footer=False)
        msgs = st.RecordingReader(out).messages()
        assert len(msgs) == 1

    def test_truncated_file_reports_and_replays_prefix(self, tmp_path):
        msgs = [make_message(ts=i) for i in range(10)]
        out = tmp_path / "r.ambr"
        w = st.RecordingWriter(out)
        for m in msgs:
            w.write(m)
        w.close(footer=False)
        data = out.read_bytes()
        cut = tmp_path / "cut.ambr"
        cut.write_bytes(data[:-20])  # cut into the last message
        got = []
        with pytest.raises(st.TruncatedFile):
            for m in st.replay(cut):
                got.append(m)
        assert got == msgs[:9]

    def test_replay_speed_scales_gaps(self, tmp_path):
        import time

        msgs = [make_message(ts=i * 50_000_000) for i in range(5)]  # 50 ms gaps
        out = tmp_path / "r.ambr"
        st.record_messages(out, msgs)
        t0 = time.monotonic()
        list(st.replay(out, speed=2.0))
        elapsed = time.monotonic() - t0
        assert 0.1 - 0.005 <= elapsed <= 0.1 + 0.05  # 4 gaps * 25 ms

    def test_corrupt_magic_raises(self, tmp_path):
        out = tmp_path / "r.ambr"
        out.write_bytes(b"JUNKxxxx")
        with pytest.raises(st.CorruptRecording):
            st.RecordingReader(out)

    def test_footer_index_parsed(self, tmp_path):
        out = tmp_path / "r.ambr"
        with st.RecordingWriter(out) as w:
            w.write(make_message(topic=st.SEG))
            w.write(make_message(topic=st.SEG))
            w.write(make_message(topic=st.FORCE, header={}, payload=b"x" * 22))
        reader = st.RecordingReader(out)
        reader.messages()
        assert reader.footer[st.SEG][0] == 2
        assert reader.footer[st.FORCE][0] == 1


class TestVolumeReconstruction:
    def test_edits_rebuild_final_volume(self, tmp_path):
        n = 32
        launch = write_sim_scene(tmp_path, np.ones((n, n, n), dtype=np.uint8),
                                 spacing=1e-3, drill_pose=(0.0, 0.0, 0.03))
        scene = load_scene_file(launch)
        from drillsim.simloop import Trajectory, TrajectorySample

        traj = Trajectory([
            TrajectorySample(0.0, None, Pose((0.0, 0.0, 0.03)), True),
            TrajectorySample(0.3, None, Pose((0.0, 0.0, 0.005)), True),
        ])
        cfg = SimConfig(render_every=100, ticks=300, width=64, height=48)
        sim = Simulation(scene, cfg, tmp_path)
        initial = sim.volume.copy()
        out = tmp_path / "run.ambr"
        with st.RecordingWriter(out) as w:
            pub = st.Publisher(recorder=w)
            for r in run_loop(scene, traj, cfg, tmp_path, sim=sim):
                pub.publish_record(r)
        rebuilt = st.reconstruct_volume(initial, st.RecordingReader(out).messages())
        assert np.array_equal(rebuilt.label, sim.volume.label)
        assert np.array_equal(rebuilt.intensity, sim.volume.intensity)
