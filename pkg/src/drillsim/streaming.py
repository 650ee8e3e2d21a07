"""Topic-based telemetry: bit-exact wire framing, per-topic payload codecs,
lossless recording, and deterministic replay.

Message frame (all integers little-endian):
    magic "AMBP" | u8 version=1 | u8 topic_id | u16 reserved=0 |
    u64 timestamp_ns | u32 header_len | u32 payload_len |
    header (canonical JSON, UTF-8) | payload

Recording file: magic "AMBR" | u8 version=1 | framed messages... |
optional footer: magic "AMBX" | u32 n_entries | n * {u8 topic_id,
u32 count, u64 first_offset}.  The footer is an index optimization;
replay never needs it.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .camera import DEPTH_SENTINEL
from .pose import Pose
from .volume import VoxelEdit

MESSAGE_MAGIC = b"AMBP"
RECORDING_MAGIC = b"AMBR"
FOOTER_MAGIC = b"AMBX"
WIRE_VERSION = 1

_HEAD = struct.Struct("<4sBBHQII")
_FOOTER_HEAD = struct.Struct("<4sI")
_FOOTER_ENTRY = struct.Struct("<BIQ")

# topic ids
COLOR_LEFT = 1
COLOR_RIGHT = 2
DEPTH = 3
SEG = 4
POINT_CLOUD = 5
POSE = 6
CAMERA_INFO = 7
VOXEL_EDIT = 8
FORCE = 9
CONTROL_DRILL = 16
CONTROL_CAMERA = 17

TOPIC_NAMES = {
    COLOR_LEFT: "color_left",
    COLOR_RIGHT: "color_right",
    DEPTH: "depth",
    SEG: "seg",
    POINT_CLOUD: "point_cloud",
    POSE: "pose",
    CAMERA_INFO: "camera_info",
    VOXEL_EDIT: "voxel_edit",
    FORCE: "force",
    CONTROL_DRILL: "control_drill",
    CONTROL_CAMERA: "control_camera",
}
TOPIC_IDS = {v: k for k, v in TOPIC_NAMES.items()}

_CLOUD_DTYPE = np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3), ("label", "u1")])
_POSE_STRUCT = struct.Struct("<7d")
_CAMINFO_STRUCT = struct.Struct("<II8d7d")
_FORCE_STRUCT = struct.Struct("<Q3fBB")
_CONTROL_DRILL_STRUCT = struct.Struct("<Q7dB")
_CONTROL_CAMERA_STRUCT = struct.Struct("<Q7d")


class StreamingError(Exception):
    pass


class CorruptRecording(StreamingError):
    def __init__(self, offset: int, detail: str = ""):
        self.offset = offset
        super().__init__(f"corrupt recording at byte {offset}" + (f": {detail}" if detail else ""))


class TruncatedFile(StreamingError):
    def __init__(self, offset: int):
        self.offset = offset
        super().__init__(f"file truncated mid-message at byte {offset}")


@dataclass
class TopicMessage:
    topic_id: int
    timestamp_ns: int
    header: dict = field(default_factory=dict)
    payload: bytes = b""

    def __eq__(self, other):
        return (
            isinstance(other, TopicMessage)
            and self.topic_id == other.topic_id
            and self.timestamp_ns == other.timestamp_ns
            and self.header == other.header
            and self.payload == other.payload
        )


def encode_message(msg: TopicMessage) -> bytes:
    header = json.dumps(msg.header, sort_keys=True, separators=(",", ":")).encode()
    head = _HEAD.pack(
        MESSAGE_MAGIC, WIRE_VERSION, msg.topic_id, 0,
        msg.timestamp_ns, len(header), len(msg.payload),
    )
    return head + header + msg.payload


def decode_message(buf, offset: int = 0) -> tuple[TopicMessage, int]:
    """Decode one frame at `offset`; raises TruncatedFile / CorruptRecording."""
    view = memoryview(buf)
    if offset + _HEAD.size > len(view):
        raise TruncatedFile(offset)
    magic, version, topic_id, _res, ts, hlen, plen = _HEAD.unpack_from(view, offset)
    if magic != MESSAGE_MAGIC:
        raise CorruptRecording(offset, f"bad magic {bytes(magic)!r}")
    if version != WIRE_VERSION:
        raise CorruptRecording(offset, f"unsupported version {version}")
    end = offset + _HEAD.size + hlen + plen
    if end > len(view):
        raise TruncatedFile(offset)
    header = json.loads(bytes(view[offset + _HEAD.size: offset + _HEAD.size + hlen]))
    payload = bytes(view[offset + _HEAD.size + hlen: end])
    return TopicMessage(topic_id, ts, header, payload), end


# ---------------------------------------------------------------------------
# topic payload codecs


def image_message(topic_id: int, arr: np.ndarray, timestamp_ns: int, frame_id: int,
                  encoding: str) -> TopicMessage:
    h, w = arr.shape[:2]
    return TopicMessage(
        topic_id, timestamp_ns,
        {"w": w, "h": h, "encoding": encoding, "frame_id": frame_id},
        np.ascontiguousarray(arr).tobytes(),
    )


def decode_image(msg: TopicMessage) -> np.ndarray:
    w, h = msg.header["w"], msg.header["h"]
    enc = msg.header["encoding"]
    if enc == "rgb8":
        return np.frombuffer(msg.payload, dtype=np.uint8).reshape(h, w, 3)
    if enc == "label8":
        return np.frombuffer(msg.payload, dtype=np.uint8).reshape(h, w)
    if enc == "depth32f":
        return np.frombuffer(msg.payload, dtype="<f4").reshape(h, w)
    raise StreamingError(f"unknown image encoding {enc!r}")


def depth_message(depth_m: np.ndarray, timestamp_ns: int, frame_id: int) -> TopicMessage:
    data = np.where(np.isfinite(depth_m), depth_m, DEPTH_SENTINEL).astype("<f4")
    return image_message(DEPTH, data, timestamp_ns, frame_id, "depth32f")


def cloud_message(cloud, timestamp_ns: int, frame_id: int) -> TopicMessage:
    rec = np.empty(cloud.count, dtype=_CLOUD_DTYPE)
    rec["xyz"] = cloud.xyz
    rec["rgb"] = cloud.rgb
    rec["label"] = cloud.label
    payload = struct.pack("<I", cloud.count) + rec.tobytes()
    return TopicMessage(POINT_CLOUD, timestamp_ns,
                        {"count": cloud.count, "frame_id": frame_id}, payload)


def decode_cloud(msg: TopicMessage):
    (count,) = struct.unpack_from("<I", msg.payload, 0)
    rec = np.frombuffer(msg.payload, dtype=_CLOUD_DTYPE, count=count, offset=4)
    return rec["xyz"].copy(), rec["rgb"].copy(), rec["label"].copy()


def pose_message(name: str, pose: Pose, timestamp_ns: int, frame_id: int | None) -> TopicMessage:
    header = {"object": name}
    if frame_id is not None:
        header["frame_id"] = frame_id
    payload = _POSE_STRUCT.pack(*pose.position, *pose.orientation)
    return TopicMessage(POSE, timestamp_ns, header, payload)


def decode_pose(msg: TopicMessage) -> tuple[str, Pose]:
    v = _POSE_STRUCT.unpack(msg.payload)
    return msg.header["object"], Pose((v[0], v[1], v[2]), (v[3], v[4], v[5], v[6]))


def camera_info_message(which: str, info: dict, timestamp_ns: int, frame_id: int) -> TopicMessage:
    rfl = info["right_from_left"]
    payload = _CAMINFO_STRUCT.pack(
        info["width"], info["height"],
        info["fx"], info["fy"], info["cx"], info["cy"],
        info["near"], info["far"], info["fva"], info["baseline"],
        *rfl["position"], *rfl["orientation"],
    )
    return TopicMessage(CAMERA_INFO, timestamp_ns,
                        {"camera": which, "frame_id": frame_id}, payload)


def decode_camera_info(msg: TopicMessage) -> dict:
    v = _CAMINFO_STRUCT.unpack(msg.payload)
    return {
        "camera": msg.header["camera"],
        "width": v[0], "height": v[1],
        "fx": v[2], "fy": v[3], "cx": v[4], "cy": v[5],
        "near": v[6], "far": v[7], "fva": v[8], "baseline": v[9],
        "right_from_left": {"position": list(v[10:13]), "orientation": list(v[13:17])},
    }


def voxel_edit_message(edit: VoxelEdit, timestamp_ns: int) -> TopicMessage:
    return TopicMessage(VOXEL_EDIT, timestamp_ns, {"tick": edit.tick, "count": edit.count},
                        edit.encode())


def decode_voxel_edit(msg: TopicMessage) -> VoxelEdit:
    return VoxelEdit.decode(msg.payload)


def force_message(tick: int, force, contact: bool, s_max: int,
                  timestamp_ns: int) -> TopicMessage:
    payload = _FORCE_STRUCT.pack(tick, float(force[0]), float(force[1]), float(force[2]),
                                 1 if contact else 0, s_max)
    return TopicMessage(FORCE, timestamp_ns, {}, payload)


def decode_force(msg: TopicMessage) -> dict:
    tick, fx, fy, fz, contact, s_max = _FORCE_STRUCT.unpack(msg.payload)
    return {"tick": tick, "force": (fx, fy, fz), "contact": bool(contact), "s_max": s_max}


def control_drill_message(tick_or_time: int, pose: Pose, drilling_enabled: bool,
                          timestamp_ns: int) -> TopicMessage:
    payload = _CONTROL_DRILL_STRUCT.pack(tick_or_time, *pose.position, *pose.orientation,
                                         1 if drilling_enabled else 0)
    return TopicMessage(CONTROL_DRILL, timestamp_ns, {}, payload)


def decode_control_drill(msg: TopicMessage) -> tuple[int, Pose, bool]:
    v = _CONTROL_DRILL_STRUCT.unpack(msg.payload)
    return v[0], Pose((v[1], v[2], v[3]), (v[4], v[5], v[6], v[7])), bool(v[8])


def control_camera_message(tick_or_time: int, pose: Pose, timestamp_ns: int) -> TopicMessage:
    payload = _CONTROL_CAMERA_STRUCT.pack(tick_or_time, *pose.position, *pose.orientation)
    return TopicMessage(CONTROL_CAMERA, timestamp_ns, {}, payload)


def decode_control_camera(msg: TopicMessage) -> tuple[int, Pose]:
    v = _CONTROL_CAMERA_STRUCT.unpack(msg.payload)
    return v[0], Pose((v[1], v[2], v[3]), (v[4], v[5], v[6], v[7]))


# ---------------------------------------------------------------------------
# publication


def frame_messages(bundle) -> list[TopicMessage]:
    """All topic messages of one FrameBundle (stereo color, depth, seg,
    cloud, camera-info for both cameras, one pose per tracked object)."""
    ts = bundle.timestamp_ns
    fid = bundle.frame_id
    msgs = [
        image_message(COLOR_LEFT, bundle.left.color, ts, fid, "rgb8"),
        image_message(COLOR_RIGHT, bundle.right.color, ts, fid, "rgb8"),
        depth_message(bundle.depth_m, ts, fid),
        image_message(SEG, bundle.left.seg, ts, fid, "label8"),
        cloud_message(bundle.cloud, ts, fid),
        camera_info_message("left", bundle.camera_info["left"], ts, fid),
        camera_info_message("right", bundle.camera_info["right"], ts, fid),
    ]
    for name, pose in bundle.poses.items():
        msgs.append(pose_message(name, pose, ts, fid))
    return msgs


def tick_messages(record, pose_rate: str = "render") -> list[TopicMessage]:
    """Physics-rate messages of one TickRecord (edits, force, optionally poses)."""
    msgs = []
    if record.edit is not None and record.edit.count > 0:
        msgs.append(voxel_edit_message(record.edit, record.timestamp_ns))
    msgs.append(force_message(record.tick, record.force, record.contact,
                              record.s_max, record.timestamp_ns))
    if pose_rate == "physics":
        for name, pose in record.poses.items():
            msgs.append(pose_message(name, pose, record.timestamp_ns, None))
    return msgs


def publish(obj) -> list[TopicMessage]:
    """Messages for one FrameBundle or one TickRecord."""
    from .simloop import FrameBundle

    if isinstance(obj, FrameBundle):
        return frame_messages(obj)
    return tick_messages(obj)


class Publisher:
    """Fans TickRecords out as topic messages.

    The recording sink is lossless; live sinks (the server) may drop under
    back-pressure.  `frame_stride` publishes every n-th FrameBundle (the
    user-frequency decimation).
    """

    def __init__(self, frame_stride: int = 1, pose_rate: str = "render",
                 recorder=None, sinks: list | None = None):
        self.frame_stride = max(1, frame_stride)
        self.pose_rate = pose_rate
        self.recorder = recorder
        self.sinks = sinks or []
        self._frame_seen = 0

    def publish_record(self, record) -> list[TopicMessage]:
        msgs = tick_messages(record, self.pose_rate)
        if record.frame is not None:
            self._frame_seen += 1
            if (self._frame_seen - 1) % self.frame_stride == 0:
                msgs.extend(frame_messages(record.frame))
        for m in msgs:
            if self.recorder is not None:
                self.recorder.write(m)
            for sink in self.sinks:
                sink.offer(m)
        return msgs


# ---------------------------------------------------------------------------
# recording & replay


class RecordingWriter:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._fh.write(RECORDING_MAGIC + bytes([WIRE_VERSION]))
        self._index: dict[int, list] = {}

    def write(self, msg: TopicMessage):
        offset = self._fh.tell()
        self._fh.write(encode_message(msg))
        ent = self._index.get(msg.topic_id)
        if ent is None:
            self._index[msg.topic_id] = [1, offset]
        else:
            ent[0] += 1

    def close(self, footer: bool = True):
        if self._fh.closed:
            return
        if footer:
            self._fh.write(_FOOTER_HEAD.pack(FOOTER_MAGIC, len(self._index)))
            for topic_id in sorted(self._index):
                count, first = self._index[topic_id]
                self._fh.write(_FOOTER_ENTRY.pack(topic_id, count, first))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class RecordingReader:
    """Sequential reader; tolerates a missing footer and reports truncation."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.truncated = False
        data = self.path.read_bytes()
        if data[:4] != RECORDING_MAGIC:
            raise CorruptRecording(0, "not a recording file")
        if data[4] != WIRE_VERSION:
            raise CorruptRecording(4, f"unsupported version {data[4]}")
        self._data = data
        self.footer: dict[int, tuple[int, int]] | None = None  # filled by messages()

    def messages(self) -> list[TopicMessage]:
        out = []
        offset = 5
        data = self._data
        while offset < len(data):
            if data[offset: offset + 4] == FOOTER_MAGIC:
                try:
                    (_, n) = _FOOTER_HEAD.unpack_from(data, offset)
                    entries = {}
                    pos = offset + _FOOTER_HEAD.size
                    for _ in range(n):
                        tid, count, first = _FOOTER_ENTRY.unpack_from(data, pos)
                        entries[tid] = (count, first)
                        pos += _FOOTER_ENTRY.size
                    self.footer = entries
                except struct.error:
                    self.truncated = True
                break
            try:
                msg, offset = decode_message(data, offset)
            except TruncatedFile:
                self.truncated = True
                break
            out.append(msg)
        return out

    def by_topic(self, topic_id: int) -> list[TopicMessage]:
        return [m for m in self.messages() if m.topic_id == topic_id]


def record_messages(path: str | Path, messages: Iterable[TopicMessage]):
    with RecordingWriter(path) as w:
        for m in messages:
            w.write(m)


def replay(path: str | Path, speed: float = 0.0) -> Iterator[TopicMessage]:
    """Re-emit recorded messages in order.  speed > 0 scales the original
    inter-message gaps (2.0 = twice as fast); speed = 0 runs flat out.
    A truncated file replays its valid prefix, then raises TruncatedFile
    so the caller can report it."""
    reader = RecordingReader(path)
    msgs = reader.messages()
    prev_ts = None
    for m in msgs:
        if speed > 0.0 and prev_ts is not None and m.timestamp_ns > prev_ts:
            time.sleep((m.timestamp_ns - prev_ts) / 1e9 / speed)
        prev_ts = m.timestamp_ns
        yield m
    if reader.truncated:
        raise TruncatedFile(len(reader._data))


def reconstruct_volume(initial_volume, messages: Iterable[TopicMessage]):
    """Apply every voxel-edit message to a copy of the initial volume."""
    vol = initial_volume.copy()
    for m in messages:
        if m.topic_id == VOXEL_EDIT:
            vol.apply_edit(decode_voxel_edit(m))
    return vol
