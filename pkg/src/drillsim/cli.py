"""Command-line entry points: run/record simulations, serve the live
endpoint, convert volumes, replay recordings, evaluate estimates."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import evalkit
from . import streaming as st
from .nrrd_io import UnsupportedEncoding, read_nrrd
from .scene import SceneError, load_scene, parse_launch, validate_scene
from .server import BindFailure, SimServer
from .simloop import (
    ControlStream,
    SimConfig,
    Simulation,
    load_trajectory,
    make_builtin_trajectory,
    run_loop,
)
from .volume import VolumeSource, load_volume, save_slices

BUILTIN_TRAJECTORIES = ("moving_camera", "moving_drill")

# deterministic display palette for converted label volumes (id 0 = black)
_PALETTE_SEED = [
    "#E8D8B0", "#C04040", "#4040D0", "#40C040", "#C0C040", "#40C0C0",
    "#C040C0", "#D08020", "#2080D0", "#80D020",
]


def _palette_color(label_id: int) -> str:
    if label_id - 1 < len(_PALETTE_SEED):
        return _PALETTE_SEED[label_id - 1]
    # stable spread over the color cube for high ids
    r = (label_id * 97) % 200 + 40
    g = (label_id * 57) % 200 + 40
    b = (label_id * 17) % 200 + 40
    return f"#{r:02X}{g:02X}{b:02X}"


def _parse_size(text: str) -> tuple[int, int]:
    w, _, h = text.partition("x")
    return int(w), int(h)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drillsim",
        description="Volumetric drilling simulator and synthetic vision-data generator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation from a launch file")
    run.add_argument("launch", help="launch file path")
    run.add_argument("--trajectory",
                     help="builtin name (moving_camera, moving_drill) or trajectory file")
    run.add_argument("--frames", type=int, default=500, help="frames to record")
    run.add_argument("--record", help="write a recording to this path")
    run.add_argument("--force", action="store_true", help="overwrite an existing recording")
    run.add_argument("--serve", metavar="ADDR", help="serve live on HOST:PORT instead")
    run.add_argument("--baseline", type=float, default=0.065, help="stereo baseline, meters")
    run.add_argument("--size", type=_parse_size, default=None, metavar="WxH",
                     help="image size, e.g. 640x480")
    run.add_argument("--seed", type=int, default=0, help="run seed (recorded in config)")
    run.add_argument("--render-every", type=int, default=33,
                     help="physics ticks per rendered frame")
    run.add_argument("--physics-hz", type=int, default=1000, help="physics tick rate")
    run.add_argument("--publish-stride", type=int, default=1,
                     help="publish every n-th frame (user frequency)")
    run.add_argument("--pose-rate", choices=("render", "physics"), default="render",
                     help="pose topic rate")
    run.add_argument("--threads", type=int, default=None, help="renderer thread count")

    serve = sub.add_parser("serve", help="shorthand for run --serve")
    serve.add_argument("launch")
    serve.add_argument("address", metavar="ADDR", help="HOST:PORT to bind")
    serve.add_argument("--size", type=_parse_size, default=None, metavar="WxH")
    serve.add_argument("--baseline", type=float, default=0.065)
    serve.add_argument("--render-every", type=int, default=33)
    serve.add_argument("--physics-hz", type=int, default=1000)
    serve.add_argument("--threads", type=int, default=None)
    serve.add_argument("--record", help="also record everything published")
    serve.add_argument("--force", action="store_true")

    convert = sub.add_parser("convert", help="convert an NRRD/stack volume to a slice stack")
    convert.add_argument("input", help="NRRD file or slice-stack descriptor (yaml)")
    convert.add_argument("--out", required=True, help="output directory")
    convert.add_argument("--prefix", default="slices/sl_", help="slice path prefix")
    convert.add_argument("--spacing", type=float, default=None,
                         help="voxel spacing override, meters")
    convert.add_argument("--format", choices=("png", "jpeg"), default="png")

    replay = sub.add_parser("replay", help="re-emit a recording")
    replay.add_argument("recording")
    replay.add_argument("--speed", type=float, default=0.0,
                        help="0 = flat out, 1 = original timing, 2 = twice as fast")
    replay.add_argument("--serve", metavar="ADDR", help="serve replayed topics on HOST:PORT")

    ev = sub.add_parser("eval", help="score estimates against a ground-truth recording")
    ev.add_argument("recording")
    ev.add_argument("estimates", help="pose text file, or a directory of <frame>.npy depth maps")
    ev.add_argument("--mode", choices=("pose", "depth"), default="pose")
    ev.add_argument("--object", default=None, help="tracked object name (pose mode)")
    ev.add_argument("--alignment", choices=("none", "first_frame"), default="none")
    ev.add_argument("--summary", default=None, help="write machine-readable JSON here")

    return parser


def _load_scene_or_die(launch_path: str):
    try:
        scene = load_scene(parse_launch(launch_path))
    except SceneError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        raise SystemExit(1)
    diags = [d for d in validate_scene(scene) if d.severity == "error"]
    if diags:
        for d in diags:
            print(f"error [{d.object_name}]: {d.message}", file=sys.stderr)
        raise SystemExit(1)
    for w in scene.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return scene


def _open_recorder(path: str | None, force: bool):
    if path is None:
        return None
    p = Path(path)
    if p.exists() and not force:
        print(f"refusing to overwrite {p} (use --force)", file=sys.stderr)
        raise SystemExit(1)
    return st.RecordingWriter(p)


def cmd_run(args) -> int:
    if args.serve and args.trajectory:
        print("--serve and --trajectory conflict; pick one", file=sys.stderr)
        return 1
    if not args.serve and not args.trajectory:
        print("need --trajectory NAME|FILE or --serve ADDR", file=sys.stderr)
        return 1
    scene = _load_scene_or_die(args.launch)
    size = args.size or (None, None)
    config = SimConfig(
        physics_hz=args.physics_hz,
        render_every=args.render_every,
        width=size[0],
        height=size[1],
        baseline=args.baseline,
        frames=args.frames if args.trajectory else None,
        seed=args.seed,
        threads=args.threads,
        pose_rate=args.pose_rate,
        publish_every=args.publish_stride,
    )
    base_dir = Path(args.launch).parent
    recorder = _open_recorder(args.record, args.force)
    try:
        if args.serve:
            return _serve_loop(scene, config, base_dir, args.serve, recorder)
        if args.trajectory in BUILTIN_TRAJECTORIES:
            traj = make_builtin_trajectory(args.trajectory, args.frames,
                                           args.render_every, args.physics_hz)
        else:
            traj = load_trajectory(args.trajectory)
        pub = st.Publisher(frame_stride=args.publish_stride, pose_rate=args.pose_rate,
                           recorder=recorder)
        frames = 0
        for rec in run_loop(scene, traj, config, base_dir):
            pub.publish_record(rec)
            if rec.frame is not None:
                frames += 1
        print(f"done: {frames} frames", file=sys.stderr)
        return 0
    except (OSError, BindFailure, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    finally:
        if recorder is not None:
            recorder.close()


def _serve_loop(scene, config, base_dir, address, recorder) -> int:
    host, _, port = address.rpartition(":")
    control = ControlStream()
    try:
        server = SimServer(host or "127.0.0.1", int(port), control).start()
    except BindFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    pub = st.Publisher(frame_stride=config.publish_every, pose_rate=config.pose_rate,
                       recorder=recorder, sinks=[server])
    print(f"serving on {server.address[0]}:{server.address[1]}", file=sys.stderr)
    try:
        for rec in run_loop(scene, control, config, base_dir, realtime=True):
            pub.publish_record(rec)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def cmd_serve(args) -> int:
    args.trajectory = None
    args.serve = args.address
    args.frames = None
    args.seed = 0
    args.publish_stride = 1
    args.pose_rate = "render"
    return cmd_run(args)


def cmd_convert(args) -> int:
    out = Path(args.out)
    inp = Path(args.input)
    try:
        if inp.suffix.lower() == ".nrrd":
            labels, spacing = read_nrrd(inp)
            if args.spacing is not None:
                spacing = (args.spacing,) * 3
            spacing = spacing or (1e-3, 1e-3, 1e-3)
            ids = sorted(int(v) for v in np.unique(labels) if v != 0)
            label_map = {_palette_color(i): (i, f"label_{i}") for i in ids}
        else:
            doc = yaml.safe_load(inp.read_text())
            src_in = VolumeSource(
                prefix=doc["prefix"], count=int(doc["count"]),
                fmt=doc.get("format", "png"),
                spacing=(doc["spacing"]["x"], doc["spacing"]["y"], doc["spacing"]["z"]),
                label_map={h: (v["id"], v.get("name", "")) for h, v in
                           (doc.get("label_map") or {}).items()},
                background=doc.get("background", "#000000"),
            )
            vol = load_volume(src_in, inp.parent)
            labels = vol.label3d
            spacing = vol.spacing
            label_map = {h: (i, n) for h, (i, n) in src_in.label_map.items()}
    except (UnsupportedEncoding, KeyError, OSError) as exc:
        print(f"convert failed: {exc}", file=sys.stderr)
        return 1
    source = VolumeSource(prefix=args.prefix, count=labels.shape[0], fmt=args.format,
                          spacing=tuple(spacing), label_map=label_map)
    out.mkdir(parents=True, exist_ok=True)
    save_slices(labels, source, out)
    descriptor = {
        "prefix": source.prefix,
        "count": source.count,
        "format": source.fmt,
        "spacing": {"x": source.spacing[0], "y": source.spacing[1], "z": source.spacing[2]},
        "label_map": {h: {"id": i, "name": n} for h, (i, n) in label_map.items()},
        "background": "#000000",
    }
    (out / "volume.yaml").write_text(yaml.safe_dump(descriptor))
    print(f"wrote {source.count} slices + descriptor to {out}", file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    server = None
    if args.serve:
        host, _, port = args.serve.rpartition(":")
        try:
            server = SimServer(host or "127.0.0.1", int(port)).start()
        except BindFailure as exc:
            print(f"runtime failure: {exc}", file=sys.stderr)
            return 2
        print(f"replaying on {server.address[0]}:{server.address[1]}", file=sys.stderr)
    count = 0
    truncated = False
    try:
        for msg in st.replay(args.recording, speed=args.speed):
            count += 1
            if server is not None:
                server.offer(msg)
    except st.TruncatedFile as exc:
        truncated = True
        print(f"truncated recording: {exc}", file=sys.stderr)
    except st.CorruptRecording as exc:
        print(f"corrupt recording: {exc}", file=sys.stderr)
        return 1
    finally:
        if server is not None:
            server.stop()
    print(f"replayed {count} messages" + (" (valid prefix)" if truncated else ""),
          file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    try:
        if args.mode == "pose":
            obj = args.object
            if obj is None:
                # default to the camera: the first camera_info-accompanied pose
                poses = {}
                reader = st.RecordingReader(args.recording)
                names = [st.decode_pose(m)[0] for m in reader.messages()
                         if m.topic_id == st.POSE]
                if not names:
                    raise evalkit.NoMatchedFrames("recording has no pose topic")
                obj = names[0]
            gt = evalkit.recording_poses(args.recording, obj)
            est = evalkit.load_estimates(args.estimates)
            report = evalkit.pose_error(gt, est, args.alignment)
            print(evalkit.format_report(report))
            summary = report.summary()
        else:
            gt = evalkit.recording_depths(args.recording)
            est = {}
            for f in sorted(Path(args.estimates).glob("*.npy")):
                est[int(f.stem)] = np.load(f)
            report = evalkit.depth_error(gt, est)
            print(f"Depth L1 error: {report.l1_mean_mm:.2f} mm "
                  f"(coverage {report.coverage:.1%}, {len(report.per_frame)} frames)")
            summary = report.summary()
    except (evalkit.NoMatchedFrames, evalkit.ResolutionMismatch, st.StreamingError,
            OSError) as exc:
        print(f"eval failed: {exc}", file=sys.stderr)
        return 1
    if args.summary:
        evalkit.write_summary(args.summary, summary)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "serve": cmd_serve,
        "convert": cmd_convert,
        "replay": cmd_replay,
        "eval": cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
