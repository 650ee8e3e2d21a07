#!/usr/bin/env python3
"""Record the two standard evaluation sequences (orbiting camera over a
static anatomy, then a fixed camera with active drilling) into recording
files, ready for downstream pose-tracking / depth-estimation work."""

import argparse
import subprocess
import sys
import tempfile
from pathlib import Path

from drillsim.demo import make_demo_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="dataset", help="output directory")
    ap.add_argument("--frames", type=int, default=500)
    ap.add_argument("--size", default="640x480")
    ap.add_argument("--volume", type=int, default=256, help="volume edge, voxels")
    ap.add_argument("--scene", default=None,
                    help="existing launch file (default: generate the demo scene)")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.scene:
        launch = Path(args.scene)
    else:
        scene_dir = out / "scene"
        launch = make_demo_scene(scene_dir, size=args.volume)
        print(f"scene: {launch}")

    for setting in ("moving_camera", "moving_drill"):
        rec = out / f"{setting}.ambr"
        cmd = [sys.executable, "-m", "drillsim", "run", str(launch),
               "--trajectory", setting, "--frames", str(args.frames),
               "--record", str(rec), "--size", args.size, "--force"]
        print("+", " ".join(cmd))
        subprocess.run(cmd, check=True)
        print(f"  -> {rec} ({rec.stat().st_size / 1e6:.0f} MB)")


if __name__ == "__main__":
    main()
