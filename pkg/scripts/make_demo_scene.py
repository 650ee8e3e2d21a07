#!/usr/bin/env python3
"""Generate the synthetic demo scene (slice stack + scene files)."""

import argparse
from pathlib import Path

from drillsim.demo import make_demo_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="scenes/demo", help="output directory")
    ap.add_argument("--size", type=int, default=256, help="volume edge, voxels")
    ap.add_argument("--width", type=int, default=640)
    ap.add_argument("--height", type=int, default=480)
    args = ap.parse_args()
    launch = make_demo_scene(Path(args.out), size=args.size,
                             width=args.width, height=args.height)
    print(f"wrote scene; launch file: {launch}")


if __name__ == "__main__":
    main()
