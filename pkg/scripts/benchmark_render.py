#!/usr/bin/env python3
"""Renderer timing: single-frame latency vs thread count on the demo scene.

Targets (engineering, machine-dependent): 640x480 full frame under 250 ms
single-threaded on a 256^3 volume, and >= 3x scaling on 8 threads.  This
box may have fewer cores; the script prints whatever scaling is reachable.
"""

import argparse
import tempfile
import time
from pathlib import Path

import numba

from drillsim.demo import make_demo_scene
from drillsim.haptics import drill_prims
from drillsim.render import (
    RenderScene,
    assemble_point_cloud,
    depth_linearize_pass,
    render_view,
)
from drillsim.scene import load_scene_file
from drillsim.simloop import SimConfig, Simulation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--volume", type=int, default=256)
    ap.add_argument("--size", default="640x480")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    w, h = (int(v) for v in args.size.split("x"))

    tmp = Path(tempfile.mkdtemp(prefix="drillsim-bench-"))
    launch = make_demo_scene(tmp, size=args.volume, width=w, height=h)
    scene = load_scene_file(launch)
    sim = Simulation(scene, SimConfig(width=w, height=h), tmp)
    rscene = RenderScene(volume=sim.volume, prims=drill_prims(sim.drill),
                         light_dir=sim.light_dir)

    render_view(rscene, sim.rig.left)  # compile + warm caches

    max_threads = numba.config.NUMBA_NUM_THREADS
    results = {}
    for threads in sorted({1, 2, 4, 8, max_threads} & set(range(1, max_threads + 1))):
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            fb = render_view(rscene, sim.rig.left, threads=threads)
            n = depth_linearize_pass(fb, sim.rig.left)
            assemble_point_cloud(fb, sim.rig.left, n)
            times.append(time.perf_counter() - t0)
        results[threads] = min(times)
        print(f"{threads} thread(s): {min(times) * 1000:7.1f} ms/frame (best of {args.repeats})")
    if 1 in results:
        base = results[1]
        for t, v in results.items():
            if t != 1:
                print(f"scaling x{base / v:.2f} at {t} threads")
        status = "meets" if base < 0.25 else "misses"
        print(f"single-thread {base * 1000:.0f} ms {status} the 250 ms target "
              f"({args.size}, {args.volume}^3)")


if __name__ == "__main__":
    main()
