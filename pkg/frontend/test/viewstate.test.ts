import { describe, expect, it } from "vitest";

import { SimClient } from "../src/client.js";
import { TOPICS, WireMessage, decodeMessage } from "../src/protocol.js";
import { anaglyphToRgba, depthToRgba, projectCloud, segToRgba } from "../src/render2d.js";
import { CameraPilot, DrillPilot, ViewState } from "../src/viewstate.js";

function msg(topicId: number, timestampNs: bigint): WireMessage {
  return { topicId, timestampNs, header: {}, payload: new Uint8Array() };
}

describe("latest-frame mailbox", () => {
  it("keeps the newest message per topic and drops stale ones", () => {
    const client = new SimClient({ url: "ws://unused" });
    client.accept(msg(TOPICS.seg, 100n));
    client.accept(msg(TOPICS.seg, 300n));
    client.accept(msg(TOPICS.seg, 200n)); // stale: arrived late
    expect(client.latest.get(TOPICS.seg)!.timestampNs).toBe(300n);
    expect(client.staleDropped).toBe(1);
    client.accept(msg(TOPICS.depth, 50n)); // other topics independent
    expect(client.latest.get(TOPICS.depth)!.timestampNs).toBe(50n);
  });
});

describe("view state", () => {
  it("tracks per-topic timestamps monotonically", () => {
    const vs = new ViewState();
    vs.noteMessage(msg(TOPICS.colorLeft, 10n));
    vs.noteMessage(msg(TOPICS.colorLeft, 5n));
    expect(vs.lastTimestamps.get(TOPICS.colorLeft)).toBe(10n);
  });

  it("updates the HUD from force messages", () => {
    const vs = new ViewState();
    const payload = new Uint8Array(22);
    const view = new DataView(payload.buffer);
    view.setBigUint64(0, 7n, true);
    view.setFloat32(8, 3.0, true);
    view.setFloat32(12, 4.0, true);
    view.setFloat32(16, 0.0, true);
    view.setUint8(20, 1);
    view.setUint8(21, 2);
    vs.noteMessage({ topicId: TOPICS.force, timestampNs: 1n, header: {}, payload });
    expect(vs.hud.forceN).toBeCloseTo(5.0, 5);
    expect(vs.hud.contact).toBe(true);
  });
});

describe("drill pilot", () => {
  it("bounds per-event deltas", () => {
    const pilot = new DrillPilot({ position: [0, 0, 0], orientation: [1, 0, 0, 0] });
    pilot.applyDrag(1.0, -1.0); // absurd event, must clamp to 4 mm
    expect(pilot.target.position[0]).toBeCloseTo(0.004, 9);
    expect(pilot.target.position[1]).toBeCloseTo(-0.004, 9);
    pilot.applyWheel(-1.0);
    expect(pilot.target.position[2]).toBeCloseTo(-0.004, 9);
  });

  it("throttles emission to <= 60 Hz and only when dirty", () => {
    const pilot = new DrillPilot();
    expect(pilot.pump(0)).not.toBeNull(); // initial state is dirty
    pilot.applyDrag(1e-3, 0);
    expect(pilot.pump(5)).toBeNull(); // within the 16.7 ms window
    const frame = pilot.pump(20);
    expect(frame).not.toBeNull();
    expect(pilot.pump(40)).toBeNull(); // not dirty anymore
  });

  it("zero-delta intents change nothing", () => {
    const pilot = new DrillPilot({ position: [1, 2, 3], orientation: [1, 0, 0, 0] });
    pilot.applyDrag(0, 0);
    expect(pilot.target.position).toEqual([1, 2, 3]);
  });

  it("encodes the drilling flag", () => {
    const pilot = new DrillPilot();
    pilot.toggleDrilling();
    const frame = pilot.pump(100)!;
    const decoded = decodeMessage(frame);
    expect(decoded.topicId).toBe(TOPICS.controlDrill);
    expect(decoded.payload[64]).toBe(1);
  });

  it("camera pilot shares the contract", () => {
    const cam = new CameraPilot({ position: [0, 0, 0.3], orientation: [1, 0, 0, 0] });
    cam.nudge(0.1, 0, 0);
    const frame = cam.pump(0)!;
    expect(decodeMessage(frame).topicId).toBe(TOPICS.controlCamera);
  });
});

describe("render helpers", () => {
  it("anaglyph is a pure pixel-wise combination", () => {
    const left = new Uint8Array([255, 255, 255, 0, 0, 0]);
    const right = new Uint8Array([0, 0, 0, 255, 255, 255]);
    const out = anaglyphToRgba(2, 1, left, right);
    expect(out[0]).toBe(255); // red from left
    expect(out[1]).toBe(0); // cyan from right
    expect(out[4]).toBe(0);
    expect(out[5]).toBe(255);
  });

  it("depth maps non-finite pixels to the sentinel color", () => {
    const out = depthToRgba(2, 1, new Float32Array([0.05, Infinity]), 0.05, 2.0);
    expect(out[0]).toBe(255); // near = bright
    expect(out[4]).toBe(8); // no-hit = dark blue
    expect(out[6]).toBe(40);
  });

  it("segmentation palette maps 0 to black", () => {
    const out = segToRgba(2, 1, new Uint8Array([0, 32]));
    expect([out[0], out[1], out[2]]).toEqual([0, 0, 0]);
    expect(out[4] + out[5] + out[6]).toBeGreaterThan(0);
  });

  it("cloud projector splats visible points", () => {
    const cloud = {
      count: 2,
      xyz: new Float32Array([0, 0, 0.3, 0.01, 0, 0.3]),
      rgb: new Uint8Array([255, 0, 0, 0, 255, 0]),
      label: new Uint8Array([1, 1]),
    };
    const out = projectCloud(cloud, 64, 48, {
      azimuth: 0, elevation: 0, distance: 0.3, focalPx: 60,
    });
    let lit = 0;
    for (let i = 0; i < out.length; i += 4) {
      if (out[i] + out[i + 1] + out[i + 2] > 0) lit++;
    }
    expect(lit).toBeGreaterThan(0);
  });
});
