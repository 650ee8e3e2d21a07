import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  TOPICS,
  decodeCameraInfo,
  decodeCloud,
  decodeForce,
  decodeImage,
  decodeMessage,
  decodePose,
  encodeControlCamera,
  encodeControlDrill,
  encodeMessage,
} from "../src/protocol.js";

const FIX = join(__dirname, "fixtures");
const meta = JSON.parse(readFileSync(join(FIX, "meta.json"), "utf-8"));

function load(name: string): Uint8Array {
  return new Uint8Array(readFileSync(join(FIX, name)));
}

describe("wire frame decoding (against simulator-encoded fixtures)", () => {
  it("decodes an rgb8 image message", () => {
    const msg = decodeMessage(load("image_msg.bin"));
    expect(msg.topicId).toBe(TOPICS.colorLeft);
    expect(msg.timestampNs).toBe(BigInt(meta.image.timestamp_ns));
    const img = decodeImage(msg);
    expect(img.w).toBe(meta.image.w);
    expect(img.h).toBe(meta.image.h);
    expect(img.frameId).toBe(meta.image.frame_id);
    expect([...img.rgb!.slice(0, 3)]).toEqual(meta.image.first_pixel);
    expect([...img.rgb!.slice(-3)]).toEqual(meta.image.last_pixel);
  });

  it("decodes depth with the +infinity no-hit sentinel", () => {
    const img = decodeImage(decodeMessage(load("depth_msg.bin")));
    const want = meta.depth.values;
    for (let i = 0; i < want.length; i++) {
      if (want[i] === null) {
        expect(Number.isFinite(img.depth![i])).toBe(false);
      } else {
        expect(img.depth![i]).toBeCloseTo(want[i], 6);
      }
    }
  });

  it("decodes segmentation labels", () => {
    const img = decodeImage(decodeMessage(load("seg_msg.bin")));
    expect([...img.labels!]).toEqual(meta.seg.labels);
  });

  it("decodes the 16-byte-per-point cloud layout", () => {
    const cloud = decodeCloud(decodeMessage(load("cloud_msg.bin")));
    expect(cloud.count).toBe(meta.cloud.count);
    expect(cloud.xyz[0]).toBeCloseTo(meta.cloud.xyz0[0], 6);
    expect(cloud.xyz[1]).toBeCloseTo(meta.cloud.xyz0[1], 6);
    expect(cloud.xyz[2]).toBeCloseTo(meta.cloud.xyz0[2], 6);
    expect([...cloud.rgb.slice(3, 6)]).toEqual(meta.cloud.rgb1);
    expect([...cloud.label]).toEqual(meta.cloud.labels);
  });

  it("decodes object poses", () => {
    const { object, pose } = decodePose(decodeMessage(load("pose_msg.bin")));
    expect(object).toBe(meta.pose.object);
    expect(pose.position).toEqual(meta.pose.position);
    expect(pose.orientation).toEqual(meta.pose.orientation);
  });

  it("decodes camera info", () => {
    const info = decodeCameraInfo(decodeMessage(load("caminfo_msg.bin")));
    expect(info.width).toBe(meta.caminfo.width);
    expect(info.fx).toBeCloseTo(meta.caminfo.fx, 9);
    expect(info.baseline).toBeCloseTo(meta.caminfo.baseline, 9);
    expect(info.near).toBeCloseTo(meta.caminfo.near, 9);
  });

  it("decodes force/contact telemetry", () => {
    const f = decodeForce(decodeMessage(load("force_msg.bin")));
    expect(Number(f.tick)).toBe(meta.force.tick);
    expect(f.force[0]).toBeCloseTo(meta.force.force[0], 6);
    expect(f.contact).toBe(meta.force.contact);
    expect(f.sMax).toBe(meta.force.s_max);
  });

  it("rejects bad magic and truncated frames", () => {
    const good = load("image_msg.bin");
    const bad = good.slice();
    bad[0] = 0x58;
    expect(() => decodeMessage(bad)).toThrow(/magic/);
    expect(() => decodeMessage(good.slice(0, 10))).toThrow(/short/);
  });
});

describe("control encoding (byte-exact vs simulator encoding)", () => {
  it("drill control frames match the reference bytes", () => {
    const m = meta.control_drill;
    const got = encodeControlDrill(
      BigInt(m.t),
      { position: m.position, orientation: m.orientation },
      m.drilling,
    );
    expect([...got]).toEqual([...load("control_drill_ref.bin")]);
  });

  it("camera control frames match the reference bytes", () => {
    const m = meta.control_camera;
    const got = encodeControlCamera(BigInt(m.t), {
      position: m.position,
      orientation: [1, 0, 0, 0],
    });
    expect([...got]).toEqual([...load("control_camera_ref.bin")]);
  });

  it("encode/decode round trip", () => {
    const msg = {
      topicId: TOPICS.seg,
      timestampNs: 123456789n,
      header: { b: 2, a: 1 },
      payload: new Uint8Array([1, 2, 3, 255]),
    };
    const back = decodeMessage(encodeMessage(msg));
    expect(back.topicId).toBe(msg.topicId);
    expect(back.timestampNs).toBe(msg.timestampNs);
    expect(back.header).toEqual(msg.header);
    expect([...back.payload]).toEqual([...msg.payload]);
  });
});
