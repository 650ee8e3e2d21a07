// Binary wire protocol adapter: the same logical frames the simulator
// streams over TCP, carried one-per-binary-WebSocket-message.
//
// Frame layout (little-endian): magic "AMBP" | u8 version | u8 topic |
// u16 reserved | u64 timestamp_ns | u32 header_len | u32 payload_len |
// header JSON | payload.

export const TOPICS = {
  colorLeft: 1,
  colorRight: 2,
  depth: 3,
  seg: 4,
  pointCloud: 5,
  pose: 6,
  cameraInfo: 7,
  voxelEdit: 8,
  force: 9,
  controlDrill: 16,
  controlCamera: 17,
} as const;

export const TOPIC_NAMES: Record<number, string> = Object.fromEntries(
  Object.entries(TOPICS).map(([name, id]) => [id, name]),
);

const MAGIC = 0x414d4250; // "AMBP" read big-endian
const HEAD_BYTES = 24;

export interface WireMessage {
  topicId: number;
  timestampNs: bigint;
  header: Record<string, unknown>;
  payload: Uint8Array;
}

export interface PoseValue {
  position: [number, number, number];
  orientation: [number, number, number, number]; // w x y z
}

export function decodeMessage(data: ArrayBuffer | Uint8Array): WireMessage {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  if (bytes.byteLength < HEAD_BYTES) {
    throw new Error(`frame too short: ${bytes.byteLength} bytes`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  if (view.getUint32(0, false) !== MAGIC) {
    throw new Error("bad frame magic");
  }
  const version = view.getUint8(4);
  if (version !== 1) {
    throw new Error(`unsupported wire version ${version}`);
  }
  const topicId = view.getUint8(5);
  const timestampNs = view.getBigUint64(8, true);
  const headerLen = view.getUint32(16, true);
  const payloadLen = view.getUint32(20, true);
  if (bytes.byteLength < HEAD_BYTES + headerLen + payloadLen) {
    throw new Error("truncated frame");
  }
  const headerText = new TextDecoder().decode(
    bytes.subarray(HEAD_BYTES, HEAD_BYTES + headerLen),
  );
  const payload = bytes.subarray(HEAD_BYTES + headerLen, HEAD_BYTES + headerLen + payloadLen);
  return { topicId, timestampNs, header: JSON.parse(headerText), payload };
}

export function encodeMessage(msg: WireMessage): Uint8Array {
  // canonical header bytes: sorted keys, no spaces (matches the recorder)
  const sorted = Object.fromEntries(
    Object.entries(msg.header).sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0)),
  );
  const headerBytes = new TextEncoder().encode(JSON.stringify(sorted));
  const out = new Uint8Array(HEAD_BYTES + headerBytes.length + msg.payload.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, MAGIC, false);
  view.setUint8(4, 1);
  view.setUint8(5, msg.topicId);
  view.setUint16(6, 0, true);
  view.setBigUint64(8, msg.timestampNs, true);
  view.setUint32(16, headerBytes.length, true);
  view.setUint32(20, msg.payload.length, true);
  out.set(headerBytes, HEAD_BYTES);
  out.set(msg.payload, HEAD_BYTES + headerBytes.length);
  return out;
}

// ---------------------------------------------------------------------------
// payload decoders

export interface ImageValue {
  w: number;
  h: number;
  encoding: string;
  frameId: number;
  rgb?: Uint8Array;
  labels?: Uint8Array;
  depth?: Float32Array;
}

export function decodeImage(msg: WireMessage): ImageValue {
  const w = msg.header.w as number;
  const h = msg.header.h as number;
  const encoding = msg.header.encoding as string;
  const frameId = (msg.header.frame_id as number) ?? -1;
  const out: ImageValue = { w, h, encoding, frameId };
  if (encoding === "rgb8") {
    out.rgb = msg.payload.slice();
  } else if (encoding === "label8") {
    out.labels = msg.payload.slice();
  } else if (encoding === "depth32f") {
    const copy = msg.payload.slice();
    out.depth = new Float32Array(copy.buffer, 0, w * h);
  } else {
    throw new Error(`unknown image encoding ${encoding}`);
  }
  return out;
}

export interface CloudValue {
  count: number;
  xyz: Float32Array; // 3 per point
  rgb: Uint8Array; // 3 per point
  label: Uint8Array;
}

export function decodeCloud(msg: WireMessage): CloudValue {
  const view = new DataView(msg.payload.buffer, msg.payload.byteOffset, msg.payload.byteLength);
  const count = view.getUint32(0, true);
  const xyz = new Float32Array(count * 3);
  const rgb = new Uint8Array(count * 3);
  const label = new Uint8Array(count);
  let off = 4;
  for (let i = 0; i < count; i++) {
    xyz[i * 3] = view.getFloat32(off, true);
    xyz[i * 3 + 1] = view.getFloat32(off + 4, true);
    xyz[i * 3 + 2] = view.getFloat32(off + 8, true);
    rgb[i * 3] = view.getUint8(off + 12);
    rgb[i * 3 + 1] = view.getUint8(off + 13);
    rgb[i * 3 + 2] = view.getUint8(off + 14);
    label[i] = view.getUint8(off + 15);
    off += 16;
  }
  return { count, xyz, rgb, label };
}

export function decodePose(msg: WireMessage): { object: string; pose: PoseValue } {
  const view = new DataView(msg.payload.buffer, msg.payload.byteOffset, msg.payload.byteLength);
  const v: number[] = [];
  for (let i = 0; i < 7; i++) v.push(view.getFloat64(i * 8, true));
  return {
    object: String(msg.header.object ?? ""),
    pose: {
      position: [v[0], v[1], v[2]],
      orientation: [v[3], v[4], v[5], v[6]],
    },
  };
}

export interface CameraInfoValue {
  camera: string;
  width: number;
  height: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  near: number;
  far: number;
  fva: number;
  baseline: number;
}

export function decodeCameraInfo(msg: WireMessage): CameraInfoValue {
  const view = new DataView(msg.payload.buffer, msg.payload.byteOffset, msg.payload.byteLength);
  const d = (i: number) => view.getFloat64(8 + i * 8, true);
  return {
    camera: String(msg.header.camera ?? ""),
    width: view.getUint32(0, true),
    height: view.getUint32(4, true),
    fx: d(0),
    fy: d(1),
    cx: d(2),
    cy: d(3),
    near: d(4),
    far: d(5),
    fva: d(6),
    baseline: d(7),
  };
}

export interface ForceValue {
  tick: bigint;
  force: [number, number, number];
  contact: boolean;
  sMax: number;
}

export function decodeForce(msg: WireMessage): ForceValue {
  const view = new DataView(msg.payload.buffer, msg.payload.byteOffset, msg.payload.byteLength);
  return {
    tick: view.getBigUint64(0, true),
    force: [view.getFloat32(8, true), view.getFloat32(12, true), view.getFloat32(16, true)],
    contact: view.getUint8(20) !== 0,
    sMax: view.getUint8(21),
  };
}

export function decodeVoxelEditCount(msg: WireMessage): number {
  const view = new DataView(msg.payload.buffer, msg.payload.byteOffset, msg.payload.byteLength);
  return view.getUint32(8, true); // u64 tick, then u32 count
}

// ---------------------------------------------------------------------------
// control encoders

export function encodeControlDrill(
  t: bigint,
  pose: PoseValue,
  drillingEnabled: boolean,
  timestampNs: bigint = 0n,
): Uint8Array {
  const payload = new Uint8Array(8 + 56 + 1);
  const view = new DataView(payload.buffer);
  view.setBigUint64(0, t, true);
  const vals = [...pose.position, ...pose.orientation];
  vals.forEach((v, i) => view.setFloat64(8 + i * 8, v, true));
  view.setUint8(64, drillingEnabled ? 1 : 0);
  return encodeMessage({
    topicId: TOPICS.controlDrill,
    timestampNs,
    header: {},
    payload,
  });
}

export function encodeControlCamera(
  t: bigint,
  pose: PoseValue,
  timestampNs: bigint = 0n,
): Uint8Array {
  const payload = new Uint8Array(8 + 56);
  const view = new DataView(payload.buffer);
  view.setBigUint64(0, t, true);
  const vals = [...pose.position, ...pose.orientation];
  vals.forEach((v, i) => view.setFloat64(8 + i * 8, v, true));
  return encodeMessage({
    topicId: TOPICS.controlCamera,
    timestampNs,
    header: {},
    payload,
  });
}

export function encodeHello(role: "subscriber" | "controller", topics?: string[]): string {
  const hello: Record<string, unknown> = { role };
  if (topics) hello.topics = topics;
  return JSON.stringify(hello);
}
