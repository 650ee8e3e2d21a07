// UI state: which plane is displayed, connection status, drill HUD, and
// the pointer-to-pose integration that turns drags and wheel moves into
// absolute drill/camera targets (bounded per event, emitted at <= 60 Hz).

import {
  PoseValue,
  TOPICS,
  WireMessage,
  decodeForce,
  encodeControlCamera,
  encodeControlDrill,
} from "./protocol.js";

export type ViewKind = "left" | "right" | "anaglyph" | "depth" | "seg" | "cloud";

export interface Hud {
  forceN: number;
  contact: boolean;
  drillingOn: boolean;
}

export class ViewState {
  active: ViewKind = "left";
  connection = "closed";
  lastTimestamps = new Map<number, bigint>();
  hud: Hud = { forceN: 0, contact: false, drillingOn: false };

  noteMessage(msg: WireMessage): void {
    const prev = this.lastTimestamps.get(msg.topicId) ?? -1n;
    if (msg.timestampNs >= prev) {
      this.lastTimestamps.set(msg.topicId, msg.timestampNs);
    }
    if (msg.topicId === TOPICS.force) {
      const f = decodeForce(msg);
      const [x, y, z] = f.force;
      this.hud.forceN = Math.sqrt(x * x + y * y + z * z);
      this.hud.contact = f.contact;
    }
  }
}

const MAX_STEP_M = 0.004; // per-event translation clamp
const EMIT_INTERVAL_MS = 1000 / 60;

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

/** Client-side integrator: accumulates bounded deltas into an absolute
 *  target pose and hands out ready-to-send control frames, throttled. */
export class DrillPilot {
  drillingOn = false;
  private dirty = true;
  private lastEmit = -Infinity;
  private seq = 0n;

  constructor(public target: PoseValue = {
    position: [0.05, 0.0, 0.09],
    orientation: [1, 0, 0, 0],
  }) {}

  /** Mouse drag moves the drill in the view plane (dx, dy in meters). */
  applyDrag(dx: number, dy: number): void {
    const p = this.target.position;
    p[0] += clamp(dx, -MAX_STEP_M, MAX_STEP_M);
    p[1] += clamp(dy, -MAX_STEP_M, MAX_STEP_M);
    this.dirty = true;
  }

  /** Wheel pushes along the depth axis. */
  applyWheel(dz: number): void {
    this.target.position[2] += clamp(dz, -MAX_STEP_M, MAX_STEP_M);
    this.dirty = true;
  }

  setTarget(pose: PoseValue): void {
    this.target = {
      position: [...pose.position],
      orientation: [...pose.orientation],
    };
    this.dirty = true;
  }

  toggleDrilling(): void {
    this.drillingOn = !this.drillingOn;
    this.dirty = true;
  }

  setDrilling(on: boolean): void {
    if (this.drillingOn !== on) this.dirty = true;
    this.drillingOn = on;
  }

  /** Returns an encoded control frame when due (dirty + 60 Hz window). */
  pump(nowMs: number): Uint8Array | null {
    if (!this.dirty || nowMs - this.lastEmit < EMIT_INTERVAL_MS) {
      return null;
    }
    this.lastEmit = nowMs;
    this.dirty = false;
    this.seq += 1n;
    return encodeControlDrill(this.seq, this.target, this.drillingOn);
  }
}

/** Camera orbit from keys/drag; same bounded-delta + throttle contract. */
export class CameraPilot {
  private dirty = false;
  private lastEmit = -Infinity;
  private seq = 0n;

  constructor(public target: PoseValue) {}

  nudge(dx: number, dy: number, dz: number): void {
    const p = this.target.position;
    p[0] += clamp(dx, -MAX_STEP_M, MAX_STEP_M);
    p[1] += clamp(dy, -MAX_STEP_M, MAX_STEP_M);
    p[2] += clamp(dz, -MAX_STEP_M, MAX_STEP_M);
    this.dirty = true;
  }

  pump(nowMs: number): Uint8Array | null {
    if (!this.dirty || nowMs - this.lastEmit < EMIT_INTERVAL_MS) {
      return null;
    }
    this.lastEmit = nowMs;
    this.dirty = false;
    this.seq += 1n;
    return encodeControlCamera(this.seq, this.target);
  }
}
