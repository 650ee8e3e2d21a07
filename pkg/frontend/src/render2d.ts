// Pixel plumbing for the 2D canvas views.  Pure functions over typed
// arrays so they are testable without a DOM.

import { CloudValue } from "./protocol.js";

export function rgbToRgba(w: number, h: number, rgb: Uint8Array): Uint8ClampedArray {
  const out = new Uint8ClampedArray(w * h * 4);
  for (let i = 0, j = 0; i < w * h; i++, j += 4) {
    out[j] = rgb[i * 3];
    out[j + 1] = rgb[i * 3 + 1];
    out[j + 2] = rgb[i * 3 + 2];
    out[j + 3] = 255;
  }
  return out;
}

/** Nearer = brighter; no-hit (non-finite) pixels go dark blue. */
export function depthToRgba(
  w: number,
  h: number,
  depth: Float32Array,
  near: number,
  far: number,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(w * h * 4);
  for (let i = 0, j = 0; i < w * h; i++, j += 4) {
    const d = depth[i];
    if (!Number.isFinite(d)) {
      out[j] = 8;
      out[j + 1] = 8;
      out[j + 2] = 40;
    } else {
      const t = Math.min(1, Math.max(0, (d - near) / (far - near)));
      const v = Math.round(255 * (1 - t));
      out[j] = v;
      out[j + 1] = v;
      out[j + 2] = v;
    }
    out[j + 3] = 255;
  }
  return out;
}

const SEG_PALETTE: [number, number, number][] = [[0, 0, 0]];
for (let i = 1; i < 256; i++) {
  // deterministic distinct-ish colors
  SEG_PALETTE.push([(i * 97) % 200 + 55, (i * 57) % 200 + 55, (i * 17) % 200 + 55]);
}

export function segToRgba(w: number, h: number, labels: Uint8Array): Uint8ClampedArray {
  const out = new Uint8ClampedArray(w * h * 4);
  for (let i = 0, j = 0; i < w * h; i++, j += 4) {
    const [r, g, b] = SEG_PALETTE[labels[i]];
    out[j] = r;
    out[j + 1] = g;
    out[j + 2] = b;
    out[j + 3] = 255;
  }
  return out;
}

/** Red/cyan anaglyph: a pure pixel-wise combination of the two streamed
 *  images (left luminance -> red channel, right -> green+blue). */
export function anaglyphToRgba(
  w: number,
  h: number,
  left: Uint8Array,
  right: Uint8Array,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(w * h * 4);
  for (let i = 0, j = 0; i < w * h; i++, j += 4) {
    const lLum = 0.299 * left[i * 3] + 0.587 * left[i * 3 + 1] + 0.114 * left[i * 3 + 2];
    const rLum = 0.299 * right[i * 3] + 0.587 * right[i * 3 + 1] + 0.114 * right[i * 3 + 2];
    out[j] = Math.round(lLum);
    out[j + 1] = Math.round(rLum);
    out[j + 2] = Math.round(rLum);
    out[j + 3] = 255;
  }
  return out;
}

export interface OrbitParams {
  azimuth: number; // radians
  elevation: number; // radians
  distance: number; // meters from cloud centroid
  focalPx: number;
}

/** Simple client-side projector for the streamed point cloud: rotate the
 *  camera-space points around their centroid and splat with z-order. */
export function projectCloud(
  cloud: CloudValue,
  w: number,
  h: number,
  orbit: OrbitParams,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(w * h * 4);
  for (let j = 3; j < out.length; j += 4) out[j] = 255;
  const n = cloud.count;
  if (n === 0) return out;
  let cx = 0,
    cy = 0,
    cz = 0;
  for (let i = 0; i < n; i++) {
    cx += cloud.xyz[i * 3];
    cy += cloud.xyz[i * 3 + 1];
    cz += cloud.xyz[i * 3 + 2];
  }
  cx /= n;
  cy /= n;
  cz /= n;
  const ca = Math.cos(orbit.azimuth);
  const sa = Math.sin(orbit.azimuth);
  const ce = Math.cos(orbit.elevation);
  const se = Math.sin(orbit.elevation);
  const zbuf = new Float32Array(w * h).fill(Infinity);
  for (let i = 0; i < n; i++) {
    let x = cloud.xyz[i * 3] - cx;
    let y = cloud.xyz[i * 3 + 1] - cy;
    let z = cloud.xyz[i * 3 + 2] - cz;
    // yaw about y, then pitch about x
    const x1 = ca * x + sa * z;
    const z1 = -sa * x + ca * z;
    const y1 = ce * y - se * z1;
    const z2 = se * y + ce * z1 + orbit.distance;
    if (z2 <= 1e-6) continue;
    const u = Math.round(w / 2 + (orbit.focalPx * x1) / z2);
    const v = Math.round(h / 2 - (orbit.focalPx * y1) / z2);
    if (u < 0 || u >= w || v < 0 || v >= h) continue;
    const pix = v * w + u;
    if (z2 >= zbuf[pix]) continue;
    zbuf[pix] = z2;
    out[pix * 4] = cloud.rgb[i * 3];
    out[pix * 4 + 1] = cloud.rgb[i * 3 + 1];
    out[pix * 4 + 2] = cloud.rgb[i * 3 + 2];
  }
  return out;
}
