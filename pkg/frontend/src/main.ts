// Browser entry: wires the live client and pilots to the DOM.  All logic
// worth testing lives in protocol/client/viewstate/render2d; this file is
// the thin painting shell.

import { ControlChannel, SimClient } from "./client.js";
import {
  TOPICS,
  decodeCameraInfo,
  decodeCloud,
  decodeImage,
} from "./protocol.js";
import { anaglyphToRgba, depthToRgba, projectCloud, rgbToRgba, segToRgba } from "./render2d.js";
import { DrillPilot, ViewKind, ViewState } from "./viewstate.js";

const params = new URLSearchParams(location.search);
const endpoint = params.get("endpoint") ?? `ws://${location.hostname}:9090`;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const hudForce = document.getElementById("hud-force")!;
const hudFill = document.getElementById("hud-fill")! as HTMLElement;
const hudDrill = document.getElementById("hud-drilling")!;
const tint = document.getElementById("tint")! as HTMLElement;

const state = new ViewState();
const pilot = new DrillPilot();
let near = 0.05;
let far = 2.0;
let orbitAz = 0;
let orbitEl = 0;

const client = new SimClient({
  url: endpoint,
  topics: ["color_left", "color_right", "depth", "seg", "point_cloud", "force", "camera_info"],
  onStatus: (s) => {
    statusEl.textContent = s;
    statusEl.className = s;
    state.connection = s;
  },
  onMessage: (msg) => {
    state.noteMessage(msg);
    if (msg.topicId === TOPICS.cameraInfo) {
      const info = decodeCameraInfo(msg);
      near = info.near;
      far = info.far;
    }
  },
});
client.connect();

const control = new ControlChannel({
  url: endpoint,
  onStatus: (s) => {
    document.body.classList.toggle("controls-dead", s !== "open");
  },
});
control.connect().catch(() => statusEl.textContent = "controller failed");

for (const btn of document.querySelectorAll<HTMLButtonElement>("[data-view]")) {
  btn.addEventListener("click", () => {
    state.active = btn.dataset.view as ViewKind;
  });
}

// pointer steering: drag moves the drill in-plane, wheel plunges,
// space toggles the burr, arrow drag with shift orbits the cloud view
let dragging = false;
canvas.addEventListener("mousedown", () => (dragging = true));
window.addEventListener("mouseup", () => (dragging = false));
canvas.addEventListener("mousemove", (ev) => {
  if (!dragging) return;
  if (state.active === "cloud") {
    orbitAz += ev.movementX * 0.01;
    orbitEl += ev.movementY * 0.01;
  } else {
    pilot.applyDrag(ev.movementX * 2e-4, -ev.movementY * 2e-4);
  }
});
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  pilot.applyWheel(ev.deltaY > 0 ? -5e-4 : 5e-4);
});
window.addEventListener("keydown", (ev) => {
  if (ev.code === "Space") {
    ev.preventDefault();
    pilot.toggleDrilling();
    hudDrill.textContent = pilot.drillingOn ? "burr ON" : "burr off";
  }
});

function paint() {
  const pick = (id: number) => client.latest.get(id);
  let rgba: Uint8ClampedArray | null = null;
  let w = canvas.width;
  let h = canvas.height;
  const view = state.active;
  if (view === "left" || view === "right") {
    const msg = pick(view === "left" ? TOPICS.colorLeft : TOPICS.colorRight);
    if (msg) {
      const img = decodeImage(msg);
      [w, h] = [img.w, img.h];
      rgba = rgbToRgba(img.w, img.h, img.rgb!);
    }
  } else if (view === "anaglyph") {
    const l = pick(TOPICS.colorLeft);
    const r = pick(TOPICS.colorRight);
    if (l && r) {
      const li = decodeImage(l);
      const ri = decodeImage(r);
      [w, h] = [li.w, li.h];
      rgba = anaglyphToRgba(li.w, li.h, li.rgb!, ri.rgb!);
    }
  } else if (view === "depth") {
    const msg = pick(TOPICS.depth);
    if (msg) {
      const img = decodeImage(msg);
      [w, h] = [img.w, img.h];
      rgba = depthToRgba(img.w, img.h, img.depth!, near, far);
    }
  } else if (view === "seg") {
    const msg = pick(TOPICS.seg);
    if (msg) {
      const img = decodeImage(msg);
      [w, h] = [img.w, img.h];
      rgba = segToRgba(img.w, img.h, img.labels!);
    }
  } else if (view === "cloud") {
    const msg = pick(TOPICS.pointCloud);
    if (msg) {
      rgba = projectCloud(decodeCloud(msg), canvas.width, canvas.height, {
        azimuth: orbitAz,
        elevation: orbitEl,
        distance: 0.35,
        focalPx: 420,
      });
      [w, h] = [canvas.width, canvas.height];
    }
  }
  if (rgba) {
    if (canvas.width !== w || canvas.height !== h) {
      canvas.width = w;
      canvas.height = h;
    }
    ctx.putImageData(new ImageData(rgba as Uint8ClampedArray<ArrayBuffer>, w, h), 0, 0);
  }
  // force HUD: bar + screen tint on contact (haptics made visible)
  hudForce.textContent = `${state.hud.forceN.toFixed(2)} N`;
  hudFill.style.width = `${Math.min(100, state.hud.forceN * 20)}%`;
  tint.style.opacity = state.hud.contact ? "0.25" : "0";

  const frame = pilot.pump(performance.now());
  if (frame) control.send(frame);
  requestAnimationFrame(paint);
}
requestAnimationFrame(paint);
