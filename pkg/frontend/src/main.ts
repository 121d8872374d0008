// Studio wiring: session boot, condition form, waypoint canvas, playback.
// All state shown in the UI derives from service responses; a reload
// reconstructs the timeline through GET /api/sessions/{id}/timeline.

import { MotionApi, ServiceError, SkeletonInfo } from "./api.js";
import { FormState, TASKS, defaultForm, toPayload, validateForm, waypointsActive } from "./form.js";
import { Playback, ShapeError, validatePositions } from "./playback.js";
import { Camera, defaultCamera, orbit, zoom } from "./projection.js";
import { drawFrame } from "./renderer.js";
import { TimelineStore } from "./timeline.js";

const api = new MotionApi("");
const timeline = new TimelineStore();
const playback = new Playback();

let skeleton: SkeletonInfo | null = null;
let sessionId: string | null = null;
let form: FormState = defaultForm();
let camera: Camera = defaultCamera();
let playbackStart = performance.now();
let inFlight = false;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const wpCanvas = $<HTMLCanvasElement>("waypoints");
const wpCtx = wpCanvas.getContext("2d")!;

function banner(message: string | null): void {
  const el = $("banner");
  el.textContent = message ?? "";
  el.style.display = message ? "block" : "none";
}

function fieldErrors(fields: string[], message: string | null): void {
  document.querySelectorAll(".field").forEach((el) => el.classList.remove("invalid"));
  for (const f of fields) {
    document.querySelector(`.field[data-field="${f}"]`)?.classList.add("invalid");
  }
  $("form-error").textContent = message ?? "";
}

// ---------------------------------------------------------------------------
// form

function bindForm(): void {
  const taskSel = $<HTMLSelectElement>("task");
  for (const task of TASKS) {
    const opt = document.createElement("option");
    opt.value = task;
    opt.textContent = task;
    taskSel.appendChild(opt);
  }
  taskSel.value = form.task;
  taskSel.addEventListener("change", () => {
    form.task = taskSel.value as FormState["task"];
    syncFormVisibility();
  });
  const bindText = (id: string, apply: (v: string) => void) => {
    const el = $<HTMLInputElement>(id);
    el.addEventListener("input", () => apply(el.value));
  };
  bindText("text", (v) => (form.text = v));
  bindText("speech-ref", (v) => (form.speechRef = v));
  bindText("music-ref", (v) => (form.musicRef = v));
  bindText("frames", (v) => (form.frames = parseInt(v, 10) || 0));
  bindText("seed", (v) => (form.seed = parseInt(v, 10) || 0));
  $("clear-waypoints").addEventListener("click", () => {
    form.waypoints = [];
    drawWaypoints();
  });
  $("submit").addEventListener("click", () => void submitNext());
  syncFormVisibility();
}

function syncFormVisibility(): void {
  $("waypoint-box").style.display = waypointsActive(form.task) ? "block" : "none";
  fieldErrors([], null);
}

// waypoint ground-plane canvas: click to append an [x, z] target (meters)
const WP_EXTENT = 3;

function wpToWorld(px: number, py: number): [number, number] {
  const x = ((px / wpCanvas.width) * 2 - 1) * WP_EXTENT;
  const z = (1 - (py / wpCanvas.height) * 2) * WP_EXTENT;
  return [Math.round(x * 100) / 100, Math.round(z * 100) / 100];
}

function drawWaypoints(): void {
  wpCtx.fillStyle = "#161a20";
  wpCtx.fillRect(0, 0, wpCanvas.width, wpCanvas.height);
  wpCtx.strokeStyle = "#2a3138";
  wpCtx.beginPath();
  wpCtx.moveTo(wpCanvas.width / 2, 0);
  wpCtx.lineTo(wpCanvas.width / 2, wpCanvas.height);
  wpCtx.moveTo(0, wpCanvas.height / 2);
  wpCtx.lineTo(wpCanvas.width, wpCanvas.height / 2);
  wpCtx.stroke();
  wpCtx.strokeStyle = "#caa6ff";
  wpCtx.fillStyle = "#caa6ff";
  let prev: [number, number] | null = [wpCanvas.width / 2, wpCanvas.height / 2];
  form.waypoints.forEach(([x, z]) => {
    const px = ((x / WP_EXTENT + 1) / 2) * wpCanvas.width;
    const py = ((1 - z / WP_EXTENT) / 2) * wpCanvas.height;
    if (prev) {
      wpCtx.beginPath();
      wpCtx.moveTo(prev[0], prev[1]);
      wpCtx.lineTo(px, py);
      wpCtx.stroke();
    }
    wpCtx.fillRect(px - 3, py - 3, 6, 6);
    prev = [px, py];
  });
}

wpCanvas.addEventListener("click", (ev) => {
  const rect = wpCanvas.getBoundingClientRect();
  form.waypoints.push(wpToWorld(ev.clientX - rect.left, ev.clientY - rect.top));
  drawWaypoints();
});

// ---------------------------------------------------------------------------
// timeline / playback

function renderTimeline(): void {
  const list = $("timeline");
  list.innerHTML = "";
  for (const card of timeline.cards) {
    const el = document.createElement("div");
    el.className = "card";
    el.innerHTML = `<span class="idx">#${card.clipIndex}</span>` +
      `<span class="task">${card.task}</span>` +
      `<span class="caption"></span>` +
      `<span class="dur">${card.durationSeconds.toFixed(1)} s</span>`;
    (el.querySelector(".caption") as HTMLElement).textContent = card.caption;
    el.addEventListener("click", () => {
      playback.cursor = playback.clipStart(card.clipIndex);
      playbackStart = performance.now();
    });
    list.appendChild(el);
  }
  $("total-frames").textContent =
    `${timeline.totalFrames} frames / ${(timeline.totalFrames / 30).toFixed(1)} s`;
}

async function refreshTimeline(): Promise<void> {
  if (!sessionId) return;
  timeline.apply(await api.timeline(sessionId));
  renderTimeline();
}

async function submitNext(): Promise<void> {
  if (inFlight || !sessionId || !skeleton) return;
  const errors = validateForm(form, skeleton.max_frames);
  if (errors.length > 0) {
    fieldErrors(errors.map((e) => e.field), errors[0].message);
    return; // blocked client-side: no network call
  }
  fieldErrors([], null);
  inFlight = true;
  const submit = $<HTMLButtonElement>("submit");
  submit.disabled = true;
  try {
    const response = await api.generate(sessionId, toPayload(form));
    try {
      playback.append(
        response.clip_index,
        validatePositions(response.positions, skeleton.joint_names.length),
        skeleton.joint_names.length,
      );
    } catch (err) {
      if (err instanceof ShapeError) {
        banner(`render error: ${err.message}`);
      } else {
        throw err;
      }
    }
    await refreshTimeline();
    // auto-play the new clip and hand focus back for the next instruction
    playback.cursor = playback.clipStart(response.clip_index);
    playbackStart = performance.now();
    playback.playing = true;
    $<HTMLInputElement>("text").focus();
  } catch (err) {
    if (err instanceof ServiceError) {
      fieldErrors(err.fields, `${err.code}: ${err.message}`);
    } else {
      banner(String(err));
    }
  } finally {
    inFlight = false;
    submit.disabled = false;
  }
}

function animate(): void {
  const width = canvas.width;
  const height = canvas.height;
  let joints: number[][] | null = null;
  if (playback.totalFrames > 0) {
    const elapsed = (performance.now() - playbackStart) / 1000;
    const frame = playback.playing
      ? (playback.cursor + playback.frameIndexAt(elapsed)) % playback.totalFrames
      : playback.cursor;
    const entry = playback.frameAt(frame);
    joints = entry?.joints ?? null;
    $("cursor").textContent = `frame ${frame + 1}/${playback.totalFrames}`;
  } else {
    $("cursor").textContent = "no clips yet";
  }
  drawFrame(ctx, camera, width, height, joints, skeleton?.edges ?? [], timeline.rootPath);
  requestAnimationFrame(animate);
}

// orbit controls
let dragging = false;
let last: [number, number] = [0, 0];
canvas.addEventListener("mousedown", (ev) => {
  dragging = true;
  last = [ev.clientX, ev.clientY];
});
window.addEventListener("mouseup", () => (dragging = false));
window.addEventListener("mousemove", (ev) => {
  if (!dragging) return;
  camera = orbit(camera, ev.clientX - last[0], ev.clientY - last[1]);
  last = [ev.clientX, ev.clientY];
});
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  camera = zoom(camera, ev.deltaY < 0 ? 1.1 : 0.9);
});

// ---------------------------------------------------------------------------
// boot

const SESSION_KEY = "motion-studio-session";

async function boot(): Promise<void> {
  try {
    skeleton = await api.skeleton();
    camera = defaultCamera(skeleton.up_axis);
    form = defaultForm(Math.min(150, skeleton.max_frames));
    $<HTMLInputElement>("frames").value = String(form.frames);

    const stored = window.sessionStorage.getItem(SESSION_KEY);
    if (stored) {
      try {
        await api.timeline(stored);
        sessionId = stored;
      } catch {
        sessionId = null; // expired on the server
      }
    }
    if (!sessionId) {
      const info = await api.createSession(skeleton.skeleton_id, form.seed);
      sessionId = info.session_id;
      window.sessionStorage.setItem(SESSION_KEY, sessionId);
    }
    $("session-label").textContent = `session ${sessionId}`;
    await refreshTimeline();
    // reload-safety: rebuild playback from per-clip feature refs is not
    // needed for rendering history; the stitched root path plus the next
    // generated clips drive the view. Cards and totals come from the service.
    banner(null);
  } catch (err) {
    banner(`service unavailable: ${String(err)}`);
  }
  bindForm();
  drawWaypoints();
  animate();
}

void boot();
