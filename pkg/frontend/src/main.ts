// Browser entry point: wires the capture source, the streaming client, and
// the overlay renderer to the page controls.

import { StreamClient } from "./client.js";
import { modelsUrlFromWs, parseModelTable, type ModelTable } from "./projection.js";
import { renderOverlay, type OverlayMode } from "./render.js";
import type { OverlayState } from "./overlay.js";
import type { Intrinsics } from "./protocol.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
};

const urlInput = $<HTMLInputElement>("server-url");
const connectBtn = $<HTMLButtonElement>("connect");
const disconnectBtn = $<HTMLButtonElement>("disconnect");
const sourceSelect = $<HTMLSelectElement>("source");
const fileInput = $<HTMLInputElement>("image-files");
const modeSelect = $<HTMLSelectElement>("mode");
const scoreSlider = $<HTMLInputElement>("score-threshold");
const scoreReadout = $<HTMLSpanElement>("score-readout");
const fpsInput = $<HTMLInputElement>("fps-cap");
const statusEl = $<HTMLSpanElement>("status");
const latencyEl = $<HTMLSpanElement>("latency");
const dropsEl = $<HTMLSpanElement>("drops");
const logEl = $<HTMLPreElement>("log");
const view = $<HTMLCanvasElement>("view");

function mustCtx(ctx: CanvasRenderingContext2D | null): CanvasRenderingContext2D {
  if (ctx === null) throw new Error("2d canvas context unavailable");
  return ctx;
}

const viewCtx = mustCtx(view.getContext("2d"));

// Offscreen canvas used to encode outgoing frames as PNG.
const capture = document.createElement("canvas");
const captureCtx = mustCtx(capture.getContext("2d"));

const video = document.createElement("video");
video.autoplay = true;
video.playsInline = true;

let client: StreamClient | null = null;
let state: OverlayState | null = null;
let models: ModelTable | null = null;
let mediaStream: MediaStream | null = null;
let sendTimer: number | null = null;
let imageFrames: ImageBitmap[] = [];
let imageCursor = 0;
let logLines: string[] = [];
let seenLogTotal = 0;

function appendLog(line: string): void {
  logLines.push(line);
  if (logLines.length > 200) logLines = logLines.slice(-200);
  logEl.textContent = logLines.join("\n");
  logEl.scrollTop = logEl.scrollHeight;
}

function showState(next: OverlayState): void {
  state = next;
  statusEl.textContent = next.connection;
  statusEl.className = `status-${next.connection}`;
  latencyEl.textContent =
    next.latencyMs === null ? "-" : `${next.latencyMs.toFixed(0)} ms`;
  dropsEl.textContent = `${next.framesDropped}`;
  const fresh = next.logTotal - seenLogTotal;
  if (fresh > 0) {
    for (const line of next.log.slice(-Math.min(fresh, next.log.length))) {
      appendLog(line);
    }
    seenLogTotal = next.logTotal;
  }
}

/** Pinhole guess for sources without calibration: ~53 degree horizontal fov. */
function defaultIntrinsics(width: number, height: number): Intrinsics {
  return { fx: width, fy: width, cx: width / 2.0, cy: height / 2.0 };
}

function grabSourceFrame(): { width: number; height: number } | null {
  if (sourceSelect.value === "webcam") {
    if (video.readyState < 2 || video.videoWidth === 0) return null;
    capture.width = video.videoWidth;
    capture.height = video.videoHeight;
    captureCtx.drawImage(video, 0, 0);
    return { width: capture.width, height: capture.height };
  }
  if (imageFrames.length === 0) return null;
  const frame = imageFrames[imageCursor % imageFrames.length];
  if (frame === undefined) return null;
  imageCursor += 1;
  capture.width = frame.width;
  capture.height = frame.height;
  captureCtx.drawImage(frame, 0, 0);
  return { width: capture.width, height: capture.height };
}

function sendTick(): void {
  if (client === null) return;
  const dims = grabSourceFrame();
  if (dims === null) return;
  const dataUrl = capture.toDataURL("image/png");
  const base64 = dataUrl.slice(dataUrl.indexOf(",") + 1);
  client.sendFrame({
    width: dims.width,
    height: dims.height,
    intrinsics: defaultIntrinsics(dims.width, dims.height),
    data: base64,
  });
}

function paint(): void {
  view.width = capture.width || view.width;
  view.height = capture.height || view.height;
  if (capture.width > 0) viewCtx.drawImage(capture, 0, 0);
  if (state !== null) {
    renderOverlay(viewCtx, state.latest, {
      mode: modeSelect.value as OverlayMode,
      minScore: Number(scoreSlider.value),
      models,
      intrinsics: defaultIntrinsics(view.width, view.height),
      warn: appendLog,
    });
  }
  requestAnimationFrame(paint);
}

async function startWebcam(): Promise<void> {
  mediaStream = await navigator.mediaDevices.getUserMedia({ video: true, audio: false });
  video.srcObject = mediaStream;
  await video.play();
}

async function loadImageSequence(): Promise<void> {
  const files = Array.from(fileInput.files ?? []);
  imageFrames = await Promise.all(files.map((f) => createImageBitmap(f)));
  imageCursor = 0;
  appendLog(`loaded ${imageFrames.length} image(s)`);
}

async function fetchModels(wsUrl: string): Promise<void> {
  try {
    const resp = await fetch(modelsUrlFromWs(wsUrl));
    if (!resp.ok) throw new Error(`HTTP ${resp.status}`);
    models = parseModelTable(await resp.json());
    appendLog(`loaded wireframe geometry for ${models.size} class(es)`);
  } catch (err) {
    models = null;
    appendLog(`model geometry unavailable (${String(err)}); wireframe falls back to bbox`);
  }
}

async function connect(): Promise<void> {
  if (client !== null) return;
  const url = urlInput.value;
  const fpsCap = Number(fpsInput.value) || 10;
  if (sourceSelect.value === "webcam") {
    await startWebcam();
  } else {
    await loadImageSequence();
  }
  void fetchModels(url);
  client = new StreamClient({ url, fpsCap, onChange: showState });
  client.connect();
  sendTimer = window.setInterval(sendTick, 1000 / fpsCap);
}

function disconnect(): void {
  if (sendTimer !== null) {
    clearInterval(sendTimer);
    sendTimer = null;
  }
  client?.stop();
  client = null;
  mediaStream?.getTracks().forEach((t) => t.stop());
  mediaStream = null;
}

connectBtn.addEventListener("click", () => {
  connect().catch((err) => appendLog(`connect failed: ${String(err)}`));
});
disconnectBtn.addEventListener("click", disconnect);
scoreSlider.addEventListener("input", () => {
  scoreReadout.textContent = Number(scoreSlider.value).toFixed(2);
});
fileInput.addEventListener("change", () => {
  loadImageSequence().catch((err) => appendLog(`image load failed: ${String(err)}`));
});

scoreReadout.textContent = Number(scoreSlider.value).toFixed(2);
requestAnimationFrame(paint);
