/** DOM wiring for the explorer. All numbers shown come from service
 * responses; the client computes no model math. */

import {
  ActionsResponse,
  ApiError,
  ModelResponse,
  ServiceClient,
  pngDataUri,
} from "./api.js";
import { attributionView, formatProbability } from "./attribution.js";
import { drawHeatmap } from "./heatmap.js";
import {
  ExplorerSession,
  appendIntervention,
  newSession,
  reconcile,
  undoToStep,
} from "./state.js";

const SERVICE_URL = new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8765";
const client = new ServiceClient(SERVICE_URL);

let session: ExplorerSession | null = null;
let model: ModelResponse | null = null;
let actions: ActionsResponse | null = null;
let compareFrom = 0;
let busy = false;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function setBanner(message: string, isError = false): void {
  const banner = $("banner");
  banner.textContent = message;
  banner.className = isError ? "banner error" : "banner";
  banner.style.display = message ? "block" : "none";
}

function setControlsEnabled(enabled: boolean): void {
  document.querySelectorAll("button, select, input").forEach((el) => {
    (el as HTMLButtonElement).disabled = !enabled;
  });
  const retry = $("retry") as HTMLButtonElement;
  retry.disabled = false;
}

async function guard<T>(work: () => Promise<T>): Promise<T | undefined> {
  if (busy) return undefined;
  busy = true;
  try {
    const result = await work();
    setBanner("");
    return result;
  } catch (err) {
    if (err instanceof ApiError && err.status === 0) {
      setBanner(`service offline at ${SERVICE_URL}; fix it and press retry`, true);
      setControlsEnabled(false);
    } else {
      setBanner(err instanceof Error ? err.message : String(err), true);
    }
    return undefined;
  } finally {
    busy = false;
  }
}

function renderTimeline(): void {
  const list = $("timeline");
  list.innerHTML = "";
  if (!session) return;
  session.steps.forEach((step, i) => {
    const item = document.createElement("div");
    item.className = "step";
    const img = document.createElement("img");
    img.src = pngDataUri(step.imageB64);
    img.width = 96;
    img.title = `step ${step.step}`;
    const label = document.createElement("div");
    label.textContent = i === 0
      ? "encode"
      : `${step.action} (${step.changedNodes} nodes)`;
    const buttons = document.createElement("div");
    if (i < session!.steps.length - 1) {
      const undo = document.createElement("button");
      undo.textContent = "undo to here";
      undo.onclick = () => guard(async () => {
        session = await undoToStep(client, session!, i);
        sessionStorage.setItem("ctvae-session", session.sessionId);
        renderAll();
      });
      buttons.appendChild(undo);
    }
    const compare = document.createElement("button");
    compare.textContent = compareFrom === i ? "compare from ✓" : "compare from";
    compare.onclick = () => {
      compareFrom = i;
      renderTimeline();
    };
    buttons.appendChild(compare);
    const attr = document.createElement("button");
    attr.textContent = "attribute vs this";
    attr.onclick = () => guard(() => runAttribution(compareFrom, i));
    buttons.appendChild(attr);
    item.append(img, label, buttons);
    list.appendChild(item);
  });
}

function renderHeatmap(): void {
  const canvas = $("heatmap") as HTMLCanvasElement;
  const info = $("heatmap-info");
  if (!session) return;
  const layer = ($("layer") as HTMLSelectElement).value as "adjacency" | "mask";
  if (layer === "adjacency") {
    const last = [...session.steps].reverse().find((s) => s.adjacency);
    if (!last || !last.adjacency) {
      info.textContent = "apply an action to see its graph";
      return;
    }
    drawHeatmap(canvas, last.adjacency);
    info.textContent = `edge probabilities after "${last.action}" (brightness = probability)`;
  } else {
    const action = ($("mask-action") as HTMLSelectElement).value;
    const mask = model?.masks[action];
    if (!mask) {
      info.textContent = "no gate data";
      return;
    }
    drawHeatmap(canvas, mask, 24);
    info.textContent = `gate probabilities for "${action}" (brightness = probability)`;
  }
}

async function runAttribution(fromStep: number, toStep: number): Promise<void> {
  if (!session) return;
  const a = session.steps[fromStep];
  const b = session.steps[toStep];
  const res = await client.attribute(a.imageB64, b.imageB64);
  const view = attributionView(res);
  const panel = $("attribution");
  panel.innerHTML = `<h3>steps ${fromStep} → ${toStep}</h3>`;
  const sum = document.createElement("div");
  sum.textContent = `Σq = ${view.qSum.toFixed(6)}${view.dominant ? "" : " — no single dominant action"}`;
  panel.appendChild(sum);
  for (const bar of view.bars) {
    const row = document.createElement("div");
    row.className = "bar-row";
    const fill = document.createElement("div");
    fill.className = "bar";
    fill.style.width = `${Math.round(100 * bar.relative)}%`;
    const text = document.createElement("span");
    text.textContent = `${bar.action} ${formatProbability(bar.probability)}`;
    row.append(fill, text);
    panel.appendChild(row);
  }
}

function renderAll(): void {
  renderTimeline();
  renderHeatmap();
}

async function loadFile(file: File): Promise<void> {
  const b64 = await new Promise<string>((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve((reader.result as string).split(",", 2)[1]);
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
  await guard(async () => {
    const res = await client.encode(b64);
    session = newSession(res.session, b64, res.reconstruction);
    sessionStorage.setItem("ctvae-session", res.session);
    sessionStorage.setItem("ctvae-original", b64);
    renderAll();
  });
}

async function restoreFromHistory(): Promise<void> {
  const saved = sessionStorage.getItem("ctvae-session");
  const original = sessionStorage.getItem("ctvae-original");
  if (!saved || !original) return;
  await guard(async () => {
    const history = await client.history(saved);
    session = reconcile(newSession(saved, original, ""), history);
    renderAll();
  });
}

async function boot(): Promise<void> {
  await guard(async () => {
    model = await client.model();
    actions = await client.actions();
    const select = $("action") as HTMLSelectElement;
    select.innerHTML = "";
    for (const label of [actions.null_action, ...actions.actions]) {
      const opt = document.createElement("option");
      opt.value = label;
      opt.textContent = label;
      select.appendChild(opt);
    }
    const maskSelect = $("mask-action") as HTMLSelectElement;
    maskSelect.innerHTML = "";
    for (const label of actions.actions) {
      const opt = document.createElement("option");
      opt.value = label;
      opt.textContent = label;
      maskSelect.appendChild(opt);
    }
    setControlsEnabled(true);
  });
  await restoreFromHistory();
}

function wire(): void {
  ($("file") as HTMLInputElement).addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void loadFile(file);
  });
  $("apply").addEventListener("click", () => guard(async () => {
    if (!session) throw new Error("load an image first");
    const action = ($("action") as HTMLSelectElement).value;
    const seed = Number(($("seed") as HTMLInputElement).value) || 0;
    const res = await client.intervene(session.sessionId, action, seed);
    session = appendIntervention(session, action, seed, res);
    renderAll();
  }));
  $("retry").addEventListener("click", () => void boot());
  $("layer").addEventListener("change", renderHeatmap);
  $("mask-action").addEventListener("change", renderHeatmap);
  void boot();
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", wire);
}
