// Dashboard wiring: one stream connection, optimistic-concurrency PUTs,
// a canvas HRV timeline, the live feed and the gallery manager.

import { ApiClient, ApiError } from "./api.js";
import { FeedModel } from "./feed.js";
import { GalleryModel } from "./gallery.js";
import { RuleFormModel } from "./rulesForm.js";
import { ResumableStream } from "./stream.js";
import { TimelineModel } from "./timeline.js";
import type { RulesDocument, StreamRecord } from "./types.js";

const api = new ApiClient("");
const feed = new FeedModel(400);
const timeline = new TimelineModel();
const gallery = new GalleryModel(api);

let rulesVersion = 0;
let rulesDocument: RulesDocument = {};
let form = new RuleFormModel();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setBanner(text: string, kind: "ok" | "warn" | "err"): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = text;
  banner.className = `banner ${kind}`;
}

// ------------------------------------------------------------- rules editor

function renderForm(): void {
  el<HTMLInputElement>("rule-lo").value = String(form.fields.loMs);
  el<HTMLInputElement>("rule-hi").value = String(form.fields.hiMs);
  el<HTMLInputElement>("rule-clip").value = form.fields.clipId;
  el<HTMLInputElement>("rule-cooldown").value = String(form.fields.cooldownMs);
  el<HTMLSelectElement>("rule-activity").value = form.fields.activityKind;
  renderFormErrors();
}

function readForm(): void {
  form.fields.loMs = Number(el<HTMLInputElement>("rule-lo").value);
  form.fields.hiMs = Number(el<HTMLInputElement>("rule-hi").value);
  form.fields.clipId = el<HTMLInputElement>("rule-clip").value;
  form.fields.cooldownMs = Number(el<HTMLInputElement>("rule-cooldown").value);
  form.fields.activityKind = el<HTMLSelectElement>("rule-activity").value;
  renderFormErrors();
}

function renderFormErrors(): void {
  const errors = form.validate();
  el<HTMLDivElement>("rule-errors").textContent = Object.values(errors).join("; ");
  el<HTMLButtonElement>("rule-save").disabled = !form.canSubmit;
  if (form.serverError) {
    el<HTMLDivElement>("rule-errors").textContent =
      `${form.serverError.path ?? ""} ${form.serverError.message}`.trim();
  }
}

async function loadRules(): Promise<void> {
  const doc = await api.getRules();
  rulesVersion = doc.version;
  rulesDocument = doc.body;
  form = RuleFormModel.fromDocument(doc.body);
  timeline.setRange(...(doc.body.hrv_range ?? [20, 100]));
  el<HTMLSpanElement>("rules-version").textContent = `v${rulesVersion}`;
  renderForm();
}

async function saveRules(): Promise<void> {
  readForm();
  if (!form.canSubmit) return;
  form.serverError = null;
  try {
    const next = form.applyTo(rulesDocument);
    const out = await api.putRules(next, rulesVersion);
    rulesVersion = out.version;
    rulesDocument = next;
    timeline.setRange(form.fields.loMs, form.fields.hiMs);
    setBanner(`rules saved as v${out.version}; next engine tick uses them`, "ok");
    el<HTMLSpanElement>("rules-version").textContent = `v${rulesVersion}`;
    drawTimeline();
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      setBanner("rules changed on the server; reloaded, re-apply your edit", "warn");
      await loadRules();
    } else if (err instanceof ApiError) {
      form.serverError = { path: err.path, message: err.message };
      renderFormErrors();
    } else {
      setBanner(String(err), "err");
    }
  }
}

// ---------------------------------------------------------------- timeline

async function refreshTimeline(): Promise<void> {
  const [hrv, markers] = await Promise.all([
    api.getHrv(),
    api.getEvents({ kinds: ["transition", "snapshot", "action"], limit: 2000 }),
  ]);
  timeline.setPoints(hrv.points);
  timeline.setMarkers(markers.records);
  drawTimeline();
}

function drawTimeline(): void {
  const canvas = el<HTMLCanvasElement>("chart");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  if (timeline.isEmpty) {
    ctx.fillStyle = "#8b949e";
    ctx.font = "13px sans-serif";
    ctx.fillText("no HRV data yet — run a replay", 20, height / 2);
    return;
  }
  const points = timeline.points;
  const t0 = points[0]!.t_ms;
  const t1 = points[points.length - 1]!.t_ms || t0 + 1;
  const values = points.map((p) => p.rmssd_ms ?? 0);
  const vMax = Math.max(...values, timeline.hrvRange[1]) * 1.1;
  const x = (t: number) => ((t - t0) / Math.max(t1 - t0, 1)) * (width - 50) + 40;
  const y = (v: number) => height - 20 - (v / vMax) * (height - 40);

  for (const region of timeline.shadedRegions()) {
    ctx.fillStyle = "rgba(248, 81, 73, 0.15)";
    ctx.fillRect(x(region.from_ms), 10, Math.max(x(region.to_ms) - x(region.from_ms), 2), height - 30);
  }
  ctx.strokeStyle = "#30363d";
  for (const bound of timeline.hrvRange) {
    ctx.beginPath();
    ctx.moveTo(40, y(bound));
    ctx.lineTo(width - 10, y(bound));
    ctx.stroke();
  }
  ctx.strokeStyle = "#58a6ff";
  ctx.beginPath();
  points.forEach((p, i) => {
    const px = x(p.t_ms);
    const py = y(p.rmssd_ms ?? 0);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  ctx.fillStyle = "#d29922";
  for (const marker of timeline.markers) {
    ctx.fillRect(x(marker.t_ms) - 1, height - 18, 2, 8);
  }
}

el<HTMLCanvasElement>("chart").addEventListener("mousemove", (event) => {
  const canvas = el<HTMLCanvasElement>("chart");
  const points = timeline.points;
  if (points.length === 0) return;
  const rect = canvas.getBoundingClientRect();
  const frac = (event.clientX - rect.left - 40) / (canvas.width - 50);
  const t0 = points[0]!.t_ms;
  const t1 = points[points.length - 1]!.t_ms;
  const point = timeline.hover(t0 + frac * (t1 - t0));
  if (point) {
    el<HTMLDivElement>("hover").textContent =
      `t=${point.t_ms} ms  rmssd=${point.rmssd_ms} ms  sdnn=${point.sdnn_ms} ms  hr=${point.mean_hr_bpm} bpm`;
  }
});

// -------------------------------------------------------------------- feed

function renderFeedRow(record: StreamRecord): void {
  const list = el<HTMLUListElement>("feed");
  const item = document.createElement("li");
  item.className = `kind-${record.kind}`;
  item.textContent = `#${record.seq}  t=${record.t_ms}  ${record.kind}  ${JSON.stringify(record.payload)}`;
  list.prepend(item);
  while (list.children.length > 400) {
    list.removeChild(list.lastChild!);
  }
}

async function startStream(): Promise<void> {
  const stream = new ResumableStream(
    "",
    {
      sinceSeq: -1,
      reconnectDelayMs: 1000,
      onStatus: (status) => {
        if (status === "connected") setBanner("stream connected", "ok");
        else if (status === "reconnecting") setBanner("stream lost — resuming from last seq", "warn");
      },
    },
  );
  for await (const record of stream.follow()) {
    const result = feed.append(record);
    if (result.accepted) {
      renderFeedRow(record);
      if (record.kind === "hrv_metric" || record.kind === "run_end") {
        void refreshTimeline();
      }
      if (feed.hasGaps) {
        setBanner("sequence gap detected in stream (should never happen)", "err");
      }
    }
  }
}

// ----------------------------------------------------------------- gallery

async function renderGallery(): Promise<void> {
  await gallery.refresh();
  const list = el<HTMLUListElement>("gallery-list");
  list.innerHTML = "";
  for (const person of gallery.records) {
    const item = document.createElement("li");
    item.textContent = `${person.name} (${person.person_id}, ${person.centroids.length} centroid(s)) `;
    const remove = document.createElement("button");
    remove.textContent = "delete";
    remove.addEventListener("click", async () => {
      await gallery.remove(person.person_id);
      await renderGallery();
    });
    item.appendChild(remove);
    list.appendChild(item);
  }
}

el<HTMLButtonElement>("enroll-button").addEventListener("click", async () => {
  const name = el<HTMLInputElement>("enroll-name").value;
  const file = el<HTMLInputElement>("enroll-file").files?.[0];
  if (!name || !file) {
    setBanner("enrollment needs a name and an embeddings JSON file", "warn");
    return;
  }
  try {
    await gallery.enroll(name, await file.text());
    setBanner(`enrolled ${name}`, "ok");
    await renderGallery();
  } catch (err) {
    setBanner(err instanceof Error ? err.message : String(err), "err");
  }
});

// -------------------------------------------------------------------- runs

el<HTMLButtonElement>("run-button").addEventListener("click", async () => {
  const traceRef = el<HTMLInputElement>("trace-ref").value;
  try {
    const handle = await api.startRun(traceRef, "max", 0);
    setBanner(`run ${handle.run_id} started on ${handle.trace_ref}`, "ok");
  } catch (err) {
    setBanner(err instanceof Error ? err.message : String(err), "err");
  }
});

el<HTMLButtonElement>("rule-save").addEventListener("click", () => void saveRules());
for (const id of ["rule-lo", "rule-hi", "rule-clip", "rule-cooldown", "rule-activity"]) {
  el(id).addEventListener("input", readForm);
}

void (async () => {
  await loadRules();
  await refreshTimeline();
  await renderGallery();
  void startStream();
})();
