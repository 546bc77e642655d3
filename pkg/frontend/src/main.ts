/** DOM wiring: sample list, slice viewer with centerline editing, round
 * dashboard, and the advance-round control.  All experiment truth lives on
 * the server; a reload rebuilds every view from the API alone. */

import { ApiClient, ApiError } from "./api.js";
import { buildDashboardModel, renderChart } from "./dashboard.js";
import { AnnotationEditor, cycleRank } from "./editor.js";
import { COLORS, Frame, renderSlice } from "./render.js";
import { SampleInfo, SliceResponse, Voxel } from "./types.js";
import { ViewerState } from "./viewer.js";

const api = new ApiClient("");
const view = new ViewerState();
let editor: AnnotationEditor | null = null;
let samples: SampleInfo[] = [];
let currentSlice: SliceResponse | null = null;
let statusTimer: number | undefined;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function flash(message: string, isError = false) {
  const bar = el<HTMLDivElement>("status");
  bar.textContent = message;
  bar.className = isError ? "error" : "info";
  if (statusTimer) window.clearTimeout(statusTimer);
  statusTimer = window.setTimeout(() => (bar.textContent = ""), 4000);
}

function blit(canvas: HTMLCanvasElement, frame: Frame, zoom: number) {
  canvas.width = frame.width * zoom;
  canvas.height = frame.height * zoom;
  const ctx = canvas.getContext("2d")!;
  const off = new OffscreenCanvas(frame.width, frame.height);
  const octx = off.getContext("2d")!;
  octx.putImageData(new ImageData(frame.data, frame.width, frame.height), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

async function refreshState() {
  const state = await api.state();
  el("state-line").textContent =
    `round ${state.round}/${state.rounds_budget} · ${state.strategy} · ` +
    `labeled ${state.labeled} · unlabeled ${state.unlabeled} · ` +
    `pending ${state.pending_annotations}` +
    (state.training ? " · training…" : "");
  const btn = el<HTMLButtonElement>("advance");
  btn.disabled = state.training;
  return state;
}

async function refreshSamples() {
  samples = await api.samples();
  const list = el<HTMLUListElement>("samples");
  list.innerHTML = "";
  for (const s of samples) {
    const li = document.createElement("li");
    li.textContent = `${s.id} ${s.labeled ? "✓" : s.pending ? "⏳" : ""}`;
    li.className =
      (s.id === view.sampleId ? "active " : "") + (s.pending ? "pending" : "");
    li.onclick = () => selectSample(s.id);
    list.appendChild(li);
  }
}

async function refreshDashboard() {
  const rounds = await api.rounds();
  const model = buildDashboardModel(rounds);
  blit(el<HTMLCanvasElement>("chart"), renderChart(model), 1);
  const legend = el("legend");
  legend.textContent = rounds.length
    ? `rounds 0–${rounds[rounds.length - 1].round}: ` +
      Object.entries(rounds[rounds.length - 1].val_metrics)
        .map(([k, v]) => `${k} ${v.toFixed(3)}`)
        .join(" · ")
    : "no rounds yet";
}

async function selectSample(id: string) {
  const info = samples.find((s) => s.id === id);
  if (!info) return;
  view.setSample(id, info.dims);
  const base = await api.annotation(id).catch(() => null);
  if (base && info.pending) {
    editor = new AnnotationEditor(
      id,
      info.dims,
      runsToVoxels(base.mask_runs),
      base.centerline
    );
  } else if (info.pending) {
    // unannotated queue item: start from the machine view
    const slice = await api.slice(id, "z", 0, ["gt", "machine_centerline"]);
    void slice;
    const tree = await api.tree(id).catch(() => null);
    const cl: Voxel[] = tree ? tree.branches.flatMap((b) => b.path) : [];
    const gtVoxels = await fetchAllGt(id, info.dims);
    editor = new AnnotationEditor(id, info.dims, gtVoxels, dedupe(cl));
  } else {
    editor = null;
  }
  await redrawSlice();
  await refreshSamples();
}

function dedupe(voxels: Voxel[]): Voxel[] {
  const seen = new Set<string>();
  const out: Voxel[] = [];
  for (const v of voxels) {
    const k = v.join(",");
    if (!seen.has(k)) {
      seen.add(k);
      out.push(v);
    }
  }
  return out;
}

function runsToVoxels(runs: [number, number, number, number][]): Voxel[] {
  const out: Voxel[] = [];
  for (const [z, y, x0, len] of runs) {
    for (let x = x0; x < x0 + len; x++) out.push([x, y, z]);
  }
  return out;
}

async function fetchAllGt(id: string, dims: [number, number, number]): Promise<Voxel[]> {
  const out: Voxel[] = [];
  for (let z = 0; z < dims[2]; z++) {
    const s = await api.slice(id, "z", z, ["gt"]);
    out.push(...(s.overlays.gt ?? []));
  }
  return out;
}

async function redrawSlice() {
  if (!view.sampleId) return;
  currentSlice = await api.slice(
    view.sampleId,
    view.axis,
    view.index,
    view.overlayQuery()
  );
  const extra: Record<string, Voxel[]> = {};
  if (editor) {
    const { added, removed } = editor.pendingEdits();
    extra.edit_added = added;
    extra.edit_removed = removed;
  }
  blit(el<HTMLCanvasElement>("slice"), renderSlice(currentSlice, view.overlayQuery(), extra), view.zoom);
  el("slice-line").textContent =
    `${view.sampleId} · ${view.axis}=${view.index}` +
    (view.clampedLastRequest ? " (clamped)" : "") +
    (editor?.isDirty() ? " · unsaved edits" : "");
}

function canvasToVoxel(ev: MouseEvent): Voxel | null {
  if (!currentSlice) return null;
  const canvas = el<HTMLCanvasElement>("slice");
  const rect = canvas.getBoundingClientRect();
  const u = Math.floor((ev.clientX - rect.left) / view.zoom);
  const w = Math.floor((ev.clientY - rect.top) / view.zoom);
  if (u < 0 || w < 0 || u >= currentSlice.width || w >= currentSlice.height) {
    return null;
  }
  const i = view.index;
  if (view.axis === "x") return [i, u, w];
  if (view.axis === "y") return [u, i, w];
  return [u, w, i];
}

async function submitCurrent() {
  if (!editor) {
    flash("nothing staged for this sample", true);
    return;
  }
  try {
    await api.submitAnnotation(editor.sampleId, {
      mask_runs: editor.maskRuns(),
      centerline: editor.centerlineVoxels(),
      annotator: "human:ui",
    });
    flash(`annotation for ${editor.sampleId} accepted`);
    editor = null;
    await Promise.all([refreshState(), refreshSamples()]);
    await redrawSlice();
  } catch (err) {
    if (err instanceof ApiError) flash(err.message, true);
    else throw err;
  }
}

async function advanceRound() {
  try {
    const r = await api.advanceRound();
    flash(`round ${r.round} started`);
    await pollTraining();
  } catch (err) {
    if (err instanceof ApiError) flash(err.message, true);
    else throw err;
  }
}

async function pollTraining() {
  for (;;) {
    const state = await refreshState();
    if (!state.training) break;
    await new Promise((res) => setTimeout(res, 500));
  }
  await Promise.all([refreshSamples(), refreshDashboard()]);
  await redrawSlice();
}

function wire() {
  el<HTMLButtonElement>("advance").onclick = advanceRound;
  el<HTMLButtonElement>("submit").onclick = submitCurrent;
  el<HTMLButtonElement>("undo").onclick = async () => {
    if (editor?.undo()) await redrawSlice();
  };
  el<HTMLButtonElement>("delete-loop").onclick = async () => {
    if (!editor) return;
    const cycle = editor.deleteLoop();
    if (!cycle) {
      flash("no loop in the current centerline");
      return;
    }
    flash(`removed a ${cycle.length}-voxel loop; remaining cycles: ${cycleRank(editor.centerlineVoxels())}`);
    await redrawSlice();
  };
  el<HTMLButtonElement>("prune-floating").onclick = async () => {
    if (!editor) return;
    const gone = editor.pruneFloating();
    flash(gone.length ? `removed ${gone.length} floating voxels` : "nothing floating");
    await redrawSlice();
  };
  for (const axis of ["x", "y", "z"] as const) {
    el<HTMLButtonElement>(`axis-${axis}`).onclick = async () => {
      view.setAxis(axis);
      await redrawSlice();
    };
  }
  el<HTMLInputElement>("slice-index").onchange = async (ev) => {
    view.setIndex(Number((ev.target as HTMLInputElement).value));
    await redrawSlice();
  };
  el<HTMLCanvasElement>("slice").onclick = async (ev) => {
    if (!editor) return;
    const v = canvasToVoxel(ev);
    if (!v) return;
    const target = el<HTMLSelectElement>("edit-target").value;
    const ok =
      target === "mask" ? editor.toggleMask(v) : editor.toggleCenterline(v);
    if (!ok) flash("edit rejected: voxel floats outside the mask", true);
    await redrawSlice();
  };
  for (const name of Object.keys(COLORS)) {
    const box = document.getElementById(`ov-${name}`);
    if (box) {
      (box as HTMLInputElement).onchange = async () => {
        view.toggleOverlay(name);
        await redrawSlice();
      };
    }
  }
}

async function init() {
  wire();
  await Promise.all([refreshState(), refreshSamples(), refreshDashboard()]);
  const first = samples.find((s) => s.pending) ?? samples[0];
  if (first) await selectSample(first.id);
  window.setInterval(refreshState, 3000);
}

init().catch((err) => flash(String(err), true));
