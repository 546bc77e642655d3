/** End-to-end checks against a live experiment server (started by
 * e2e.setup.ts in human-oracle mode): annotation round-trips, the
 * round-steering contract, and overlay rendering fidelity. */

import { beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { AnnotationEditor } from "../src/editor.js";
import { buildDashboardModel } from "../src/dashboard.js";
import { COLORS, pixelsOfColor, project, renderSlice } from "../src/render.js";
import { MaskRun, Voxel } from "../src/types.js";

const base = () => process.env.AIRSEG_TEST_BASE ?? "http://127.0.0.1:8651";
let api: ApiClient;

const keyOf = (v: Voxel) => v.join(",");

function runsToVoxels(runs: MaskRun[]): Voxel[] {
  const out: Voxel[] = [];
  for (const [z, y, x0, len] of runs) {
    for (let x = x0; x < x0 + len; x++) out.push([x, y, z]);
  }
  return out;
}

async function gtVoxels(id: string, dims: [number, number, number]): Promise<Voxel[]> {
  const out: Voxel[] = [];
  for (let z = 0; z < dims[2]; z++) {
    const s = await api.slice(id, "z", z, ["gt"]);
    out.push(...(s.overlays.gt ?? []));
  }
  return out;
}

beforeAll(() => {
  api = new ApiClient(base());
});

describe("steering contract", () => {
  it("blocks advancement until every queued sample is submitted, then the dashboard gains one round", async () => {
    const state0 = await api.state();
    expect(state0.pending_annotations).toBeGreaterThan(0);

    await expect(api.advanceRound()).rejects.toThrowError(ApiError);
    try {
      await api.advanceRound();
    } catch (err) {
      expect((err as ApiError).status).toBe(409);
    }

    const roundsBefore = await api.rounds();
    const samples = await api.samples();
    const pending = samples.filter((s) => s.pending);
    expect(pending.length).toBe(state0.pending_annotations);

    for (const info of pending) {
      const tree = await api.tree(info.id);
      const cl = tree.branches.flatMap((b) => b.path);
      const ed = new AnnotationEditor(
        info.id,
        info.dims,
        await gtVoxels(info.id, info.dims),
        dedupe(cl)
      );
      // play the expert: drop machine-extraction loops and floating stubs
      while (ed.deleteLoop() !== null) {
        /* keep removing until acyclic */
      }
      ed.pruneFloating();
      await api.submitAnnotation(info.id, {
        mask_runs: ed.maskRuns(),
        centerline: ed.centerlineVoxels(),
        annotator: "human:e2e",
      });
    }
    expect((await api.state()).pending_annotations).toBe(0);

    const r = await api.advanceRound();
    expect(r.round).toBe(roundsBefore.length);
    // poll until training finishes
    for (let i = 0; i < 300; i++) {
      const s = await api.state();
      if (!s.training && s.round === roundsBefore.length) break;
      await new Promise((res) => setTimeout(res, 100));
    }
    const roundsAfter = await api.rounds();
    expect(roundsAfter.length).toBe(roundsBefore.length + 1);

    const model = buildDashboardModel(roundsAfter);
    expect(model.rounds.length).toBe(roundsBefore.length + 1);
    for (const series of Object.values(model.series)) {
      expect(series.length).toBe(roundsAfter.length);
      expect(series[series.length - 1]).toBe(
        roundsAfter[roundsAfter.length - 1].val_metrics[
          Object.keys(model.series).find((k) => model.series[k as keyof typeof model.series] === series)!
        ]
      );
    }
  }, 120_000);
});

describe("annotation round-trip", () => {
  it("fetched-back centerline equals the local edit result voxel-for-voxel", async () => {
    const samples = await api.samples();
    const info = samples.find((s) => s.pending);
    expect(info).toBeDefined();
    const tree = await api.tree(info!.id);
    const cl = dedupe(tree.branches.flatMap((b) => b.path));
    const mask = await gtVoxels(info!.id, info!.dims);
    const ed = new AnnotationEditor(info!.id, info!.dims, mask, cl);
    while (ed.deleteLoop() !== null) {
      /* expert cleanup first */
    }
    ed.pruneFloating();

    // stage edits: drop one voxel, add one next to the mask
    const kept = ed.centerlineVoxels();
    const dropped = kept[Math.floor(kept.length / 2)];
    expect(ed.toggleCenterline(dropped)).toBe(true);
    const anchor = mask[0];
    const added: Voxel = [anchor[0], anchor[1], anchor[2]];
    if (!ed.centerlineVoxels().some((v) => keyOf(v) === keyOf(added))) {
      expect(ed.toggleCenterline(added)).toBe(true);
    }
    const localCl = ed.centerlineVoxels();
    const localMask = ed.maskVoxels();

    await api.submitAnnotation(info!.id, {
      mask_runs: ed.maskRuns(),
      centerline: localCl,
      annotator: "human:e2e",
    });

    const back = await api.annotation(info!.id);
    const backCl = back.centerline.map(keyOf).sort();
    expect(backCl).toEqual(localCl.map(keyOf).sort());
    const backMask = runsToVoxels(back.mask_runs).map(keyOf).sort();
    expect(backMask).toEqual(localMask.map(keyOf).sort());
  }, 60_000);

  it("rejects a floating centerline with 422", async () => {
    const samples = await api.samples();
    const info = samples.find((s) => s.pending && !s.labeled);
    if (!info) return; // queue already consumed in this order; covered above
    const mask = await gtVoxels(info.id, info.dims);
    const ed = new AnnotationEditor(info.id, info.dims, mask, []);
    try {
      await api.submitAnnotation(info.id, {
        mask_runs: ed.maskRuns(),
        centerline: [[0, 0, 0]],
        annotator: "human:e2e",
      });
      expect.unreachable("submission should have failed");
    } catch (err) {
      expect((err as ApiError).status).toBe(422);
    }
  }, 60_000);
});

describe("overlay fidelity", () => {
  it("rendered overlay pixel sets equal the slice response lists on 10 slices", async () => {
    const samples = await api.samples();
    const labeled = samples.find((s) => s.labeled)!;
    const overlays = ["gt", "machine_centerline"];
    for (let k = 0; k < 10; k++) {
      const axis = (["x", "y", "z"] as const)[k % 3];
      const extent = labeled.dims[{ x: 0, y: 1, z: 2 }[axis]];
      const index = Math.floor(((k + 1) * extent) / 11);
      const slice = await api.slice(labeled.id, axis, index, overlays);
      const frame = renderSlice(slice, overlays);
      // centerline painted after gt, so its pixels win where they overlap
      const clWant = new Set(
        slice.overlays.machine_centerline
          .map((v) => project(v, axis, index))
          .filter((uv): uv is [number, number] => uv !== null)
          .map(([u, v]) => `${u},${v}`)
      );
      const clGot = new Set(
        pixelsOfColor(frame, COLORS.machine_centerline).map(([u, v]) => `${u},${v}`)
      );
      expect(clGot).toEqual(clWant);
      const gtWant = new Set(
        slice.overlays.gt
          .map((v) => project(v, axis, index))
          .filter((uv): uv is [number, number] => uv !== null)
          .map(([u, v]) => `${u},${v}`)
          .filter((uv) => !clWant.has(uv))
      );
      const gtGot = new Set(
        pixelsOfColor(frame, COLORS.gt).map(([u, v]) => `${u},${v}`)
      );
      expect(gtGot).toEqual(gtWant);
    }
  }, 60_000);
});

function dedupe(voxels: Voxel[]): Voxel[] {
  const seen = new Set<string>();
  const out: Voxel[] = [];
  for (const v of voxels) {
    if (!seen.has(keyOf(v))) {
      seen.add(keyOf(v));
      out.push(v);
    }
  }
  return out;
}
