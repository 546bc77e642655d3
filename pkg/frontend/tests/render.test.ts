import { describe, expect, it } from "vitest";

import { buildDashboardModel, renderChart } from "../src/dashboard.js";
import { COLORS, pixelsOfColor, project, renderSlice } from "../src/render.js";
import { RoundRecord, SliceResponse, Voxel } from "../src/types.js";
import { ViewerState } from "../src/viewer.js";

function makeSlice(overlays: Record<string, Voxel[]>): SliceResponse {
  return {
    axis: "z",
    index: 2,
    width: 8,
    height: 6,
    image: Array.from({ length: 48 }, (_, i) => i % 7),
    overlays,
  };
}

describe("renderSlice", () => {
  it("base image only when overlays are toggled off", () => {
    const slice = makeSlice({ gt: [[1, 1, 2]] });
    const frame = renderSlice(slice, []);
    for (let i = 0; i < 48; i++) {
      const g = slice.image[i];
      expect(frame.data[4 * i]).toBe(g);
      expect(frame.data[4 * i + 1]).toBe(g);
      expect(frame.data[4 * i + 2]).toBe(g);
    }
  });

  it("overlay pixels match the response's voxel list exactly", () => {
    const gt: Voxel[] = [
      [1, 1, 2],
      [2, 1, 2],
      [5, 4, 2],
    ];
    const frame = renderSlice(makeSlice({ gt }), ["gt"]);
    const got = pixelsOfColor(frame, COLORS.gt).map(([u, v]) => `${u},${v}`);
    const want = gt.map(([x, y]) => `${x},${y}`);
    expect(got.sort()).toEqual(want.sort());
  });

  it("pred+gt renders the confusion palette (FN blue, FP green)", () => {
    const gt: Voxel[] = [
      [1, 1, 2],
      [2, 2, 2],
    ];
    const pred: Voxel[] = [
      [2, 2, 2],
      [3, 3, 2],
    ];
    const frame = renderSlice(makeSlice({ gt, pred }), ["gt", "pred"]);
    expect(pixelsOfColor(frame, COLORS.false_negative)).toEqual([[1, 1]]);
    expect(pixelsOfColor(frame, COLORS.false_positive)).toEqual([[3, 3]]);
    expect(pixelsOfColor(frame, COLORS.pred)).toEqual([[2, 2]]);
  });

  it("projects voxels by axis", () => {
    expect(project([3, 4, 5], "z", 5)).toEqual([3, 4]);
    expect(project([3, 4, 5], "z", 4)).toBeNull();
    expect(project([3, 4, 5], "x", 3)).toEqual([4, 5]);
    expect(project([3, 4, 5], "y", 4)).toEqual([3, 5]);
  });
});

describe("viewer state", () => {
  it("clamps out-of-range slice requests and flags them", () => {
    const v = new ViewerState();
    v.setSample("s", [10, 12, 14]);
    v.setIndex(99);
    expect(v.index).toBe(13);
    expect(v.clampedLastRequest).toBe(true);
    v.setIndex(3);
    expect(v.clampedLastRequest).toBe(false);
    v.setAxis("x");
    expect(v.index).toBe(3);
    v.setIndex(-5);
    expect(v.index).toBe(0);
    expect(v.clampedLastRequest).toBe(true);
  });
});

describe("dashboard", () => {
  const record = (round: number, dsc: number): RoundRecord => ({
    round,
    selected: [],
    val_metrics: { dsc, iou: dsc - 0.05, precision: dsc, td: 1, bd: 1 },
    curve: [],
    checkpoint: "",
  });

  it("empty experiment renders an empty chart", () => {
    const frame = renderChart(buildDashboardModel([]));
    expect(pixelsOfColor(frame, COLORS.gt).length).toBe(0);
  });

  it("series lengths equal the round count", () => {
    const model = buildDashboardModel([record(0, 0.5), record(1, 0.8)]);
    expect(model.rounds).toEqual([0, 1]);
    for (const series of Object.values(model.series)) {
      expect(series.length).toBe(2);
    }
    const frame = renderChart(model);
    expect(frame.width).toBeGreaterThan(0);
    // chart paints something for a 2-round model
    let colored = 0;
    for (let i = 0; i < frame.data.length; i += 4) {
      if (frame.data[i] !== 252 || frame.data[i + 1] !== 252) colored++;
    }
    expect(colored).toBeGreaterThan(50);
  });
});
