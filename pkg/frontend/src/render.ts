/** Pure slice rendering: grayscale base plus colored overlays into an RGBA
 * buffer.  Kept DOM-free so tests can read pixels back directly; the app
 * blits the buffer to a canvas via ImageData. */

import { SliceResponse, Voxel } from "./types.js";

export interface Frame {
  width: number;
  height: number;
  data: Uint8ClampedArray<ArrayBuffer>; // RGBA
}

export type Rgb = [number, number, number];

/** Overlay palette.  Prediction errors follow the usual convention:
 * false negatives blue, false positives green. */
export const COLORS: Record<string, Rgb> = {
  pred: [255, 140, 0],
  gt: [220, 60, 60],
  false_negative: [60, 90, 255],
  false_positive: [60, 200, 80],
  machine_centerline: [250, 220, 40],
  corrected_centerline: [240, 80, 240],
  edit_added: [40, 230, 230],
  edit_removed: [140, 140, 140],
};

/** Project a voxel onto the slice plane; null when off-slice. */
export function project(
  v: Voxel,
  axis: "x" | "y" | "z",
  index: number
): [number, number] | null {
  const [x, y, z] = v;
  if (axis === "x") return x === index ? [y, z] : null;
  if (axis === "y") return y === index ? [x, z] : null;
  return z === index ? [x, y] : null;
}

export function renderSlice(
  slice: SliceResponse,
  visible: string[],
  extra: Record<string, Voxel[]> = {}
): Frame {
  const { width, height } = slice;
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const g = slice.image[i];
    data[4 * i] = g;
    data[4 * i + 1] = g;
    data[4 * i + 2] = g;
    data[4 * i + 3] = 255;
  }
  const frame = { width, height, data };

  const havePred = visible.includes("pred") && slice.overlays.pred;
  const haveGt = visible.includes("gt") && slice.overlays.gt;
  if (havePred && haveGt) {
    paintConfusion(frame, slice);
  } else {
    if (haveGt) paint(frame, slice, slice.overlays.gt, COLORS.gt);
    if (havePred) paint(frame, slice, slice.overlays.pred, COLORS.pred);
  }
  for (const name of ["machine_centerline", "corrected_centerline"]) {
    if (visible.includes(name) && slice.overlays[name]) {
      paint(frame, slice, slice.overlays[name], COLORS[name]);
    }
  }
  for (const [name, voxels] of Object.entries(extra)) {
    const color = COLORS[name] ?? COLORS.edit_added;
    paint(frame, slice, voxels, color);
  }
  return frame;
}

function paint(frame: Frame, slice: SliceResponse, voxels: Voxel[], color: Rgb) {
  for (const v of voxels) {
    const uv = project(v, slice.axis, slice.index);
    if (!uv) continue;
    const [u, w] = uv;
    if (u < 0 || w < 0 || u >= frame.width || w >= frame.height) continue;
    const i = 4 * (u + frame.width * w);
    frame.data[i] = color[0];
    frame.data[i + 1] = color[1];
    frame.data[i + 2] = color[2];
  }
}

function paintConfusion(frame: Frame, slice: SliceResponse) {
  const key = (v: Voxel) => v.join(",");
  const gt = new Set(slice.overlays.gt.map(key));
  const pred = new Set(slice.overlays.pred.map(key));
  const fn = slice.overlays.gt.filter((v) => !pred.has(key(v)));
  const fp = slice.overlays.pred.filter((v) => !gt.has(key(v)));
  const tp = slice.overlays.pred.filter((v) => gt.has(key(v)));
  paint(frame, slice, tp, COLORS.pred);
  paint(frame, slice, fn, COLORS.false_negative);
  paint(frame, slice, fp, COLORS.false_positive);
}

/** Pixels whose color exactly matches an overlay color; the readback
 * counterpart of renderSlice used by the fidelity tests. */
export function pixelsOfColor(frame: Frame, color: Rgb): [number, number][] {
  const out: [number, number][] = [];
  for (let w = 0; w < frame.height; w++) {
    for (let u = 0; u < frame.width; u++) {
      const i = 4 * (u + frame.width * w);
      if (
        frame.data[i] === color[0] &&
        frame.data[i + 1] === color[1] &&
        frame.data[i + 2] === color[2]
      ) {
        out.push([u, w]);
      }
    }
  }
  return out;
}
