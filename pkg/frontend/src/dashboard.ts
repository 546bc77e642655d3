/** Round dashboard: metric series extraction and a small line-chart
 * renderer drawing into an RGBA frame (blitted to canvas by the app). */

import { Frame, Rgb } from "./render.js";
import { RoundRecord } from "./types.js";

export const METRICS = ["iou", "precision", "dsc", "td", "bd"] as const;
export type MetricName = (typeof METRICS)[number];

export const METRIC_COLORS: Record<MetricName, Rgb> = {
  iou: [86, 120, 255],
  precision: [240, 160, 40],
  dsc: [220, 60, 60],
  td: [60, 180, 90],
  bd: [170, 90, 220],
};

export interface DashboardModel {
  rounds: number[];
  series: Record<MetricName, number[]>;
}

export function buildDashboardModel(records: RoundRecord[]): DashboardModel {
  const rounds = records.map((r) => r.round);
  const series = {} as Record<MetricName, number[]>;
  for (const m of METRICS) {
    series[m] = records.map((r) => r.val_metrics[m] ?? 0);
  }
  return { rounds, series };
}

export function renderChart(
  model: DashboardModel,
  width = 460,
  height = 240
): Frame {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    data[4 * i] = 252;
    data[4 * i + 1] = 252;
    data[4 * i + 2] = 252;
    data[4 * i + 3] = 255;
  }
  const frame: Frame = { width, height, data };
  const mLeft = 30;
  const mBottom = 18;
  const mTop = 8;
  const plotW = width - mLeft - 8;
  const plotH = height - mTop - mBottom;

  // axes
  drawLine(frame, mLeft, mTop, mLeft, mTop + plotH, [120, 120, 120]);
  drawLine(frame, mLeft, mTop + plotH, mLeft + plotW, mTop + plotH, [120, 120, 120]);

  const n = model.rounds.length;
  if (n === 0) return frame;
  const px = (i: number) =>
    mLeft + (n === 1 ? plotW / 2 : (plotW * i) / (n - 1));
  const py = (v: number) => mTop + plotH - plotH * Math.min(1, Math.max(0, v));

  for (const m of METRICS) {
    const color = METRIC_COLORS[m];
    const ys = model.series[m];
    for (let i = 0; i < n; i++) {
      dot(frame, Math.round(px(i)), Math.round(py(ys[i])), color);
      if (i > 0) {
        drawLine(
          frame,
          Math.round(px(i - 1)),
          Math.round(py(ys[i - 1])),
          Math.round(px(i)),
          Math.round(py(ys[i])),
          color
        );
      }
    }
  }
  return frame;
}

function setPixel(frame: Frame, x: number, y: number, c: Rgb) {
  if (x < 0 || y < 0 || x >= frame.width || y >= frame.height) return;
  const i = 4 * (x + frame.width * y);
  frame.data[i] = c[0];
  frame.data[i + 1] = c[1];
  frame.data[i + 2] = c[2];
}

function dot(frame: Frame, x: number, y: number, c: Rgb) {
  for (let dx = -1; dx <= 1; dx++)
    for (let dy = -1; dy <= 1; dy++) setPixel(frame, x + dx, y + dy, c);
}

function drawLine(frame: Frame, x0: number, y0: number, x1: number, y1: number, c: Rgb) {
  // Bresenham
  const dx = Math.abs(x1 - x0);
  const dy = -Math.abs(y1 - y0);
  const sx = x0 < x1 ? 1 : -1;
  const sy = y0 < y1 ? 1 : -1;
  let err = dx + dy;
  let x = x0;
  let y = y0;
  for (;;) {
    setPixel(frame, x, y, c);
    if (x === x1 && y === y1) break;
    const e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}
