/** Viewer state: current sample, slice axis/index (clamped), overlay
 * toggles, zoom.  Dumb state container consumed by main.ts. */

export type Axis = "x" | "y" | "z";

export class ViewerState {
  sampleId: string | null = null;
  dims: [number, number, number] = [1, 1, 1];
  axis: Axis = "z";
  index = 0;
  zoom = 8;
  visibleOverlays = new Set<string>([
    "gt",
    "pred",
    "machine_centerline",
    "corrected_centerline",
  ]);
  clampedLastRequest = false;

  axisExtent(): number {
    return this.dims[{ x: 0, y: 1, z: 2 }[this.axis]];
  }

  setSample(id: string, dims: [number, number, number]) {
    this.sampleId = id;
    this.dims = dims;
    this.setIndex(Math.floor(this.axisExtent() / 2));
  }

  setAxis(axis: Axis) {
    this.axis = axis;
    this.setIndex(this.index);
  }

  /** Out-of-range requests are clamped and flagged rather than erroring. */
  setIndex(index: number) {
    const hi = this.axisExtent() - 1;
    const clamped = Math.min(hi, Math.max(0, index));
    this.clampedLastRequest = clamped !== index;
    this.index = clamped;
  }

  step(delta: number) {
    this.setIndex(this.index + delta);
  }

  toggleOverlay(name: string): boolean {
    if (this.visibleOverlays.has(name)) {
      this.visibleOverlays.delete(name);
      return false;
    }
    this.visibleOverlays.add(name);
    return true;
  }

  overlayQuery(): string[] {
    return [...this.visibleOverlays].sort();
  }
}
