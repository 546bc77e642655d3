/** Centerline/mask edit state: staged voxel edits with an undo stack and a
 * delete-loop tool, submitted atomically per sample. */

import { MaskRun, Voxel } from "./types.js";

const key = (v: Voxel) => `${v[0]},${v[1]},${v[2]}`;
const unkey = (k: string): Voxel => k.split(",").map(Number) as Voxel;

interface EditOp {
  kind: "add" | "remove";
  target: "centerline" | "mask";
  voxels: Voxel[];
}

export class AnnotationEditor {
  private baseCenterline: Set<string>;
  private baseMask: Set<string>;
  private centerline: Set<string>;
  private mask: Set<string>;
  private undoStack: EditOp[] = [];

  constructor(
    public readonly sampleId: string,
    public readonly dims: [number, number, number],
    baseMask: Voxel[],
    baseCenterline: Voxel[]
  ) {
    this.baseMask = new Set(baseMask.map(key));
    this.baseCenterline = new Set(baseCenterline.map(key));
    this.mask = new Set(this.baseMask);
    this.centerline = new Set(this.baseCenterline);
  }

  inBounds(v: Voxel): boolean {
    return (
      v[0] >= 0 && v[0] < this.dims[0] &&
      v[1] >= 0 && v[1] < this.dims[1] &&
      v[2] >= 0 && v[2] < this.dims[2]
    );
  }

  /** A centerline voxel may not float outside the mask's 1-dilation
   * (mirrors the server's 422 rule, checked inline at edit time). */
  private nearMask(v: Voxel): boolean {
    for (let dx = -1; dx <= 1; dx++)
      for (let dy = -1; dy <= 1; dy++)
        for (let dz = -1; dz <= 1; dz++) {
          if (this.mask.has(key([v[0] + dx, v[1] + dy, v[2] + dz] as Voxel)))
            return true;
        }
    return false;
  }

  /** Toggle one centerline voxel; returns false when the edit is rejected. */
  toggleCenterline(v: Voxel): boolean {
    if (!this.inBounds(v)) return false;
    const k = key(v);
    if (this.centerline.has(k)) {
      this.centerline.delete(k);
      this.undoStack.push({ kind: "remove", target: "centerline", voxels: [v] });
    } else {
      if (!this.nearMask(v)) return false;
      this.centerline.add(k);
      this.undoStack.push({ kind: "add", target: "centerline", voxels: [v] });
    }
    return true;
  }

  toggleMask(v: Voxel): boolean {
    if (!this.inBounds(v)) return false;
    const k = key(v);
    if (this.mask.has(k)) {
      this.mask.delete(k);
      this.undoStack.push({ kind: "remove", target: "mask", voxels: [v] });
    } else {
      this.mask.add(k);
      this.undoStack.push({ kind: "add", target: "mask", voxels: [v] });
    }
    return true;
  }

  /** Remove a whole detected loop from the centerline in one operation. */
  deleteLoop(): Voxel[] | null {
    const cycle = findCycle(this.centerlineVoxels());
    if (!cycle) return null;
    for (const v of cycle) this.centerline.delete(key(v));
    this.undoStack.push({ kind: "remove", target: "centerline", voxels: cycle });
    return cycle;
  }

  /** Drop centerline voxels floating outside the mask's 1-dilation (the
   * machine line's stub/loop artifacts); the server rejects them anyway. */
  pruneFloating(): Voxel[] {
    const doomed = this.centerlineVoxels().filter((v) => !this.nearMask(v));
    if (doomed.length) {
      for (const v of doomed) this.centerline.delete(key(v));
      this.undoStack.push({
        kind: "remove",
        target: "centerline",
        voxels: doomed,
      });
    }
    return doomed;
  }

  undo(): boolean {
    const op = this.undoStack.pop();
    if (!op) return false;
    const set = op.target === "centerline" ? this.centerline : this.mask;
    for (const v of op.voxels) {
      if (op.kind === "add") set.delete(key(v));
      else set.add(key(v));
    }
    return true;
  }

  undoDepth(): number {
    return this.undoStack.length;
  }

  centerlineVoxels(): Voxel[] {
    return [...this.centerline].map(unkey).sort(compareVoxels);
  }

  maskVoxels(): Voxel[] {
    return [...this.mask].map(unkey).sort(compareVoxels);
  }

  pendingEdits(): { added: Voxel[]; removed: Voxel[] } {
    const added = [...this.centerline]
      .filter((k) => !this.baseCenterline.has(k))
      .map(unkey)
      .sort(compareVoxels);
    const removed = [...this.baseCenterline]
      .filter((k) => !this.centerline.has(k))
      .map(unkey)
      .sort(compareVoxels);
    return { added, removed };
  }

  isDirty(): boolean {
    const { added, removed } = this.pendingEdits();
    return added.length > 0 || removed.length > 0 || this.maskDirty();
  }

  private maskDirty(): boolean {
    if (this.mask.size !== this.baseMask.size) return true;
    for (const k of this.mask) if (!this.baseMask.has(k)) return true;
    return false;
  }

  /** Run-length encode the mask per z-row, matching the wire format. */
  maskRuns(): MaskRun[] {
    const rows = new Map<string, number[]>();
    for (const k of this.mask) {
      const [x, y, z] = unkey(k);
      const rk = `${z},${y}`;
      if (!rows.has(rk)) rows.set(rk, []);
      rows.get(rk)!.push(x);
    }
    const runs: MaskRun[] = [];
    for (const [rk, xs] of rows) {
      const [z, y] = rk.split(",").map(Number);
      xs.sort((a, b) => a - b);
      let start = xs[0];
      let prev = xs[0];
      for (let i = 1; i <= xs.length; i++) {
        if (i < xs.length && xs[i] === prev + 1) {
          prev = xs[i];
          continue;
        }
        runs.push([z, y, start, prev - start + 1]);
        if (i < xs.length) {
          start = prev = xs[i];
        }
      }
    }
    runs.sort((a, b) => a[0] - b[0] || a[1] - b[1] || a[2] - b[2]);
    return runs;
  }
}

function compareVoxels(a: Voxel, b: Voxel): number {
  return a[0] - b[0] || a[1] - b[1] || a[2] - b[2];
}

const NBRS: Voxel[] = [];
for (let dx = -1; dx <= 1; dx++)
  for (let dy = -1; dy <= 1; dy++)
    for (let dz = -1; dz <= 1; dz++) {
      if (dx || dy || dz) NBRS.push([dx, dy, dz] as Voxel);
    }

/** Find one cycle in the 26-connectivity graph of a voxel set (DFS back
 * edge, path recovered through parents); null when the set is a forest. */
export function findCycle(voxels: Voxel[]): Voxel[] | null {
  const nodes = new Set(voxels.map(key));
  const parent = new Map<string, string | null>();
  const depth = new Map<string, number>();

  for (const start of voxels.map(key)) {
    if (parent.has(start)) continue;
    parent.set(start, null);
    depth.set(start, 0);
    const stack: string[] = [start];
    while (stack.length) {
      const cur = stack.pop()!;
      const [x, y, z] = unkey(cur);
      for (const [dx, dy, dz] of NBRS) {
        const nb = key([x + dx, y + dy, z + dz] as Voxel);
        if (!nodes.has(nb)) continue;
        if (!parent.has(nb)) {
          parent.set(nb, cur);
          depth.set(nb, depth.get(cur)! + 1);
          stack.push(nb);
        } else if (parent.get(cur) !== nb) {
          // back edge: climb both endpoints to their common ancestor
          return recoverCycle(cur, nb, parent, depth);
        }
      }
    }
  }
  return null;
}

function recoverCycle(
  a: string,
  b: string,
  parent: Map<string, string | null>,
  depth: Map<string, number>
): Voxel[] {
  const pathA: string[] = [];
  const pathB: string[] = [];
  let ca = a;
  let cb = b;
  while (depth.get(ca)! > depth.get(cb)!) {
    pathA.push(ca);
    ca = parent.get(ca)!;
  }
  while (depth.get(cb)! > depth.get(ca)!) {
    pathB.push(cb);
    cb = parent.get(cb)!;
  }
  while (ca !== cb) {
    pathA.push(ca);
    pathB.push(cb);
    ca = parent.get(ca)!;
    cb = parent.get(cb)!;
  }
  pathA.push(ca);
  return [...pathA, ...pathB.reverse()].map(unkey);
}

/** Cycle rank (E - V + C) of a voxel set under 26-connectivity. */
export function cycleRank(voxels: Voxel[]): number {
  const nodes = new Set(voxels.map(key));
  let edges = 0;
  const seen = new Set<string>();
  let components = 0;
  for (const v of voxels) {
    const [x, y, z] = v;
    for (const [dx, dy, dz] of NBRS) {
      if (nodes.has(key([x + dx, y + dy, z + dz] as Voxel))) edges++;
    }
  }
  edges /= 2;
  for (const v of voxels.map(key)) {
    if (seen.has(v)) continue;
    components++;
    const stack = [v];
    seen.add(v);
    while (stack.length) {
      const [x, y, z] = unkey(stack.pop()!);
      for (const [dx, dy, dz] of NBRS) {
        const nb = key([x + dx, y + dy, z + dz] as Voxel);
        if (nodes.has(nb) && !seen.has(nb)) {
          seen.add(nb);
          stack.push(nb);
        }
      }
    }
  }
  return edges - nodes.size + components;
}
