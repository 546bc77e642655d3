/** Payload shapes of the experiment server's JSON API. */

export type Voxel = [number, number, number];

export interface ExperimentState {
  round: number;
  strategy: string;
  labeled: number;
  unlabeled: number;
  pending_annotations: number;
  training: boolean;
  rounds_budget: number;
  selection: string[];
}

export interface QueryScore {
  sample_id: string;
  uncertainty: number;
  discriminative: number;
  total: number;
}

export interface LossPoint {
  dice: number;
  bce: number;
  branch: number;
  centerline: number;
  wd: number;
  total: number;
}

export interface RoundRecord {
  round: number;
  selected: QueryScore[];
  val_metrics: Record<string, number>;
  curve: LossPoint[];
  checkpoint: string;
}

export interface SampleInfo {
  id: string;
  labeled: boolean;
  provenance: string;
  dims: [number, number, number];
  selected: boolean;
  pending: boolean;
}

export interface SliceResponse {
  axis: "x" | "y" | "z";
  index: number;
  width: number;
  height: number;
  image: number[];
  overlays: Record<string, Voxel[]>;
}

export interface TreeBranch {
  index: number;
  parent: number | null;
  children: number[];
  path: Voxel[];
}

export interface TreeResponse {
  branches: TreeBranch[];
  root_index: number;
  cycle_count: number;
}

/** Run-length encoded mask row: [z, y, xStart, length]. */
export type MaskRun = [number, number, number, number];

export interface AnnotationPayload {
  mask_runs: MaskRun[];
  centerline: Voxel[];
  annotator: string;
}
