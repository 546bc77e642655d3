/** Thin fetch client over the experiment server. */

import {
  AnnotationPayload,
  ExperimentState,
  RoundRecord,
  SampleInfo,
  SliceResponse,
  TreeResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(`${status}: ${message}`);
  }
}

export class ApiClient {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(res.status, detail);
    }
    if (res.status === 204) return undefined as T;
    return (await res.json()) as T;
  }

  state(): Promise<ExperimentState> {
    return this.request("/api/state");
  }

  rounds(): Promise<RoundRecord[]> {
    return this.request("/api/rounds");
  }

  samples(): Promise<SampleInfo[]> {
    return this.request("/api/samples");
  }

  slice(
    id: string,
    axis: string,
    index: number,
    overlays: string[]
  ): Promise<SliceResponse> {
    const q = new URLSearchParams({
      axis,
      index: String(index),
      overlays: overlays.join(","),
    });
    return this.request(`/api/samples/${id}/slice?${q}`);
  }

  tree(id: string): Promise<TreeResponse> {
    return this.request(`/api/samples/${id}/tree`);
  }

  annotation(id: string): Promise<AnnotationPayload & { sample_id: string }> {
    return this.request(`/api/samples/${id}/annotation`);
  }

  submitAnnotation(id: string, payload: AnnotationPayload): Promise<void> {
    return this.request(`/api/samples/${id}/annotation`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  advanceRound(): Promise<{ round: number }> {
    return this.request("/api/rounds/advance", { method: "POST" });
  }
}
