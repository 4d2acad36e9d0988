// Thin client for the review API. The fetch function is injected so tests
// can run against a mock or a live server.

import type {
  CellData,
  HeatmapData,
  MapClass,
  ProposalData,
  VectorMapData,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = fetch.bind(globalThis),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as T;
  }

  getMap(): Promise<VectorMapData> {
    return this.getJson("/api/map");
  }

  getNew(): Promise<VectorMapData> {
    return this.getJson("/api/new");
  }

  getProposal(): Promise<ProposalData> {
    return this.getJson("/api/proposal");
  }

  getHeatmap(cls: MapClass, downsample = 1): Promise<HeatmapData> {
    return this.getJson(`/api/heatmap/${cls}?downsample=${downsample}`);
  }

  async postDecision(cellId: string, decision: "accepted" | "rejected"): Promise<CellData> {
    const res = await this.fetchFn(this.baseUrl + "/api/decision", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ cell_id: cellId, decision }),
    });
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as CellData;
  }

  /** Returns both the parsed map and the exact response text so a download
   * can reproduce the canonical file bytes. */
  async postMerge(): Promise<{ map: VectorMapData; raw: string }> {
    const res = await this.fetchFn(this.baseUrl + "/api/merge", { method: "POST" });
    if (!res.ok) throw new ApiError(res.status, await res.text());
    const raw = await res.text();
    return { map: JSON.parse(raw) as VectorMapData, raw };
  }
}
