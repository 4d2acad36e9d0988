// Application state: fetched data, layer toggles, selection, decisions with
// optimistic updates, and the merge gate. The store never rewrites geometry;
// every element it holds is exactly what the API returned.

import { ApiClient, ApiError } from "./api.js";
import { defaultLayers, type LayerToggles } from "./scene.js";
import type {
  CellDecision,
  HeatmapData,
  MapClass,
  ProposalData,
  VectorMapData,
} from "./types.js";
import { MAP_CLASSES } from "./types.js";

export interface StoreState {
  baseMap: VectorMapData | null;
  newMap: VectorMapData | null;
  mergedMap: VectorMapData | null;
  mergedRaw: string | null;
  proposal: ProposalData | null;
  heatmaps: Partial<Record<MapClass, HeatmapData>>;
  layers: LayerToggles;
  selectedCell: string | null;
  errors: string[];
}

export class ReviewStore {
  state: StoreState = {
    baseMap: null,
    newMap: null,
    mergedMap: null,
    mergedRaw: null,
    proposal: null,
    heatmaps: {},
    layers: defaultLayers(),
    selectedCell: null,
    errors: [],
  };

  private listeners: Array<() => void> = [];
  private inFlight = new Set<string>();

  constructor(private api: ApiClient) {}

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  private pushError(msg: string): void {
    this.state.errors.push(msg);
    this.emit();
  }

  async loadAll(): Promise<void> {
    this.state.baseMap = await this.api.getMap();
    this.state.newMap = await this.api.getNew();
    this.state.proposal = await this.api.getProposal();
    for (const cls of MAP_CLASSES) {
      try {
        this.state.heatmaps[cls] = await this.api.getHeatmap(cls, 2);
      } catch (e) {
        if (!(e instanceof ApiError && e.status === 404)) throw e;
        break; // no grid loaded on the server
      }
    }
    this.emit();
  }

  async refreshProposal(): Promise<void> {
    this.state.proposal = await this.api.getProposal();
    this.emit();
  }

  flaggedCellIds(): string[] {
    return (this.state.proposal?.cells ?? []).map((c) => c.cell_id);
  }

  pendingCount(): number {
    return (this.state.proposal?.cells ?? []).filter((c) => c.decision === "pending").length;
  }

  canMerge(): boolean {
    return this.state.proposal !== null && this.pendingCount() === 0;
  }

  selectCell(cellId: string | null): void {
    if (cellId !== null && !this.flaggedCellIds().includes(cellId)) return;
    this.state.selectedCell = cellId;
    this.emit();
  }

  private setCellDecision(cellId: string, decision: CellDecision): void {
    const proposal = this.state.proposal;
    if (!proposal) return;
    this.state.proposal = {
      ...proposal,
      cells: proposal.cells.map((c) =>
        c.cell_id === cellId ? { ...c, decision } : c,
      ),
    };
  }

  /** Optimistic decision: flip locally, POST, reconcile with the server's
   * cell record; revert and surface the error on failure. */
  async decideCell(cellId: string, decision: "accepted" | "rejected"): Promise<boolean> {
    const proposal = this.state.proposal;
    if (!proposal) return false;
    const cell = proposal.cells.find((c) => c.cell_id === cellId);
    if (!cell || this.inFlight.has(cellId)) return false;
    const previous = cell.decision;
    this.inFlight.add(cellId);
    this.setCellDecision(cellId, decision);
    this.emit();
    try {
      const serverCell = await this.api.postDecision(cellId, decision);
      this.setCellDecision(cellId, serverCell.decision);
      this.emit();
      return true;
    } catch (e) {
      this.setCellDecision(cellId, previous);
      this.pushError(
        e instanceof ApiError ? `decision failed (${e.status}): ${e.message}` : String(e),
      );
      return false;
    } finally {
      this.inFlight.delete(cellId);
    }
  }

  /** Keyboard shortcuts: A accepts, R rejects the selected cell. */
  async handleKey(key: string): Promise<boolean> {
    const cellId = this.state.selectedCell;
    if (!cellId) return false;
    const k = key.toLowerCase();
    if (k === "a") return this.decideCell(cellId, "accepted");
    if (k === "r") return this.decideCell(cellId, "rejected");
    return false;
  }

  /** Merge gate: only runs once nothing is pending. Keeps the raw response
   * text so the download reproduces the canonical map file byte for byte. */
  async finalizeMerge(): Promise<boolean> {
    if (!this.canMerge()) {
      this.pushError(`merge blocked: ${this.pendingCount()} pending`);
      return false;
    }
    try {
      const { map, raw } = await this.api.postMerge();
      this.state.mergedMap = map;
      this.state.mergedRaw = raw;
      this.emit();
      return true;
    } catch (e) {
      this.pushError(
        e instanceof ApiError ? `merge failed (${e.status}): ${e.message}` : String(e),
      );
      return false;
    }
  }

  /** File content offered for download after a merge (canonical trailing newline). */
  downloadBytes(): string | null {
    if (this.state.mergedRaw === null) return null;
    return this.state.mergedRaw + "\n";
  }
}
