// Wire types for the review API (JSON shapes served by `mapweld serve`).

export type MapClass = "boundary" | "divider" | "crosswalk";
export type CellDecision = "pending" | "accepted" | "rejected";

export interface ElementData {
  id: string;
  class: MapClass;
  closed: boolean;
  confidence: number | null;
  points: number[][]; // [x, y] or [x, y, z], meters
}

export interface VectorMapData {
  version: number;
  frame_id: string;
  bounds: [number, number, number, number]; // xmin, ymin, xmax, ymax
  elements: ElementData[];
}

export interface CellData {
  cell_id: string;
  rect: [number, number, number, number];
  map_ap: number;
  old_elements: ElementData[];
  new_elements: ElementData[];
  decision: CellDecision;
}

export interface ProposalData {
  version: number;
  base_map_ref: string;
  update_threshold: number;
  cells: CellData[];
}

export interface GridSpecData {
  origin: [number, number];
  resolution: number;
  width: number;
  height: number;
}

export interface HeatmapData {
  spec: GridSpecData;
  counts: number[]; // row-major: index = j * width + i
}

export const MAP_CLASSES: MapClass[] = ["boundary", "divider", "crosswalk"];
