// Pure scene construction: map data + view state in, draw ops out.
// Ops carry world coordinates; the painter applies the single affine
// transform, so tests can assert geometry and styling without a canvas.

import type {
  CellDecision,
  ElementData,
  HeatmapData,
  MapClass,
  ProposalData,
  VectorMapData,
} from "./types.js";
import { MAP_CLASSES } from "./types.js";

// Color code for classes: boundaries green, dividers red, crosswalks blue.
export const CLASS_COLORS: Record<MapClass, string> = {
  boundary: "#2e8b57",
  divider: "#d62728",
  crosswalk: "#1f77b4",
};

export const CELL_STYLES: Record<CellDecision, { stroke: string; fill: string | null }> = {
  pending: { stroke: "#ffbf00", fill: null },
  accepted: { stroke: "#2e8b57", fill: "rgba(46,139,87,0.2)" },
  rejected: { stroke: "#9e9e9e", fill: null },
};

export interface LayerToggles {
  oldMap: boolean;
  newElements: boolean;
  heatmap: Record<MapClass, boolean>;
  cellLattice: boolean;
  flaggedCells: boolean;
}

export function defaultLayers(): LayerToggles {
  return {
    oldMap: true,
    newElements: true,
    heatmap: { boundary: false, divider: false, crosswalk: false },
    cellLattice: false,
    flaggedCells: true,
  };
}

export interface PolylineOp {
  kind: "polyline";
  layer: "old" | "new" | "merged";
  cls: MapClass;
  elementId: string;
  points: number[][];
  closed: boolean;
  color: string;
  dashed: boolean;
  width: number;
}

export interface CellOutlineOp {
  kind: "cell";
  cellId: string;
  rect: [number, number, number, number];
  decision: CellDecision;
  stroke: string;
  fill: string | null;
  selected: boolean;
}

export interface HeatmapOp {
  kind: "heatmap";
  cls: MapClass;
  spec: HeatmapData["spec"];
  counts: number[];
  alpha: number;
  color: string;
}

export interface LatticeOp {
  kind: "lattice";
  cellSize: number;
  origin: [number, number];
  bounds: [number, number, number, number];
}

export type DrawOp = PolylineOp | CellOutlineOp | HeatmapOp | LatticeOp;

export interface SceneInput {
  baseMap: VectorMapData | null;
  newMap: VectorMapData | null;
  mergedMap?: VectorMapData | null;
  proposal: ProposalData | null;
  heatmaps: Partial<Record<MapClass, HeatmapData>>;
  layers: LayerToggles;
  selectedCell: string | null;
  cellSize?: number;
}

function mapPolylines(
  vmap: VectorMapData,
  layer: "old" | "new" | "merged",
  dashed: boolean,
): PolylineOp[] {
  return vmap.elements.map((el: ElementData) => ({
    kind: "polyline" as const,
    layer,
    cls: el.class,
    elementId: el.id,
    points: el.points,
    closed: el.closed,
    color: CLASS_COLORS[el.class],
    dashed,
    width: layer === "new" ? 2 : 1.5,
  }));
}

export function buildScene(input: SceneInput): DrawOp[] {
  const ops: DrawOp[] = [];
  for (const cls of MAP_CLASSES) {
    const hm = input.heatmaps[cls];
    if (hm && input.layers.heatmap[cls]) {
      ops.push({
        kind: "heatmap",
        cls,
        spec: hm.spec,
        counts: hm.counts,
        alpha: 0.35,
        color: CLASS_COLORS[cls],
      });
    }
  }
  const baseForLattice = input.mergedMap ?? input.baseMap;
  if (input.layers.cellLattice && baseForLattice) {
    ops.push({
      kind: "lattice",
      cellSize: input.cellSize ?? 30,
      origin: [baseForLattice.bounds[0], baseForLattice.bounds[1]],
      bounds: baseForLattice.bounds,
    });
  }
  const base = input.mergedMap ?? input.baseMap;
  if (input.layers.oldMap && base) {
    ops.push(...mapPolylines(base, input.mergedMap ? "merged" : "old", false));
  }
  if (input.layers.newElements && input.newMap) {
    ops.push(...mapPolylines(input.newMap, "new", true));
  }
  if (input.layers.flaggedCells && input.proposal) {
    for (const cell of input.proposal.cells) {
      const style = CELL_STYLES[cell.decision];
      ops.push({
        kind: "cell",
        cellId: cell.cell_id,
        rect: cell.rect,
        decision: cell.decision,
        stroke: style.stroke,
        fill: style.fill,
        selected: cell.cell_id === input.selectedCell,
      });
    }
  }
  return ops;
}
