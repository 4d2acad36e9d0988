// Browser entry point: paints the scene graph onto a canvas and wires the
// sidebar controls. All geometry/styling decisions live in scene.ts and all
// state transitions in store.ts; this file is deliberately thin.

import { ApiClient } from "./api.js";
import { buildScene, type DrawOp } from "./scene.js";
import { ReviewStore } from "./store.js";
import {
  fitBounds,
  pan,
  worldToScreen,
  zoomAt,
  type Viewport,
} from "./transform.js";
import { MAP_CLASSES, type MapClass } from "./types.js";

const canvas = document.getElementById("map") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const sidebar = document.getElementById("cells")!;
const mergeButton = document.getElementById("merge") as HTMLButtonElement;
const downloadSlot = document.getElementById("download")!;
const errorsBox = document.getElementById("errors")!;
const togglesBox = document.getElementById("toggles")!;

const api = new ApiClient("");
const store = new ReviewStore(api);

let view: Viewport = {
  scale: 5,
  centerX: 0,
  centerY: 0,
  width: canvas.width,
  height: canvas.height,
};

function paintOp(op: DrawOp): void {
  if (op.kind === "heatmap") {
    const { spec } = op;
    const peak = Math.max(1, ...op.counts);
    ctx.save();
    ctx.globalAlpha = op.alpha;
    ctx.fillStyle = op.color;
    for (let j = 0; j < spec.height; j++) {
      for (let i = 0; i < spec.width; i++) {
        const v = op.counts[j * spec.width + i];
        if (!v) continue;
        ctx.globalAlpha = op.alpha * Math.min(1, v / peak + 0.15);
        const [x0, y0] = worldToScreen(
          view,
          spec.origin[0] + i * spec.resolution,
          spec.origin[1] + (j + 1) * spec.resolution,
        );
        const s = spec.resolution * view.scale;
        ctx.fillRect(x0, y0, s + 0.5, s + 0.5);
      }
    }
    ctx.restore();
  } else if (op.kind === "lattice") {
    ctx.save();
    ctx.strokeStyle = "#00000022";
    ctx.lineWidth = 1;
    const [x0, y0, x1, y1] = op.bounds;
    for (let x = op.origin[0]; x <= x1; x += op.cellSize) {
      const [px0, py0] = worldToScreen(view, x, y0);
      const [px1, py1] = worldToScreen(view, x, y1);
      ctx.beginPath();
      ctx.moveTo(px0, py0);
      ctx.lineTo(px1, py1);
      ctx.stroke();
    }
    for (let y = op.origin[1]; y <= y1; y += op.cellSize) {
      const [px0, py0] = worldToScreen(view, x0, y);
      const [px1, py1] = worldToScreen(view, x1, y);
      ctx.beginPath();
      ctx.moveTo(px0, py0);
      ctx.lineTo(px1, py1);
      ctx.stroke();
    }
    ctx.restore();
  } else if (op.kind === "polyline") {
    ctx.save();
    ctx.strokeStyle = op.color;
    ctx.lineWidth = op.width;
    ctx.setLineDash(op.dashed ? [6, 4] : []);
    ctx.beginPath();
    op.points.forEach(([x, y], k) => {
      const [px, py] = worldToScreen(view, x, y);
      if (k === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    if (op.closed) ctx.closePath();
    ctx.stroke();
    ctx.restore();
  } else if (op.kind === "cell") {
    const [x0, y0, x1, y1] = op.rect;
    const [px0, py0] = worldToScreen(view, x0, y1);
    const [px1, py1] = worldToScreen(view, x1, y0);
    ctx.save();
    if (op.fill) {
      ctx.fillStyle = op.fill;
      ctx.fillRect(px0, py0, px1 - px0, py1 - py0);
    }
    ctx.strokeStyle = op.stroke;
    ctx.lineWidth = op.selected ? 3.5 : 2;
    ctx.strokeRect(px0, py0, px1 - px0, py1 - py0);
    if (op.selected) {
      ctx.strokeStyle = "#00000055";
      ctx.setLineDash([3, 3]);
      ctx.strokeRect(px0 - 3, py0 - 3, px1 - px0 + 6, py1 - py0 + 6);
    }
    ctx.restore();
  }
}

function render(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const scene = buildScene({
    baseMap: store.state.baseMap,
    newMap: store.state.newMap,
    mergedMap: store.state.mergedMap,
    proposal: store.state.proposal,
    heatmaps: store.state.heatmaps,
    layers: store.state.layers,
    selectedCell: store.state.selectedCell,
  });
  scene.forEach(paintOp);
  renderSidebar();
  renderErrors();
}

function renderSidebar(): void {
  sidebar.innerHTML = "";
  const cells = store.state.proposal?.cells ?? [];
  for (const cell of cells) {
    const row = document.createElement("div");
    row.className = `cell-row ${cell.decision}` +
      (store.state.selectedCell === cell.cell_id ? " selected" : "");
    const label = document.createElement("span");
    label.textContent = `${cell.cell_id}  mAP ${cell.map_ap.toFixed(2)}  [${cell.decision}]`;
    label.onclick = () => {
      store.selectCell(cell.cell_id);
      render();
    };
    const accept = document.createElement("button");
    accept.textContent = "accept";
    accept.onclick = () => void store.decideCell(cell.cell_id, "accepted");
    const reject = document.createElement("button");
    reject.textContent = "reject";
    reject.onclick = () => void store.decideCell(cell.cell_id, "rejected");
    row.append(label, accept, reject);
    sidebar.append(row);
  }
  const pending = store.pendingCount();
  mergeButton.disabled = !store.canMerge();
  mergeButton.textContent = pending > 0 ? `merge (${pending} pending)` : "merge";
}

function renderErrors(): void {
  errorsBox.innerHTML = "";
  for (const msg of store.state.errors.slice(-3)) {
    const div = document.createElement("div");
    div.className = "error";
    div.textContent = msg;
    errorsBox.append(div);
  }
}

function renderToggles(): void {
  togglesBox.innerHTML = "";
  const mk = (label: string, get: () => boolean, set: (v: boolean) => void) => {
    const wrap = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = get();
    box.onchange = () => {
      set(box.checked);
      render();
    };
    wrap.append(box, document.createTextNode(" " + label));
    togglesBox.append(wrap);
  };
  mk("old map", () => store.state.layers.oldMap, (v) => (store.state.layers.oldMap = v));
  mk("new elements", () => store.state.layers.newElements, (v) => (store.state.layers.newElements = v));
  mk("flagged cells", () => store.state.layers.flaggedCells, (v) => (store.state.layers.flaggedCells = v));
  mk("cell lattice", () => store.state.layers.cellLattice, (v) => (store.state.layers.cellLattice = v));
  for (const cls of MAP_CLASSES) {
    mk(`heatmap: ${cls}`, () => store.state.layers.heatmap[cls as MapClass],
       (v) => (store.state.layers.heatmap[cls as MapClass] = v));
  }
}

mergeButton.onclick = async () => {
  const ok = await store.finalizeMerge();
  if (!ok) return;
  downloadSlot.innerHTML = "";
  const bytes = store.downloadBytes()!;
  const blob = new Blob([bytes], { type: "application/json" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = "merged_map.json";
  link.textContent = "download merged map";
  downloadSlot.append(link);
};

let dragging = false;
let last: [number, number] = [0, 0];
canvas.addEventListener("mousedown", (e) => {
  dragging = true;
  last = [e.offsetX, e.offsetY];
});
canvas.addEventListener("mousemove", (e) => {
  if (!dragging) return;
  view = pan(view, e.offsetX - last[0], e.offsetY - last[1]);
  last = [e.offsetX, e.offsetY];
  render();
});
window.addEventListener("mouseup", () => (dragging = false));
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  view = zoomAt(view, e.offsetX, e.offsetY, e.deltaY < 0 ? 1.2 : 1 / 1.2);
  render();
});
canvas.addEventListener("click", (e) => {
  // select the flagged cell under the cursor, if any
  const cells = store.state.proposal?.cells ?? [];
  const [wx, wy] = [
    (e.offsetX - view.width / 2) / view.scale + view.centerX,
    (view.height / 2 - e.offsetY) / view.scale + view.centerY,
  ];
  const hit = cells.find(
    (c) => wx >= c.rect[0] && wx <= c.rect[2] && wy >= c.rect[1] && wy <= c.rect[3],
  );
  store.selectCell(hit ? hit.cell_id : null);
  render();
});
window.addEventListener("keydown", (e) => {
  if (e.key === "a" || e.key === "r" || e.key === "A" || e.key === "R") {
    void store.handleKey(e.key);
  }
});
window.addEventListener("focus", () => void store.refreshProposal());

store.onChange(render);

void (async () => {
  await store.loadAll();
  if (store.state.baseMap) {
    view = fitBounds(view, store.state.baseMap.bounds);
  }
  renderToggles();
  render();
})();
