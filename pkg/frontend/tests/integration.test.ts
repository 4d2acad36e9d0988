// Live end-to-end flows against the real Python service. Two servers are
// spawned over one generated fixture (separate proposal copies), and the
// store drives them exactly as the buttons would.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ReviewStore } from "../src/store.js";
import type { ElementData, VectorMapData } from "../src/types.js";

const FIXTURE_SCRIPT = `
import numpy as np
import sys
from mapweld.elements import MapClass, MapElement, Point2, Rect, VectorMap
from mapweld.fileio import save_map
from mapweld.synth import RemoveElement, ShiftElement, NarrowRoad, inject_change
from mapweld.updater import flag_cells, save_proposal

out = sys.argv[1]
els = [
    MapElement(id="road_bl", cls=MapClass.BOUNDARY, points=(Point2(2, 48.048), Point2(148, 48.048))),
    MapElement(id="road_br", cls=MapClass.BOUNDARY, points=(Point2(2, 41.952), Point2(148, 41.952))),
    MapElement(id="road_d", cls=MapClass.DIVIDER, points=(Point2(2, 45.0), Point2(148, 45.0))),
    MapElement(id="iso_cw", cls=MapClass.CROSSWALK, closed=True,
               points=(Point2(12, 10), Point2(16, 10), Point2(16, 16), Point2(12, 16))),
    MapElement(id="iso_div", cls=MapClass.DIVIDER, points=(Point2(74, 8), Point2(74, 20))),
    MapElement(id="iso_b", cls=MapClass.BOUNDARY, points=(Point2(123, 12), Point2(147, 12))),
]
base = VectorMap(elements=tuple(els), bounds=Rect(0, 0, 150, 90), frame_id="map")
new, _ = inject_change(base, RemoveElement("iso_cw"))
new, _ = inject_change(new, ShiftElement("iso_div", 2.0, 0.0))
new, _ = inject_change(new, NarrowRoad("iso_b", start_s=2.0, end_s=22.0, inset=3.0, taper=2.0))
proposal = flag_cells(new, base, update_threshold=0.3)
assert len(proposal.cells) == 3, [c.cell_id for c in proposal.cells]
save_map(base, out + "/base.json")
save_map(new, out + "/new.json")
save_proposal(proposal, out + "/proposal_flow.json")
save_proposal(proposal, out + "/proposal_identity.json")
print("cells:", sorted(c.cell_id for c in proposal.cells))
`;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr && typeof addr === "object") {
        const port = addr.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitHealthy(base: string, timeoutMs = 20000): Promise<void> {
  const t0 = Date.now();
  while (Date.now() - t0 < timeoutMs) {
    try {
      const res = await fetch(base + "/healthz");
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`server at ${base} never became healthy`);
}

// --- small geometry helpers for the containment assertions -----------------

type Pt = [number, number];

function segDist(p: Pt, a: Pt, b: Pt): number {
  const dx = b[0] - a[0];
  const dy = b[1] - a[1];
  const len2 = dx * dx + dy * dy;
  let t = len2 === 0 ? 0 : ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2;
  t = Math.max(0, Math.min(1, t));
  return Math.hypot(p[0] - (a[0] + t * dx), p[1] - (a[1] + t * dy));
}

function elementPath(el: ElementData): Pt[] {
  const pts = el.points.map(([x, y]) => [x, y] as Pt);
  return el.closed ? [...pts, pts[0]] : pts;
}

function samplePoints(map: VectorMapData, step = 0.5): Pt[] {
  const out: Pt[] = [];
  for (const el of map.elements) {
    const path = elementPath(el);
    for (let k = 0; k + 1 < path.length; k++) {
      const [a, b] = [path[k], path[k + 1]];
      const n = Math.max(1, Math.ceil(Math.hypot(b[0] - a[0], b[1] - a[1]) / step));
      for (let i = 0; i <= n; i++) {
        out.push([a[0] + ((b[0] - a[0]) * i) / n, a[1] + ((b[1] - a[1]) * i) / n]);
      }
    }
  }
  return out;
}

function distToMap(p: Pt, map: VectorMapData): number {
  let best = Infinity;
  for (const el of map.elements) {
    const path = elementPath(el);
    for (let k = 0; k + 1 < path.length; k++) {
      best = Math.min(best, segDist(p, path[k], path[k + 1]));
    }
  }
  return best;
}

function insideRect(p: Pt, rect: [number, number, number, number], margin = 0): boolean {
  return (
    p[0] > rect[0] + margin &&
    p[0] < rect[2] - margin &&
    p[1] > rect[1] + margin &&
    p[1] < rect[3] - margin
  );
}

// ---------------------------------------------------------------------------

let workdir: string;
const procs: ChildProcess[] = [];
let flowUrl: string;
let identityUrl: string;

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "mapweld-ui-"));
  const fixture = spawnSync("python3", ["-c", FIXTURE_SCRIPT, workdir], {
    encoding: "utf-8",
  });
  if (fixture.status !== 0) {
    throw new Error(`fixture failed: ${fixture.stderr}`);
  }
  const start = async (proposalFile: string): Promise<string> => {
    const port = await freePort();
    const proc = spawn(
      "mapweld",
      [
        "serve",
        "--map", join(workdir, "base.json"),
        "--new", join(workdir, "new.json"),
        "--proposal", join(workdir, proposalFile),
        "--host", "127.0.0.1",
        "--port", String(port),
      ],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    procs.push(proc);
    const url = `http://127.0.0.1:${port}`;
    await waitHealthy(url);
    return url;
  };
  flowUrl = await start("proposal_flow.json");
  identityUrl = await start("proposal_identity.json");
}, 60000);

afterAll(() => {
  for (const p of procs) p.kill("SIGINT");
});

describe("UI decision flow against the live service", () => {
  it("accept 2 / reject 1 merges new content only into the accepted cells", async () => {
    const store = new ReviewStore(new ApiClient(flowUrl));
    await store.loadAll();
    const cells = store.state.proposal!.cells;
    expect(cells).toHaveLength(3);
    const [c0, c1, c2] = cells;
    expect(await store.decideCell(c0.cell_id, "accepted")).toBe(true);
    expect(await store.decideCell(c1.cell_id, "rejected")).toBe(true);
    expect(await store.decideCell(c2.cell_id, "accepted")).toBe(true);

    // server state matches the UI state exactly
    const serverProposal = await new ApiClient(flowUrl).getProposal();
    expect(serverProposal).toEqual(store.state.proposal);

    expect(store.canMerge()).toBe(true);
    expect(await store.finalizeMerge()).toBe(true);
    const merged = store.state.mergedMap!;
    const base = store.state.baseMap!;
    const fresh = store.state.newMap!;
    const rejectedRect = c1.rect;
    const acceptedRects = [c0.rect, c2.rect];

    // inside the rejected cell the merged map is still the old map
    for (const p of samplePoints(merged)) {
      if (insideRect(p, rejectedRect, 1e-6)) {
        expect(distToMap(p, base)).toBeLessThanOrEqual(1e-6);
      }
    }
    for (const p of samplePoints(base)) {
      if (insideRect(p, rejectedRect, 1e-6)) {
        expect(distToMap(p, merged)).toBeLessThanOrEqual(1e-6);
      }
    }
    // inside each accepted cell the merged map carries the new content
    for (const rect of acceptedRects) {
      for (const p of samplePoints(merged)) {
        if (insideRect(p, rect, 1e-3)) {
          expect(distToMap(p, fresh)).toBeLessThanOrEqual(1e-6);
        }
      }
      for (const p of samplePoints(fresh)) {
        if (insideRect(p, rect, 1e-3)) {
          expect(distToMap(p, merged)).toBeLessThanOrEqual(1e-6);
        }
      }
    }
  }, 30000);
});

describe("UI identity flow against the live service", () => {
  it("reject-all then merge downloads bytes identical to the base map file", async () => {
    const store = new ReviewStore(new ApiClient(identityUrl));
    await store.loadAll();
    for (const cid of store.flaggedCellIds()) {
      expect(await store.decideCell(cid, "rejected")).toBe(true);
    }
    expect(await store.finalizeMerge()).toBe(true);
    const baseBytes = readFileSync(join(workdir, "base.json"), "utf-8");
    expect(store.downloadBytes()).toBe(baseBytes);
  }, 30000);
});
