// World (meters, y up) <-> screen (pixels, y down) affine transform.

export const MIN_ZOOM = 0.05; // px per meter
export const MAX_ZOOM = 50;

export interface Viewport {
  scale: number; // pixels per meter
  centerX: number; // world coords at the canvas center
  centerY: number;
  width: number; // canvas pixels
  height: number;
}

export function clampZoom(scale: number): number {
  return Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, scale));
}

export function worldToScreen(v: Viewport, x: number, y: number): [number, number] {
  return [
    (x - v.centerX) * v.scale + v.width / 2,
    v.height / 2 - (y - v.centerY) * v.scale,
  ];
}

export function screenToWorld(v: Viewport, px: number, py: number): [number, number] {
  return [
    (px - v.width / 2) / v.scale + v.centerX,
    (v.height / 2 - py) / v.scale + v.centerY,
  ];
}

export function pan(v: Viewport, dxPx: number, dyPx: number): Viewport {
  return {
    ...v,
    centerX: v.centerX - dxPx / v.scale,
    centerY: v.centerY + dyPx / v.scale,
  };
}

/** Zoom about a fixed screen point so the world point under it stays put. */
export function zoomAt(v: Viewport, px: number, py: number, factor: number): Viewport {
  const next = clampZoom(v.scale * factor);
  if (next === v.scale) return v;
  const [wx, wy] = screenToWorld(v, px, py);
  const centerX = wx - (px - v.width / 2) / next;
  const centerY = wy + (py - v.height / 2) / next;
  return { ...v, scale: next, centerX, centerY };
}

/** Fit the viewport to a world rectangle with a small margin. */
export function fitBounds(
  v: Viewport,
  bounds: [number, number, number, number],
  margin = 0.95,
): Viewport {
  const [x0, y0, x1, y1] = bounds;
  const spanX = Math.max(x1 - x0, 1e-6);
  const spanY = Math.max(y1 - y0, 1e-6);
  const scale = clampZoom(margin * Math.min(v.width / spanX, v.height / spanY));
  return { ...v, scale, centerX: (x0 + x1) / 2, centerY: (y0 + y1) / 2 };
}
