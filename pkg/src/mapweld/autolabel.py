"""Auto-labeling from a recorded drive: centerline tracing, lane-standard
boundary offsetting, tiled RANSAC ground fitting, and k-d-tree height lookup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .elements import MapClass, MapElement, Point2, Point3, Pose2, VectorMap
from .errors import DegenerateTrace, InvalidGeometry, NoGroundFound
from .geometry import XY

FEET_10_IN_METERS = 3.048


@dataclass(frozen=True)
class LaneSpec:
    """Half lane-corridor width; 10 ft per side by highway design standards."""

    half_width: float = FEET_10_IN_METERS

    def __post_init__(self):
        if self.half_width <= 0:
            raise InvalidGeometry(f"half_width must be > 0, got {self.half_width}")


@dataclass(frozen=True)
class Centerline:
    points: Tuple[Point2, ...]
    source: str = "trace"


def extract_centerline(
    poses: Sequence[Pose2],
    dedup_distance: float = 0.5,
    smooth_window: int = 5,
) -> Centerline:
    """Trace the driven (x, y) positions into a deduplicated, smoothed centerline."""
    if len(poses) >= 2:
        ts = [p.timestamp for p in poses]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise DegenerateTrace("pose timestamps must be monotone")
    kept: List[Tuple[float, float]] = []
    for p in poses:
        if not kept or math.dist(kept[-1], (p.x, p.y)) >= dedup_distance:
            kept.append((p.x, p.y))
    if len(kept) < 2:
        raise DegenerateTrace(f"only {len(kept)} positions survive {dedup_distance} m dedup")
    arr = np.asarray(kept)
    w = max(1, smooth_window)
    half = w // 2
    padded = np.concatenate([np.repeat(arr[:1], half, axis=0), arr, np.repeat(arr[-1:], half, axis=0)])
    kernel = np.ones(w) / w
    xs = np.convolve(padded[:, 0], kernel, mode="valid")
    ys = np.convolve(padded[:, 1], kernel, mode="valid")
    smoothed = list(zip(xs, ys))
    # Repetition padding shrinks gaps near the ends; re-enforce the spacing
    # floor while always keeping the final point.
    cleaned = [smoothed[0]]
    for p in smoothed[1:-1]:
        if math.dist(cleaned[-1], p) >= dedup_distance:
            cleaned.append(p)
    last = smoothed[-1]
    if math.dist(cleaned[-1], last) >= dedup_distance or len(cleaned) < 2:
        cleaned.append(last)
    else:
        cleaned[-1] = last
    if len(cleaned) < 2:
        raise DegenerateTrace("trace collapses to a single point after smoothing")
    return Centerline(points=tuple(Point2(float(x), float(y)) for x, y in cleaned))


def _segment_normals(pts: np.ndarray) -> np.ndarray:
    segs = np.diff(pts, axis=0)
    lengths = np.hypot(segs[:, 0], segs[:, 1])
    units = segs / lengths[:, None]
    return np.column_stack([-units[:, 1], units[:, 0]])  # left normals


def _offset_polyline(pts: np.ndarray, offset: float, miter_cap: float) -> List[Tuple[float, float]]:
    """Offset by signed distance along per-vertex averaged normals.

    Miter joins capped at ``miter_cap`` from the vertex (beveled beyond);
    self-intersection loops from tight inner corners are excised afterwards.
    """
    normals = _segment_normals(pts)
    out: List[Tuple[float, float]] = []
    n = len(pts)
    d = abs(offset)
    sign = 1.0 if offset >= 0 else -1.0
    for k in range(n):
        if k == 0:
            nk = normals[0]
        elif k == n - 1:
            nk = normals[-1]
        else:
            merged = normals[k - 1] + normals[k]
            norm = np.hypot(*merged)
            if norm < 1e-12:
                # 180 degree reversal: fall back to a bevel pair
                for nn in (normals[k - 1], normals[k]):
                    out.append(tuple(pts[k] + sign * d * nn))
                continue
            bisector = merged / norm
            scale = 1.0 / max(float(bisector @ normals[k]), 1e-9)
            if d * scale > miter_cap:
                for nn in (normals[k - 1], normals[k]):
                    out.append(tuple(pts[k] + sign * d * nn))
                continue
            nk = bisector * scale
        out.append(tuple(pts[k] + sign * d * np.asarray(nk)))
    return _excise_loops(out)


def _seg_intersection(a: XY, b: XY, c: XY, d: XY) -> Optional[Tuple[float, float, XY]]:
    r = (b[0] - a[0], b[1] - a[1])
    s = (d[0] - c[0], d[1] - c[1])
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-15:
        return None
    qp = (c[0] - a[0], c[1] - a[1])
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
        return t, u, (a[0] + t * r[0], a[1] + t * r[1])
    return None


def _excise_loops(points: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Cut out self-intersection loops (tight inner offsets fold over)."""
    pts = list(points)
    changed = True
    guard = 0
    while changed and guard < 100:
        changed = False
        guard += 1
        n = len(pts)
        done = False
        for i in range(n - 1):
            if done:
                break
            for j in range(i + 2, n - 1):
                if i == 0 and j == n - 2:
                    continue
                hit = _seg_intersection(pts[i], pts[i + 1], pts[j], pts[j + 1])
                if hit is None:
                    continue
                _, _, x = hit
                pts = pts[: i + 1] + [x] + pts[j + 1 :]
                changed = True
                done = True
                break
    dedup = [pts[0]]
    for p in pts[1:]:
        if math.dist(dedup[-1], p) > 1e-9:
            dedup.append(p)
    return dedup


def offset_boundaries(
    center: Centerline, spec: LaneSpec = LaneSpec()
) -> Tuple[MapElement, MapElement, MapElement]:
    """Lane boundaries at +/- half_width plus the centerline as the divider."""
    pts = np.asarray([(p.x, p.y) for p in center.points], dtype=float)
    if len(pts) < 2:
        raise InvalidGeometry("centerline needs >= 2 points")
    cap = 2.0 * spec.half_width
    left_pts = _offset_polyline(pts, +spec.half_width, cap)
    right_pts = _offset_polyline(pts, -spec.half_width, cap)
    left = MapElement(
        id="boundary_left",
        cls=MapClass.BOUNDARY,
        points=tuple(Point2(*p) for p in left_pts),
    )
    right = MapElement(
        id="boundary_right",
        cls=MapClass.BOUNDARY,
        points=tuple(Point2(*p) for p in right_pts),
    )
    divider = MapElement(
        id="divider_center",
        cls=MapClass.DIVIDER,
        points=tuple(center.points),
    )
    return left, right, divider


@dataclass
class TilePlane:
    a: float
    b: float
    c: float
    inlier_points: np.ndarray  # (n, 3)

    def z_at(self, x: float, y: float) -> float:
        return self.a * x + self.b * y + self.c


@dataclass
class GroundModel:
    tile_size: float
    origin: Point2
    tiles: Dict[Tuple[int, int], Optional[TilePlane]] = field(default_factory=dict)

    def tile_of(self, x: float, y: float) -> Tuple[int, int]:
        return (
            math.floor((x - self.origin.x) / self.tile_size),
            math.floor((y - self.origin.y) / self.tile_size),
        )

    def inlier_cloud(self) -> np.ndarray:
        planes = [t.inlier_points for t in self.tiles.values() if t is not None]
        if not planes:
            return np.empty((0, 3))
        return np.vstack(planes)


def ransac_plane(
    points: np.ndarray,
    inlier_tol: float = 0.15,
    iterations: int = 500,
    seed: Optional[int] = None,
    max_slope_deg: float = 20.0,
) -> Tuple[float, float, float, np.ndarray]:
    """Fit z = a*x + b*y + c by RANSAC over random 3-point samples.

    Best candidate by inlier count (ties by smaller inlier RMS), refit by
    least squares on the winning inliers; steep planes are rejected outright.
    Returns (a, b, c, inlier indices) where the indices are exactly the
    points within tolerance of the refit plane.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n < 3:
        raise NoGroundFound(f"need >= 3 points, got {n}")
    rng = np.random.default_rng(seed)
    max_grad = math.tan(math.radians(max_slope_deg))
    xy1 = np.column_stack([pts[:, 0], pts[:, 1], np.ones(n)])
    z = pts[:, 2]
    best_count = -1
    best_rms = math.inf
    best_coeffs: Optional[np.ndarray] = None
    for _ in range(iterations):
        idx = rng.choice(n, size=3, replace=False)
        m = xy1[idx]
        try:
            coeffs = np.linalg.solve(m, z[idx])
        except np.linalg.LinAlgError:
            continue
        if math.hypot(coeffs[0], coeffs[1]) > max_grad:
            continue
        residuals = np.abs(xy1 @ coeffs - z)
        mask = residuals <= inlier_tol
        count = int(mask.sum())
        if count == 0:
            continue
        rms = float(np.sqrt(np.mean(residuals[mask] ** 2)))
        if count > best_count or (count == best_count and rms < best_rms):
            best_count, best_rms, best_coeffs = count, rms, coeffs
            best_mask = mask
    if best_coeffs is None:
        raise NoGroundFound("no valid plane candidate (degenerate or too-steep samples)")
    refit, *_ = np.linalg.lstsq(xy1[best_mask], z[best_mask], rcond=None)
    final_residuals = np.abs(xy1 @ refit - z)
    inliers = np.flatnonzero(final_residuals <= inlier_tol)
    return float(refit[0]), float(refit[1]), float(refit[2]), inliers


def build_ground_model(
    cloud: np.ndarray,
    tile_size: float = 20.0,
    inlier_tol: float = 0.15,
    iterations: int = 500,
    min_inliers: int = 50,
    seed: Optional[int] = None,
    max_slope_deg: float = 20.0,
) -> GroundModel:
    """Fit one ground plane per tile of the cloud's bounding box."""
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise NoGroundFound("empty point cloud")
    origin = Point2(float(pts[:, 0].min()), float(pts[:, 1].min()))
    model = GroundModel(tile_size=tile_size, origin=origin)
    ti = np.floor((pts[:, 0] - origin.x) / tile_size).astype(int)
    tj = np.floor((pts[:, 1] - origin.y) / tile_size).astype(int)
    any_plane = False
    for key in sorted(set(zip(ti.tolist(), tj.tolist()))):
        sel = (ti == key[0]) & (tj == key[1])
        tile_pts = pts[sel]
        if len(tile_pts) < min_inliers:
            model.tiles[key] = None
            continue
        tile_seed = np.random.SeedSequence(
            [0 if seed is None else seed, key[0] & 0xFFFF, key[1] & 0xFFFF]
        ).generate_state(1)[0]
        try:
            a, b, c, inliers = ransac_plane(
                tile_pts,
                inlier_tol=inlier_tol,
                iterations=iterations,
                seed=int(tile_seed),
                max_slope_deg=max_slope_deg,
            )
        except NoGroundFound:
            model.tiles[key] = None
            continue
        if len(inliers) < min_inliers:
            model.tiles[key] = None
            continue
        model.tiles[key] = TilePlane(a=a, b=b, c=c, inlier_points=tile_pts[inliers])
        any_plane = True
    if not any_plane:
        raise NoGroundFound("no tile produced a valid ground plane")
    return model


def _fallback_plane(model: GroundModel, x: float, y: float) -> TilePlane:
    key = model.tile_of(x, y)
    plane = model.tiles.get(key)
    if plane is not None:
        return plane
    best_key, best_d = None, math.inf
    for k, p in model.tiles.items():
        if p is None:
            continue
        cx = model.origin.x + (k[0] + 0.5) * model.tile_size
        cy = model.origin.y + (k[1] + 0.5) * model.tile_size
        d = math.hypot(cx - x, cy - y)
        if d < best_d or (d == best_d and (best_key is None or k < best_key)):
            best_key, best_d = k, d
    assert best_key is not None  # ensured at model construction
    return model.tiles[best_key]


def lift_to_3d(
    map2d: VectorMap, model: GroundModel, k: int = 5, radius: float = 2.0
) -> VectorMap:
    """Assign z to every vertex from the k nearest ground inliers within radius.

    Falls back to the containing tile's plane (or nearest fitted tile) when no
    inlier is close enough, so the lift is total.
    """
    inliers = model.inlier_cloud()
    if len(inliers) == 0:
        raise NoGroundFound("ground model has no inlier points")
    tree = cKDTree(inliers[:, :2])
    elements = []
    for el in map2d.elements:
        new_pts = []
        for p in el.points:
            dists, idx = tree.query((p.x, p.y), k=min(k, len(inliers)))
            dists = np.atleast_1d(dists)
            idx = np.atleast_1d(idx)
            near = idx[dists <= radius]
            if len(near) >= 1:
                zval = float(np.mean(inliers[near, 2]))
            else:
                zval = _fallback_plane(model, p.x, p.y).z_at(p.x, p.y)
            new_pts.append(Point3(p.x, p.y, zval))
        elements.append(
            MapElement(
                id=el.id, cls=el.cls, points=tuple(new_pts), closed=el.closed,
                confidence=el.confidence,
            )
        )
    return VectorMap(elements=tuple(elements), bounds=map2d.bounds, frame_id=map2d.frame_id)


def auto_label(
    poses: Sequence[Pose2],
    cloud: np.ndarray,
    spec: LaneSpec = LaneSpec(),
    dedup_distance: float = 0.5,
    smooth_window: int = 5,
    tile_size: float = 20.0,
    seed: Optional[int] = None,
    k: int = 5,
    radius: float = 2.0,
) -> VectorMap:
    """Full labeling pass: centerline, lane offsets, ground fit, 3D lift.

    Crosswalks are not auto-labeled; they arrive from scenario files or
    external edits.
    """
    center = extract_centerline(poses, dedup_distance=dedup_distance, smooth_window=smooth_window)
    left, right, divider = offset_boundaries(center, spec)
    map2d = VectorMap.from_elements([left, right, divider], frame_id="map", pad=5.0)
    model = build_ground_model(cloud, tile_size=tile_size, seed=seed)
    return lift_to_3d(map2d, model, k=k, radius=radius)
