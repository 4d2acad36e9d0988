"""Synthetic scenarios (straight road, intersection, loop, roundabout,
multi-lane) plus a simulated frame-by-frame predictor standing in for the
neural model, and change injection for update tests.

Everything is seeded and deterministic; per-frame RNG streams derive from
(seed, frame index) so frames can be generated independently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .autolabel import Centerline, _segment_normals
from .elements import (
    MAP_CLASSES,
    FramePrediction,
    MapClass,
    MapElement,
    PerceptionWindow,
    Point2,
    Pose2,
    Rect,
    VectorMap,
)
from .errors import InvalidScenario, UnknownElement
from .geometry import (
    clip_to_rect,
    densify_polyline,
    map_to_ego,
    polyline_length,
    resample_polyline,
    resample_ring,
)

MODEL_POINTS = 20  # simulated model emits fixed-size point sequences
FRAME_DT = 0.5  # seconds between frames (2 Hz capture)


class ScenarioKind(str, enum.Enum):
    STRAIGHT_ROAD = "straight_road"
    INTERSECTION = "intersection"
    LOOP = "loop"
    ROUNDABOUT = "roundabout"
    MULTI_LANE = "multi_lane"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    # Road length for straight/multi-lane, full crossing span for the
    # intersection. The intersection default keeps every arm inside the
    # perception window of a single drive-through, so one pass observes the
    # whole scenario.
    length: Optional[float] = None
    radius: float = 15.0  # roundabout drive circle
    lanes_each_way: int = 1
    half_width: float = 3.048
    crosswalk_stations: Optional[Tuple[float, ...]] = None
    loop_half_x: float = 40.0
    loop_half_y: float = 25.0
    corner_radius: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if self.length is None:
            default = 40.0 if self.kind is ScenarioKind.INTERSECTION else 100.0
            object.__setattr__(self, "length", default)
        if min(self.length, self.radius, self.half_width, self.corner_radius) <= 0:
            raise InvalidScenario(f"scenario parameters must be positive: {self}")
        if self.lanes_each_way < 1:
            raise InvalidScenario(f"lane count must be >= 1, got {self.lanes_each_way}")
        if self.kind is ScenarioKind.ROUNDABOUT and self.radius <= self.half_width:
            raise InvalidScenario("roundabout radius must exceed the lane half width")
        if self.kind is ScenarioKind.LOOP and self.corner_radius <= self.half_width:
            raise InvalidScenario("loop corner radius must exceed the lane half width")


@dataclass(frozen=True)
class NoiseSpec:
    point_sigma: float = 0.0
    dropout_prob: float = 0.0
    spurious_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.point_sigma < 0:
            raise InvalidScenario(f"sigma must be >= 0, got {self.point_sigma}")
        if not (0.0 <= self.dropout_prob <= 1.0):
            raise InvalidScenario(f"dropout_prob must be in [0,1], got {self.dropout_prob}")
        if self.spurious_rate < 0:
            raise InvalidScenario(f"spurious_rate must be >= 0, got {self.spurious_rate}")


def _line(eid: str, cls_: MapClass, pts: Sequence[Tuple[float, float]]) -> MapElement:
    return MapElement(id=eid, cls=cls_, points=tuple(Point2(*p) for p in pts))


def _crosswalk(eid: str, x0: float, y0: float, x1: float, y1: float) -> MapElement:
    return MapElement(
        id=eid,
        cls=MapClass.CROSSWALK,
        points=(Point2(x0, y0), Point2(x1, y0), Point2(x1, y1), Point2(x0, y1)),
        closed=True,
    )


def _circle(eid: str, cls_: MapClass, r: float, n: Optional[int] = None) -> MapElement:
    n = n or max(16, int(math.ceil(2.0 * math.pi * r)))
    pts = [
        Point2(r * math.cos(2.0 * math.pi * k / n), r * math.sin(2.0 * math.pi * k / n))
        for k in range(n)
    ]
    return MapElement(id=eid, cls=cls_, points=tuple(pts), closed=True)


def _rounded_rect_ring(hx: float, hy: float, r: float, step: float = 1.0) -> List[Point2]:
    """CCW rounded-rectangle ring (closure implicit)."""
    corners = [
        (hx - r, hy - r, 0.0),  # NE corner arc: 0 .. 90
        (-(hx - r), hy - r, 0.5 * math.pi),  # NW: 90 .. 180
        (-(hx - r), -(hy - r), math.pi),  # SW: 180 .. 270
        (hx - r, -(hy - r), 1.5 * math.pi),  # SE: 270 .. 360
    ]
    pts: List[Point2] = []
    for cx, cy, start in corners:
        n_arc = max(2, int(math.ceil((0.5 * math.pi * r) / step)))
        for k in range(n_arc + 1):
            a = start + 0.5 * math.pi * k / n_arc
            pts.append(Point2(cx + r * math.cos(a), cy + r * math.sin(a)))
    dedup = [pts[0]]
    for p in pts[1:]:
        if math.dist(dedup[-1], p) > 1e-9:
            dedup.append(p)
    if math.dist(dedup[-1], dedup[0]) <= 1e-9:
        dedup.pop()
    return dedup


def _straight_road(spec: ScenarioSpec) -> Tuple[List[MapElement], Centerline]:
    span = spec.lanes_each_way * spec.half_width
    length = spec.length
    elements = [
        _line("boundary_left", MapClass.BOUNDARY, [(0.0, span), (length, span)]),
        _line("boundary_right", MapClass.BOUNDARY, [(0.0, -span), (length, -span)]),
    ]
    for k in range(1, 2 * spec.lanes_each_way):
        y = (k - spec.lanes_each_way) * spec.half_width
        elements.append(_line(f"divider_{k - 1}", MapClass.DIVIDER, [(0.0, y), (length, y)]))
    stations = spec.crosswalk_stations
    if stations is None:
        stations = (length / 2.0,)
    for k, s in enumerate(stations):
        elements.append(_crosswalk(f"crosswalk_{k}", s - 1.5, -span, s + 1.5, span))
    lane_y = -spec.half_width / 2.0
    drive = Centerline(points=(Point2(0.0, lane_y), Point2(length, lane_y)), source="synthetic")
    return elements, drive


def _intersection(spec: ScenarioSpec) -> Tuple[List[MapElement], Centerline]:
    arm = spec.length / 2.0
    s = spec.half_width
    if arm <= s + 4.5:
        raise InvalidScenario("intersection arms too short for the road width")
    elements = [
        _line("boundary_nw", MapClass.BOUNDARY, [(-arm, s), (-s, s), (-s, arm)]),
        _line("boundary_ne", MapClass.BOUNDARY, [(s, arm), (s, s), (arm, s)]),
        _line("boundary_se", MapClass.BOUNDARY, [(arm, -s), (s, -s), (s, -arm)]),
        _line("boundary_sw", MapClass.BOUNDARY, [(-s, -arm), (-s, -s), (-arm, -s)]),
        _line("divider_w", MapClass.DIVIDER, [(-arm, 0.0), (-s, 0.0)]),
        _line("divider_e", MapClass.DIVIDER, [(s, 0.0), (arm, 0.0)]),
        _line("divider_n", MapClass.DIVIDER, [(0.0, s), (0.0, arm)]),
        _line("divider_s", MapClass.DIVIDER, [(0.0, -arm), (0.0, -s)]),
        _crosswalk("crosswalk_w", -s - 3.5, -s, -s - 0.5, s),
        _crosswalk("crosswalk_n", -s, s + 0.5, s, s + 3.5),
    ]
    lane = spec.half_width / 2.0
    fillet_r = 5.0
    cx, cy = lane - fillet_r, -lane + fillet_r
    path: List[Point2] = [Point2(-arm, -lane), Point2(cx, -lane)]
    n_arc = 8
    for k in range(1, n_arc + 1):
        a = -0.5 * math.pi + 0.5 * math.pi * k / n_arc
        path.append(Point2(cx + fillet_r * math.cos(a), cy + fillet_r * math.sin(a)))
    path.append(Point2(lane, arm))
    return elements, Centerline(points=tuple(path), source="synthetic")


def _loop(spec: ScenarioSpec) -> Tuple[List[MapElement], Centerline]:
    hx, hy, r = spec.loop_half_x, spec.loop_half_y, spec.corner_radius
    hw = spec.half_width
    center_ring = _rounded_rect_ring(hx, hy, r)
    outer_ring = _rounded_rect_ring(hx + hw, hy + hw, r + hw)
    inner_ring = _rounded_rect_ring(hx - hw, hy - hw, r - hw)
    elements = [
        MapElement(id="boundary_outer", cls=MapClass.BOUNDARY, points=tuple(outer_ring), closed=True),
        MapElement(id="boundary_inner", cls=MapClass.BOUNDARY, points=tuple(inner_ring), closed=True),
        MapElement(id="divider_ring", cls=MapClass.DIVIDER, points=tuple(center_ring), closed=True),
        _crosswalk("crosswalk_0", -1.5, -hy - hw, 1.5, -hy + hw),
    ]
    drive_pts = list(center_ring) + [center_ring[0]]
    return elements, Centerline(points=tuple(drive_pts), source="synthetic")


def _roundabout(spec: ScenarioSpec) -> Tuple[List[MapElement], Centerline]:
    r, hw = spec.radius, spec.half_width
    elements = [
        _circle("boundary_outer", MapClass.BOUNDARY, r + hw),
        _circle("boundary_inner", MapClass.BOUNDARY, r - hw),
    ]
    ring = _circle("drive", MapClass.DIVIDER, r).points
    drive_pts = list(ring) + [ring[0]]
    return elements, Centerline(points=tuple(drive_pts), source="synthetic")


def generate_scenario(spec: ScenarioSpec) -> Tuple[VectorMap, Centerline]:
    """Analytic ground truth plus the drive path along the primary lane."""
    if spec.kind is ScenarioKind.STRAIGHT_ROAD:
        elements, drive = _straight_road(spec)
    elif spec.kind is ScenarioKind.MULTI_LANE:
        ml = spec if spec.lanes_each_way >= 2 else ScenarioSpec(
            kind=spec.kind,
            length=spec.length,
            radius=spec.radius,
            lanes_each_way=2,
            half_width=spec.half_width,
            crosswalk_stations=spec.crosswalk_stations,
        )
        elements, drive = _straight_road(ml)
    elif spec.kind is ScenarioKind.INTERSECTION:
        elements, drive = _intersection(spec)
    elif spec.kind is ScenarioKind.LOOP:
        elements, drive = _loop(spec)
    elif spec.kind is ScenarioKind.ROUNDABOUT:
        elements, drive = _roundabout(spec)
    else:  # pragma: no cover
        raise InvalidScenario(f"unhandled scenario kind {spec.kind}")
    gt_map = VectorMap.from_elements(elements, frame_id="map", pad=5.0)
    return gt_map, drive


def _poses_along(drive: Centerline, step: float) -> List[Pose2]:
    pts = np.asarray([(p.x, p.y) for p in drive.points], dtype=float)
    segs = np.diff(pts, axis=0)
    seg_len = np.hypot(segs[:, 0], segs[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])
    poses = []
    n_steps = int(math.floor(total / step + 1e-9))
    for idx in range(n_steps + 1):
        s = min(idx * step, total)
        k = int(np.searchsorted(cum, s, side="right") - 1)
        k = min(k, len(segs) - 1)
        frac = (s - cum[k]) / seg_len[k] if seg_len[k] > 0 else 0.0
        x, y = pts[k] + frac * segs[k]
        yaw = math.atan2(segs[k][1], segs[k][0])
        poses.append(Pose2(float(x), float(y), yaw, timestamp=idx * FRAME_DT))
    return poses


def _clamp_to_window(pts: np.ndarray, rect: Rect) -> np.ndarray:
    pts = pts.copy()
    pts[:, 0] = np.clip(pts[:, 0], rect.xmin, rect.xmax)
    pts[:, 1] = np.clip(pts[:, 1], rect.ymin, rect.ymax)
    return pts


def simulate_frames(
    gt_map: VectorMap,
    drive_path: Centerline,
    window: PerceptionWindow = PerceptionWindow(),
    step: float = 2.0,
    noise: NoiseSpec = NoiseSpec(),
) -> List[FramePrediction]:
    """Emit model-like frames along the drive: clip ground truth to the ego
    window, resample every piece to the fixed 20-point contract, then apply
    jitter / dropout / spurious insertions per the noise spec."""
    rect = window.rect()
    frames = []
    gt_sorted = sorted(gt_map.elements, key=lambda el: el.id)
    for idx, pose in enumerate(_poses_along(drive_path, step)):
        rng = np.random.default_rng(np.random.SeedSequence([noise.seed, idx]))
        elements: List[MapElement] = []
        for el in gt_sorted:
            drop = rng.uniform()
            ego_pts = tuple(map_to_ego(pose, Point2(p.x, p.y)) for p in el.points)
            ego_el = MapElement(
                id=el.id, cls=el.cls, points=ego_pts, closed=el.closed
            )
            for piece in clip_to_rect(ego_el, rect, min_length=1.0):
                if piece.closed:
                    sampled = resample_ring(piece.xy(), MODEL_POINTS)
                else:
                    sampled = resample_polyline(piece.xy(), MODEL_POINTS)
                arr = np.asarray(sampled, dtype=float)
                jitter = rng.normal(0.0, noise.point_sigma, size=arr.shape)
                arr = _clamp_to_window(arr + jitter, rect)
                if drop < noise.dropout_prob:
                    continue
                elements.append(
                    MapElement(
                        id=piece.id,
                        cls=piece.cls,
                        points=tuple(Point2(float(x), float(y)) for x, y in arr),
                        closed=piece.closed,
                    )
                )
        n_spurious = int(rng.poisson(noise.spurious_rate))
        for k in range(n_spurious):
            cls_ = MAP_CLASSES[int(rng.integers(len(MAP_CLASSES)))]
            cx = rng.uniform(rect.xmin + 3.0, rect.xmax - 3.0)
            cy = rng.uniform(rect.ymin + 3.0, rect.ymax - 3.0)
            ang = rng.uniform(0.0, 2.0 * math.pi)
            half = rng.uniform(1.0, 2.5)
            a = (cx - half * math.cos(ang), cy - half * math.sin(ang))
            b = (cx + half * math.cos(ang), cy + half * math.sin(ang))
            seg = np.asarray(resample_polyline([a, b], MODEL_POINTS))
            seg = _clamp_to_window(seg, rect)
            elements.append(
                MapElement(
                    id=f"spur{k}",
                    cls=cls_,
                    points=tuple(Point2(float(x), float(y)) for x, y in seg),
                )
            )
        frames.append(FramePrediction(pose=pose, elements=tuple(elements), window=window))
    return frames


# --- change injection --------------------------------------------------------

@dataclass(frozen=True)
class RemoveElement:
    element_id: str


@dataclass(frozen=True)
class ShiftElement:
    element_id: str
    dx: float
    dy: float


@dataclass(frozen=True)
class NarrowRoad:
    """Push a boundary sideways over the arc-length span [start_s, end_s].

    Positive ``inset`` displaces against the left normal of the travel
    direction (toward the road for a left boundary); ``taper`` meters at each
    end blend back into the untouched geometry.
    """

    element_id: str
    start_s: float
    end_s: float
    inset: float
    taper: float = 2.0


Change = Union[RemoveElement, ShiftElement, NarrowRoad]


@dataclass(frozen=True)
class ChangeRecord:
    kind: str
    element_id: str
    region: Rect


def _element_bbox(el: MapElement) -> Rect:
    xs = [p.x for p in el.points]
    ys = [p.y for p in el.points]
    return Rect(min(xs), min(ys), max(xs), max(ys))


def inject_change(gt_map: VectorMap, change: Change) -> Tuple[VectorMap, ChangeRecord]:
    """Apply one world change to a copy of the map; the original is untouched."""
    target = gt_map.get(change.element_id)
    if target is None:
        raise UnknownElement(f"no element {change.element_id!r}")
    if isinstance(change, RemoveElement):
        elements = tuple(el for el in gt_map.elements if el.id != change.element_id)
        record = ChangeRecord("remove", change.element_id, _element_bbox(target))
        new_map = VectorMap(elements=elements, bounds=gt_map.bounds, frame_id=gt_map.frame_id)
        return new_map, record
    if isinstance(change, ShiftElement):
        moved = MapElement(
            id=target.id,
            cls=target.cls,
            points=tuple(Point2(p.x + change.dx, p.y + change.dy) for p in target.points),
            closed=target.closed,
            confidence=target.confidence,
        )
        elements = tuple(moved if el.id == target.id else el for el in gt_map.elements)
        region = _element_bbox(target).union(_element_bbox(moved))
        bounds = gt_map.bounds.union(region)
        new_map = VectorMap(elements=elements, bounds=bounds, frame_id=gt_map.frame_id)
        return new_map, ChangeRecord("shift", change.element_id, region)
    if isinstance(change, NarrowRoad):
        length = polyline_length(target.xy(), closed=target.closed)
        if not (0.0 <= change.start_s < change.end_s <= length):
            raise UnknownElement(
                f"narrow span [{change.start_s}, {change.end_s}] outside element length {length:.2f}"
            )
        dense = densify_polyline(target.xy(), 0.5, closed=target.closed)
        if target.closed:
            dense = np.vstack([dense, dense[:1]])
        seg = np.diff(dense, axis=0)
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
        normals = _segment_normals(dense)
        vert_normals = np.vstack([normals[:1], 0.5 * (normals[:-1] + normals[1:]), normals[-1:]])
        norms = np.hypot(vert_normals[:, 0], vert_normals[:, 1])
        vert_normals /= np.maximum(norms, 1e-12)[:, None]
        taper = max(change.taper, 1e-6)
        w = np.minimum(
            1.0,
            np.minimum((cum - change.start_s) / taper, (change.end_s - cum) / taper),
        )
        w = np.clip(w, 0.0, 1.0)
        shifted = dense - (w * change.inset)[:, None] * vert_normals
        if target.closed:
            shifted = shifted[:-1]
        moved = MapElement(
            id=target.id,
            cls=target.cls,
            points=tuple(Point2(float(x), float(y)) for x, y in shifted),
            closed=target.closed,
            confidence=target.confidence,
        )
        elements = tuple(moved if el.id == target.id else el for el in gt_map.elements)
        region = _element_bbox(target).union(_element_bbox(moved))
        bounds = gt_map.bounds.union(region)
        new_map = VectorMap(elements=elements, bounds=bounds, frame_id=gt_map.frame_id)
        return new_map, ChangeRecord("narrow", change.element_id, region)
    raise UnknownElement(f"unsupported change {change!r}")  # pragma: no cover
