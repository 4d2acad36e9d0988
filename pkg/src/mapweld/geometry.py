"""Coordinate transforms and polyline geometry kernels.

Everything here is pure; polylines are sequences of (x, y) pairs and are
converted to numpy internally where it pays off.
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .elements import DEDUP_EPS, FramePrediction, MapElement, Point2, Pose2, Rect
from .errors import InvalidGeometry

XY = Tuple[float, float]


def ego_to_map(pose: Pose2, p: Point2) -> Point2:
    """Rigid motion ego -> map: R(yaw) * p + (pose.x, pose.y)."""
    if not (math.isfinite(p[0]) and math.isfinite(p[1])):
        raise InvalidGeometry(f"non-finite point {p}")
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    return Point2(c * p[0] - s * p[1] + pose.x, s * p[0] + c * p[1] + pose.y)


def map_to_ego(pose: Pose2, p: Point2) -> Point2:
    """Inverse of :func:`ego_to_map`."""
    if not (math.isfinite(p[0]) and math.isfinite(p[1])):
        raise InvalidGeometry(f"non-finite point {p}")
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    dx, dy = p[0] - pose.x, p[1] - pose.y
    return Point2(c * dx + s * dy, -s * dx + c * dy)


def transform_frame(fp: FramePrediction) -> List[MapElement]:
    """Transform all frame elements into the map frame.

    Element ids get a ``@<timestamp>`` suffix so ids stay unique when many
    frames observe the same feature.
    """
    out = []
    suffix = f"@{fp.pose.timestamp:.3f}"
    for el in fp.elements:
        pts = tuple(ego_to_map(fp.pose, Point2(p.x, p.y)) for p in el.points)
        out.append(
            MapElement(
                id=el.id + suffix,
                cls=el.cls,
                points=pts,
                closed=el.closed,
                confidence=el.confidence,
            )
        )
    return out


def polyline_length(points: Sequence[XY], closed: bool = False) -> float:
    pts = [(p[0], p[1]) for p in points]
    if len(pts) < 2:
        return 0.0
    total = sum(math.dist(a, b) for a, b in zip(pts, pts[1:]))
    if closed:
        total += math.dist(pts[-1], pts[0])
    return total


def _cumulative_lengths(pts: np.ndarray) -> np.ndarray:
    segs = np.diff(pts, axis=0)
    d = np.hypot(segs[:, 0], segs[:, 1])
    return np.concatenate([[0.0], np.cumsum(d)])


def resample_polyline(points: Sequence[XY], n: int) -> List[Point2]:
    """Resample to exactly ``n`` points uniformly spaced by arc length.

    First and last input points are preserved exactly.
    """
    if len(points) < 2 or n < 2:
        raise InvalidGeometry(f"resample needs >= 2 points and n >= 2, got {len(points)}, {n}")
    pts = np.asarray([(p[0], p[1]) for p in points], dtype=float)
    cum = _cumulative_lengths(pts)
    total = cum[-1]
    if total <= DEDUP_EPS:
        raise InvalidGeometry("cannot resample a zero-length polyline")
    targets = np.linspace(0.0, total, n)
    xs = np.interp(targets, cum, pts[:, 0])
    ys = np.interp(targets, cum, pts[:, 1])
    out = [Point2(float(x), float(y)) for x, y in zip(xs, ys)]
    out[0] = Point2(float(pts[0, 0]), float(pts[0, 1]))
    out[-1] = Point2(float(pts[-1, 0]), float(pts[-1, 1]))
    return out


def resample_ring(points: Sequence[XY], n: int) -> List[Point2]:
    """Resample a closed ring to ``n`` points (closure implicit, start preserved)."""
    if len(points) < 3 or n < 3:
        raise InvalidGeometry("ring resample needs >= 3 points and n >= 3")
    ring = list(points) + [points[0]]
    pts = np.asarray([(p[0], p[1]) for p in ring], dtype=float)
    cum = _cumulative_lengths(pts)
    total = cum[-1]
    if total <= DEDUP_EPS:
        raise InvalidGeometry("cannot resample a zero-length ring")
    targets = np.arange(n) * (total / n)
    xs = np.interp(targets, cum, pts[:, 0])
    ys = np.interp(targets, cum, pts[:, 1])
    out = [Point2(float(x), float(y)) for x, y in zip(xs, ys)]
    out[0] = Point2(float(pts[0, 0]), float(pts[0, 1]))
    return out


def _clip_segment_to_rect(a: XY, b: XY, rect: Rect) -> Optional[Tuple[float, float]]:
    """Liang-Barsky: parameter interval [t0, t1] of segment a->b inside rect, or None."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-dx, a[0] - rect.xmin),
        (dx, rect.xmax - a[0]),
        (-dy, a[1] - rect.ymin),
        (dy, rect.ymax - a[1]),
    ):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    if t0 > t1:
        return None
    return t0, t1


def _lerp(a: XY, b: XY, t: float) -> XY:
    return (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t)


def _chain_pieces(path: Sequence[XY], rect: Rect, keep_inside: bool) -> List[List[XY]]:
    """Split an open path into maximal sub-polylines inside (or outside) rect.

    Clipped sub-segments chain together whenever one starts where the previous
    ended; chains break wherever the path crosses the rectangle boundary.
    """
    pieces: List[List[XY]] = []
    current: List[XY] = []

    def flush():
        nonlocal current
        if len(current) >= 2:
            pieces.append(current)
        current = []

    for a, b in zip(path, path[1:]):
        span = _clip_segment_to_rect(a, b, rect)
        if keep_inside:
            intervals = [] if span is None else [span]
        else:
            if span is None:
                intervals = [(0.0, 1.0)]
            else:
                s0, s1 = span
                intervals = [iv for iv in ((0.0, s0), (s1, 1.0)) if iv[0] < iv[1]]
        for t0, t1 in intervals:
            p0 = a if t0 == 0.0 else _lerp(a, b, t0)
            p1 = b if t1 == 1.0 else _lerp(a, b, t1)
            if not (current and math.dist(current[-1], p0) <= DEDUP_EPS):
                flush()
                current.append(p0)
            if math.dist(current[-1], p1) > DEDUP_EPS:
                current.append(p1)
    flush()
    return pieces


def _merge_ring_seam(pieces: List[List[XY]], seam: XY) -> List[List[XY]]:
    """Join the last and first chain of a ring walk when both touch the seam point."""
    if len(pieces) >= 2:
        first, last = pieces[0], pieces[-1]
        if (
            math.dist(first[0], seam) <= DEDUP_EPS
            and math.dist(last[-1], seam) <= DEDUP_EPS
        ):
            joined = last + first[1:]
            return [joined] + pieces[1:-1]
    return pieces


def _pieces_to_elements(
    element: MapElement, pieces: List[List[XY]], min_length: float
) -> List[MapElement]:
    out = []
    for k, piece in enumerate(pieces):
        if polyline_length(piece) < max(min_length, DEDUP_EPS):
            continue
        out.append(
            MapElement(
                id=f"{element.id}#{k}",
                cls=element.cls,
                points=tuple(Point2(x, y) for x, y in piece),
                closed=False,
                confidence=element.confidence,
            )
        )
    return out


def clip_to_rect(
    element: MapElement, rect: Rect, min_length: float = 1.0
) -> List[MapElement]:
    """Clip an element to a rectangle, splitting into maximal inside pieces.

    Closed rings fully inside come back unchanged; partially clipped rings
    produce open boundary polylines. Pieces shorter than ``min_length`` are
    discarded.
    """
    rect = Rect(*rect)
    if rect.is_degenerate():
        raise InvalidGeometry(f"degenerate rectangle {rect}")
    pts = element.xy()
    if all(rect.contains(x, y) for x, y in pts):
        return [element]
    if element.closed:
        # Start the ring walk at an outside vertex so inside chains never
        # wrap around the seam (one must exist: not all points are inside,
        # and the rect is convex).
        k = next(i for i, (x, y) in enumerate(pts) if not rect.contains(x, y))
        path = list(pts[k:] + pts[:k]) + [pts[k]]
    else:
        path = list(pts)
    return _pieces_to_elements(element, _chain_pieces(path, rect, True), min_length)


def clip_out_rect(element: MapElement, rect: Rect) -> List[MapElement]:
    """Complement of :func:`clip_to_rect`: the pieces outside rect.

    No minimum-length filter: merging relies on every surviving scrap of the
    base map outside an accepted cell being preserved exactly.
    """
    rect = Rect(*rect)
    if rect.is_degenerate():
        raise InvalidGeometry(f"degenerate rectangle {rect}")
    pts = element.xy()
    closure = [(pts[-1], pts[0])] if element.closed else []
    spans = [
        _clip_segment_to_rect(a, b, rect)
        for a, b in list(zip(pts, pts[1:])) + closure
    ]
    if all(s is None or s[0] >= s[1] for s in spans):
        return [element]
    if element.closed:
        inside = next((i for i, (x, y) in enumerate(pts) if rect.contains(x, y)), None)
        if inside is not None:
            path = list(pts[inside:] + pts[:inside]) + [pts[inside]]
            pieces = _chain_pieces(path, rect, False)
        else:
            path = list(pts) + [pts[0]]
            pieces = _merge_ring_seam(_chain_pieces(path, rect, False), pts[0])
    else:
        pieces = _chain_pieces(pts, rect, False)
    return _pieces_to_elements(element, pieces, 0.0)


def densify_polyline(points: Sequence[XY], step: float, closed: bool = False) -> np.ndarray:
    """Sample points every ``step`` meters of arc length (endpoints included).

    Returns an (n, 2) array; rings include the closure segment.
    """
    if step <= 0:
        raise InvalidGeometry(f"sample step must be > 0, got {step}")
    path = list(points) + ([points[0]] if closed else [])
    pts = np.asarray([(p[0], p[1]) for p in path], dtype=float)
    if len(pts) < 2:
        return pts
    cum = _cumulative_lengths(pts)
    total = cum[-1]
    if total <= DEDUP_EPS:
        return pts[:1]
    n = max(int(math.ceil(total / step)), 1)
    targets = np.linspace(0.0, total, n + 1)
    if closed:
        targets = targets[:-1]
    xs = np.interp(targets, cum, pts[:, 0])
    ys = np.interp(targets, cum, pts[:, 1])
    return np.column_stack([xs, ys])


def point_segment_distance(p: XY, a: XY, b: XY) -> float:
    px, py = p[0] - a[0], p[1] - a[1]
    dx, dy = b[0] - a[0], b[1] - a[1]
    seg2 = dx * dx + dy * dy
    if seg2 <= DEDUP_EPS * DEDUP_EPS:
        return math.hypot(px, py)
    t = max(0.0, min(1.0, (px * dx + py * dy) / seg2))
    return math.hypot(px - t * dx, py - t * dy)


def point_polyline_distance(p: XY, points: Sequence[XY], closed: bool = False) -> float:
    path = list(points) + ([points[0]] if closed else [])
    return min(point_segment_distance(p, a, b) for a, b in zip(path, path[1:]))


def douglas_peucker(points: Sequence[XY], tol: float) -> List[XY]:
    """Iterative Douglas-Peucker simplification keeping both endpoints."""
    pts = list(points)
    if len(pts) <= 2 or tol <= 0:
        return pts
    keep = [False] * len(pts)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        a, b = pts[lo], pts[hi]
        best_d, best_i = -1.0, -1
        for i in range(lo + 1, hi):
            d = point_segment_distance(pts[i], a, b)
            if d > best_d:
                best_d, best_i = d, i
        if best_d > tol:
            keep[best_i] = True
            stack.append((lo, best_i))
            stack.append((best_i, hi))
    return [p for p, k in zip(pts, keep) if k]
