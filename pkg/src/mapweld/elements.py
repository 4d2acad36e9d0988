"""Domain types: map classes, points, elements, maps, poses, and frames.

All types are immutable values after construction; validation happens in
``__post_init__`` and raises :class:`~mapweld.errors.InvalidGeometry` on
violated invariants.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple, Union

from .errors import InvalidGeometry

# Consecutive points closer than this are considered duplicates.
DEDUP_EPS = 1e-9


class MapClass(str, enum.Enum):
    BOUNDARY = "boundary"
    DIVIDER = "divider"
    CROSSWALK = "crosswalk"


MAP_CLASSES: Tuple[MapClass, ...] = (MapClass.BOUNDARY, MapClass.DIVIDER, MapClass.CROSSWALK)


class Point2(NamedTuple):
    x: float
    y: float


class Point3(NamedTuple):
    x: float
    y: float
    z: float


Point = Union[Point2, Point3]


class Rect(NamedTuple):
    """Axis-aligned rectangle [xmin, xmax] x [ymin, ymax] in meters."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return (
            self.xmin - tol <= x <= self.xmax + tol
            and self.ymin - tol <= y <= self.ymax + tol
        )

    def is_degenerate(self) -> bool:
        return self.xmax <= self.xmin or self.ymax <= self.ymin

    def union(self, other: "Rect") -> "Rect":
        return Rect(
            min(self.xmin, other.xmin),
            min(self.ymin, other.ymin),
            max(self.xmax, other.xmax),
            max(self.ymax, other.ymax),
        )


def _is_finite(v: float) -> bool:
    return math.isfinite(v)


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if not math.isfinite(yaw):
        raise InvalidGeometry(f"non-finite yaw: {yaw}")
    wrapped = math.fmod(yaw, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    elif wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2:
    """Ego pose in the map frame: x/y meters, yaw CCW radians from map +x."""

    x: float
    y: float
    yaw: float
    timestamp: float = 0.0

    def __post_init__(self):
        if not (_is_finite(self.x) and _is_finite(self.y) and _is_finite(self.timestamp)):
            raise InvalidGeometry(f"non-finite pose: {self}")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))


@dataclass(frozen=True)
class MapElement:
    """One vectorized map feature: class plus ordered 2D/3D point sequence.

    ``closed`` marks polygon rings (crosswalks, loop boundaries); the first
    point is never repeated at the end, closure is implicit.
    """

    id: str
    cls: MapClass
    points: Tuple[Point, ...]
    closed: bool = False
    confidence: Optional[float] = None

    def __post_init__(self):
        if not self.id:
            raise InvalidGeometry("element id must be non-empty")
        pts = tuple(
            Point3(*p) if len(p) == 3 else Point2(*p) for p in self.points
        )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cls", MapClass(self.cls))
        if len(pts) < 2:
            raise InvalidGeometry(f"element {self.id}: needs >= 2 points, got {len(pts)}")
        dims = {len(p) for p in pts}
        if len(dims) != 1:
            raise InvalidGeometry(f"element {self.id}: mixed 2D/3D points")
        for p in pts:
            if not all(_is_finite(v) for v in p):
                raise InvalidGeometry(f"element {self.id}: non-finite point {p}")
        for a, b in zip(pts, pts[1:]):
            if math.dist(a[:2], b[:2]) <= DEDUP_EPS and (
                len(a) == 2 or abs(a[2] - b[2]) <= DEDUP_EPS
            ):
                raise InvalidGeometry(f"element {self.id}: consecutive duplicate point {a}")
        if self.closed and math.dist(pts[0][:2], pts[-1][:2]) <= DEDUP_EPS:
            raise InvalidGeometry(
                f"element {self.id}: closed ring must not repeat its first point"
            )
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise InvalidGeometry(f"element {self.id}: confidence {self.confidence} not in [0,1]")

    @property
    def is_3d(self) -> bool:
        return len(self.points[0]) == 3

    def xy(self) -> Tuple[Tuple[float, float], ...]:
        return tuple((p.x, p.y) for p in self.points)


@dataclass(frozen=True)
class VectorMap:
    """A set of map elements in one frame, with axis-aligned bounds."""

    elements: Tuple[MapElement, ...]
    bounds: Rect
    frame_id: str = "map"

    # Points may stick out of bounds by up to this much.
    BOUNDS_SLACK = 1.0

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "bounds", Rect(*self.bounds))
        ids = [el.id for el in self.elements]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidGeometry(f"duplicate element ids: {dupes}")
        for el in self.elements:
            for p in el.points:
                if not self.bounds.contains(p.x, p.y, tol=self.BOUNDS_SLACK):
                    raise InvalidGeometry(
                        f"element {el.id}: point ({p.x}, {p.y}) outside bounds {self.bounds}"
                    )

    @classmethod
    def from_elements(
        cls,
        elements: Sequence[MapElement],
        frame_id: str = "map",
        pad: float = 0.0,
    ) -> "VectorMap":
        """Build a map whose bounds cover all element points, padded by ``pad``."""
        elements = tuple(elements)
        if not elements:
            return cls(elements=(), bounds=Rect(0.0, 0.0, 1.0, 1.0), frame_id=frame_id)
        xs = [p.x for el in elements for p in el.points]
        ys = [p.y for el in elements for p in el.points]
        bounds = Rect(min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad)
        return cls(elements=elements, bounds=bounds, frame_id=frame_id)

    def of_class(self, cls_: MapClass) -> Tuple[MapElement, ...]:
        return tuple(el for el in self.elements if el.cls is cls_)

    def get(self, element_id: str) -> Optional[MapElement]:
        for el in self.elements:
            if el.id == element_id:
                return el
        return None


@dataclass(frozen=True)
class PerceptionWindow:
    """Ego-frame observation extent: x in [-backward, forward], y in [-right, left]."""

    forward: float = 30.0
    backward: float = 30.0
    left: float = 15.0
    right: float = 15.0

    def __post_init__(self):
        if min(self.forward, self.backward, self.left, self.right) <= 0:
            raise InvalidGeometry(f"window extents must be > 0: {self}")

    def rect(self) -> Rect:
        return Rect(-self.backward, -self.right, self.forward, self.left)


@dataclass(frozen=True)
class FramePrediction:
    """One timestamped pose plus ego-frame elements inside the perception window."""

    pose: Pose2
    elements: Tuple[MapElement, ...]
    window: PerceptionWindow = field(default_factory=PerceptionWindow)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        rect = self.window.rect()
        for el in self.elements:
            for p in el.points:
                if not rect.contains(p.x, p.y, tol=DEDUP_EPS):
                    raise InvalidGeometry(
                        f"frame t={self.pose.timestamp}: element {el.id} point "
                        f"({p.x}, {p.y}) outside perception window {rect}"
                    )
