"""Per-class accumulation grids: rasterization, counting, thresholding, export.

Grid cells are half-open squares: cell (i, j) covers
[origin.x + i*res, origin.x + (i+1)*res) x [origin.y + j*res, ...).
Count layers are stored as one (W, H) int32 array per map class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .elements import MAP_CLASSES, FramePrediction, MapClass, Point2, Rect
from .errors import IoError, ParseError
from .geometry import XY, _clip_segment_to_rect, _lerp, transform_frame

Cell = Tuple[int, int]
PathLike = Union[str, Path]


@dataclass(frozen=True)
class GridSpec:
    origin: Point2
    width: int
    height: int
    resolution: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "origin", Point2(*self.origin))
        if self.resolution <= 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    def cell_center(self, i: int, j: int) -> Point2:
        return Point2(
            self.origin.x + (i + 0.5) * self.resolution,
            self.origin.y + (j + 0.5) * self.resolution,
        )

    def extent(self) -> Rect:
        return Rect(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width * self.resolution,
            self.origin.y + self.height * self.resolution,
        )

    def in_range(self, i: int, j: int) -> bool:
        return 0 <= i < self.width and 0 <= j < self.height


def point_to_cell(spec: GridSpec, p: XY) -> Optional[Cell]:
    """Floor-quantize a map-frame point; None marks out-of-bounds."""
    i = math.floor((p[0] - spec.origin.x) / spec.resolution)
    j = math.floor((p[1] - spec.origin.y) / spec.resolution)
    if not spec.in_range(i, j):
        return None
    return (i, j)


def _supercover_segment(spec: GridSpec, a: XY, b: XY) -> Iterable[Cell]:
    """All grid cells traversed by segment a->b (continuous supercover walk).

    Steps one axis at a time; an exact corner crossing inserts the x-side
    cell before stepping diagonally, so the walk never leaves diagonal gaps.
    Cells outside the grid are yielded too; callers filter.
    """
    res = spec.resolution
    ax = (a[0] - spec.origin.x) / res
    ay = (a[1] - spec.origin.y) / res
    bx = (b[0] - spec.origin.x) / res
    by = (b[1] - spec.origin.y) / res
    i, j = math.floor(ax), math.floor(ay)
    i_end, j_end = math.floor(bx), math.floor(by)
    yield (i, j)
    dx, dy = bx - ax, by - ay
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    # Parametric distance to the next vertical / horizontal cell boundary.
    if dx != 0.0:
        nx = i + 1 if sx > 0 else i
        t_max_x = (nx - ax) / dx
        t_dx = abs(1.0 / dx)
    else:
        t_max_x, t_dx = math.inf, math.inf
    if dy != 0.0:
        ny = j + 1 if sy > 0 else j
        t_max_y = (ny - ay) / dy
        t_dy = abs(1.0 / dy)
    else:
        t_max_y, t_dy = math.inf, math.inf
    max_steps = 2 * (abs(i_end - i) + abs(j_end - j)) + 4
    for _ in range(max_steps):
        if i == i_end and j == j_end:
            return
        if (i - i_end) * sx > 0 or (j - j_end) * sy > 0:
            return  # float drift overshot the end cell
        if t_max_x < t_max_y:
            i += sx
            t_max_x += t_dx
        elif t_max_y < t_max_x:
            j += sy
            t_max_y += t_dy
        else:
            # Exact corner crossing: visit the x-step cell, then finish the
            # diagonal move so the path stays 4-connected.
            i += sx
            yield (i, j)
            j += sy
            t_max_x += t_dx
            t_max_y += t_dy
        yield (i, j)


def rasterize_polyline(spec: GridSpec, points: Sequence[XY]) -> Set[Cell]:
    """The set of in-grid cells the polyline passes through (supercover)."""
    pts = [(p[0], p[1]) for p in points]
    if len(pts) == 1:
        c = point_to_cell(spec, pts[0])
        return {c} if c else set()
    cells: Set[Cell] = set()
    # Clip against a one-cell-padded extent first so segments that wander far
    # off-grid do not cost a long walk.
    ext = spec.extent()
    pad = spec.resolution
    clip_rect = Rect(ext.xmin - pad, ext.ymin - pad, ext.xmax + pad, ext.ymax + pad)
    for a, b in zip(pts, pts[1:]):
        if math.dist(a, b) <= 1e-12:
            c = point_to_cell(spec, a)
            if c:
                cells.add(c)
            continue
        inside_a = clip_rect.contains(*a)
        inside_b = clip_rect.contains(*b)
        if not (inside_a and inside_b):
            span = _clip_segment_to_rect(a, b, clip_rect)
            if span is None:
                continue
            t0, t1 = span
            a2 = a if t0 == 0.0 else _lerp(a, b, t0)
            b2 = b if t1 == 1.0 else _lerp(a, b, t1)
        else:
            a2, b2 = a, b
        for cell in _supercover_segment(spec, a2, b2):
            if spec.in_range(*cell):
                cells.add(cell)
    return cells


@dataclass
class AccumulationGrid:
    """Observation counts per class; shape (n_classes, W, H), non-negative."""

    spec: GridSpec
    counts: np.ndarray

    @classmethod
    def zeros(cls, spec: GridSpec) -> "AccumulationGrid":
        return cls(spec=spec, counts=np.zeros((len(MAP_CLASSES), spec.width, spec.height), dtype=np.int32))

    def layer(self, cls_: MapClass) -> np.ndarray:
        return self.counts[MAP_CLASSES.index(cls_)]

    def add(self, other: "AccumulationGrid") -> "AccumulationGrid":
        if other.spec != self.spec:
            raise ValueError("cannot add grids with different specs")
        return AccumulationGrid(spec=self.spec, counts=self.counts + other.counts)


@dataclass
class DenseMask:
    """Boolean mask per class; same spec as the source grid."""

    spec: GridSpec
    bits: np.ndarray

    def layer(self, cls_: MapClass) -> np.ndarray:
        return self.bits[MAP_CLASSES.index(cls_)]


def default_grid_spec(
    frames: Sequence[FramePrediction], resolution: float = 0.5, pad: float = 5.0
) -> GridSpec:
    """Grid covering all transformed frame elements, padded and snapped to cells."""
    xs: List[float] = []
    ys: List[float] = []
    for fp in frames:
        for el in transform_frame(fp):
            for p in el.points:
                xs.append(p.x)
                ys.append(p.y)
    if not xs:
        return GridSpec(origin=Point2(0.0, 0.0), width=1, height=1, resolution=resolution)
    x0 = math.floor((min(xs) - pad) / resolution) * resolution
    y0 = math.floor((min(ys) - pad) / resolution) * resolution
    width = max(1, math.ceil((max(xs) + pad - x0) / resolution))
    height = max(1, math.ceil((max(ys) + pad - y0) / resolution))
    return GridSpec(origin=Point2(x0, y0), width=width, height=height, resolution=resolution)


def accumulate(
    frames: Sequence[FramePrediction], spec: Optional[GridSpec] = None, resolution: float = 0.5
) -> AccumulationGrid:
    """Count, per class, how many frame-elements touch each cell.

    Each (frame, element) pair contributes at most 1 to a cell, no matter how
    many of its segments cross that cell.
    """
    if spec is None:
        spec = default_grid_spec(frames, resolution=resolution)
    grid = AccumulationGrid.zeros(spec)
    for fp in frames:
        for el in transform_frame(fp):
            pts = list(el.xy())
            if el.closed:
                pts.append(pts[0])
            cells = rasterize_polyline(spec, pts)
            if not cells:
                continue
            layer = grid.layer(el.cls)
            idx = np.fromiter((c[0] for c in cells), dtype=np.intp, count=len(cells))
            jdx = np.fromiter((c[1] for c in cells), dtype=np.intp, count=len(cells))
            layer[idx, jdx] += 1
    return grid


def threshold_mask(grid: AccumulationGrid, threshold: int) -> DenseMask:
    """Bit set iff count strictly exceeds the threshold."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    return DenseMask(spec=grid.spec, bits=grid.counts > threshold)


# --- 16-bit PGM + sidecar export ------------------------------------------

def _spec_to_obj(spec: GridSpec) -> dict:
    return {
        "origin": [spec.origin.x, spec.origin.y],
        "resolution": spec.resolution,
        "width": spec.width,
        "height": spec.height,
    }


def _spec_from_obj(obj: dict, where: str) -> GridSpec:
    try:
        return GridSpec(
            origin=Point2(float(obj["origin"][0]), float(obj["origin"][1])),
            width=int(obj["width"]),
            height=int(obj["height"]),
            resolution=float(obj["resolution"]),
        )
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ParseError(f"{where}: bad grid sidecar: {e}") from None


def write_pgm16(layer: np.ndarray, path: PathLike) -> None:
    """Write one (W, H) count layer as a binary 16-bit PGM.

    Image row 0 is the top of the picture = the highest j row, so the map
    renders north-up.
    """
    w, h = layer.shape
    img = np.clip(layer, 0, 65535).astype(">u2").T[::-1]
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
            fh.write(img.tobytes())
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None


def read_pgm16(path: PathLike) -> np.ndarray:
    """Inverse of :func:`write_pgm16`; returns a (W, H) uint16 array."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM")
    try:
        w, h = (int(v) for v in parts[1].split())
        maxval = int(parts[2])
    except ValueError:
        raise ParseError(f"{path}: bad PGM header") from None
    if maxval != 65535:
        raise ParseError(f"{path}: expected 16-bit PGM, maxval {maxval}")
    img = np.frombuffer(parts[3][: w * h * 2], dtype=">u2").reshape(h, w)
    return img[::-1].T.astype(np.uint16)


def grid_paths(stem: PathLike) -> Tuple[Path, Dict[MapClass, Path]]:
    stem = Path(stem)
    sidecar = stem.with_name(stem.name + ".grid.json")
    layers = {c: stem.with_name(f"{stem.name}.{c.value}.pgm") for c in MAP_CLASSES}
    return sidecar, layers


def save_grid(grid: AccumulationGrid, stem: PathLike) -> None:
    """Write ``<stem>.<class>.pgm`` per class plus ``<stem>.grid.json``."""
    sidecar, layers = grid_paths(stem)
    sidecar.parent.mkdir(parents=True, exist_ok=True)
    sidecar.write_text(json.dumps(_spec_to_obj(grid.spec), indent=2) + "\n", encoding="utf-8")
    for cls_, path in layers.items():
        write_pgm16(grid.layer(cls_), path)


def load_grid(stem: PathLike) -> AccumulationGrid:
    sidecar, layers = grid_paths(stem)
    if not sidecar.exists():
        raise ParseError(f"missing grid sidecar {sidecar}")
    spec = _spec_from_obj(json.loads(sidecar.read_text(encoding="utf-8")), str(sidecar))
    counts = np.zeros((len(MAP_CLASSES), spec.width, spec.height), dtype=np.int32)
    for k, (cls_, path) in enumerate(layers.items()):
        if not path.exists():
            raise ParseError(f"missing grid layer {path}")
        layer = read_pgm16(path)
        if layer.shape != (spec.width, spec.height):
            raise ParseError(f"{path}: layer shape {layer.shape} != spec {spec.width}x{spec.height}")
        counts[k] = layer
    return AccumulationGrid(spec=spec, counts=counts)


def render_heatmap(grid: AccumulationGrid, cls_: MapClass, path: PathLike) -> None:
    """Export one class layer as a 16-bit PGM with a GridSpec sidecar."""
    path = Path(path)
    write_pgm16(grid.layer(cls_), path)
    sidecar = path.with_suffix("").with_name(path.stem + ".grid.json")
    try:
        sidecar.write_text(json.dumps(_spec_to_obj(grid.spec), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {sidecar}: {e}") from None
