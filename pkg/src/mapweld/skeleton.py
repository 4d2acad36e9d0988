"""Thin dense masks to 1-cell skeletons and trace them into vector polylines.

Thinning is Zhang-Suen, iterated to a fixpoint per class layer. Tracing walks
the skeleton as a graph whose nodes are endpoints/junctions and whose edges
are maximal degree-2 cell paths; pure cycles get a row-major anchor node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
from scipy import ndimage

from .elements import MAP_CLASSES, MapClass, MapElement, Point2, VectorMap
from .grid import Cell, DenseMask, GridSpec, accumulate, threshold_mask
from .geometry import douglas_peucker, polyline_length

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class Skeleton:
    spec: GridSpec
    bits: np.ndarray  # (n_classes, W, H) bool

    def layer(self, cls_: MapClass) -> np.ndarray:
        return self.bits[MAP_CLASSES.index(cls_)]


def _neighbor_stack(img: np.ndarray) -> np.ndarray:
    """Stack of the 8 neighbor planes P2..P9 (N, NE, E, SE, S, SW, W, NW).

    ``img`` is indexed [i, j] with i along +x and j along +y, so "north" is
    j+1. Input must be zero-padded by the caller.
    """
    n = img[1:-1, 2:]
    ne = img[2:, 2:]
    e = img[2:, 1:-1]
    se = img[2:, :-2]
    s = img[1:-1, :-2]
    sw = img[:-2, :-2]
    w = img[:-2, 1:-1]
    nw = img[:-2, 2:]
    return np.stack([n, ne, e, se, s, sw, w, nw])


def _protect_doomed_components(inner: np.ndarray, cond: np.ndarray) -> None:
    """Clear one canonical candidate per component the deletion would erase.

    Simultaneous sub-iteration deletes can consume a whole small component
    (a blob that has shrunk to a 2x2 square satisfies every condition at
    once); keeping the row-major-first pixel preserves the component count.
    """
    labels, n = ndimage.label(inner, structure=_EIGHT_CONNECTED)
    if n == 0:
        return
    del_counts = np.bincount(labels[cond], minlength=n + 1)
    tot_counts = np.bincount(labels[labels > 0], minlength=n + 1)
    for comp in np.flatnonzero((del_counts == tot_counts) & (tot_counts > 0)):
        cells = np.argwhere(labels == comp)
        keep = cells[np.lexsort((cells[:, 0], cells[:, 1]))[0]]
        cond[keep[0], keep[1]] = False


def _thin_layer(bits: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning of one boolean layer to its fixpoint."""
    img = np.pad(bits.astype(np.uint8), 1)
    while True:
        changed = False
        for phase in (0, 1):
            nb = _neighbor_stack(img)
            p2, p3, p4, p5, p6, p7, p8, p9 = nb
            b = nb.sum(axis=0)
            seq = np.stack([p2, p3, p4, p5, p6, p7, p8, p9, p2])
            a = ((seq[:-1] == 0) & (seq[1:] == 1)).sum(axis=0)
            core = (img[1:-1, 1:-1] == 1) & (b >= 2) & (b <= 6) & (a == 1)
            if phase == 0:
                cond = core & (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond = core & (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            if cond.any():
                _protect_doomed_components(img[1:-1, 1:-1], cond)
            if cond.any():
                img[1:-1, 1:-1][cond] = 0
                changed = True
        if not changed:
            return img[1:-1, 1:-1].astype(bool)


def skeletonize(mask: DenseMask) -> Skeleton:
    bits = np.stack([_thin_layer(mask.bits[k]) for k in range(mask.bits.shape[0])])
    return Skeleton(spec=mask.spec, bits=bits)


# --- tracing ----------------------------------------------------------------

# Fixed probe order for deterministic walks: orthogonal first, row-major-ish.
_DIRS = ((0, -1), (-1, 0), (1, 0), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1))


def _adjacency(cells: Set[Cell]) -> Dict[Cell, List[Cell]]:
    """8-neighborhood adjacency with redundant diagonal links pruned.

    A diagonal link is redundant when either orthogonal corner cell between
    the two is also set; pruning keeps staircase runs degree-2 instead of
    spawning a junction at every step.
    """
    adj: Dict[Cell, List[Cell]] = {}
    for (i, j) in cells:
        nbrs = []
        for di, dj in _DIRS:
            c = (i + di, j + dj)
            if c not in cells:
                continue
            if di != 0 and dj != 0:
                if (i + di, j) in cells or (i, j + dj) in cells:
                    continue
            nbrs.append(c)
        adj[(i, j)] = nbrs
    return adj


@dataclass
class SkeletonEdge:
    cells: List[Cell]  # full path including both terminal node cells
    closed: bool = False


@dataclass
class LayerGraph:
    nodes: List[Cell] = field(default_factory=list)
    edges: List[SkeletonEdge] = field(default_factory=list)
    isolated: List[Cell] = field(default_factory=list)


@dataclass
class SkeletonGraph:
    spec: GridSpec
    layers: Dict[MapClass, LayerGraph] = field(default_factory=dict)


def _trace_layer(cells: Set[Cell]) -> LayerGraph:
    graph = LayerGraph()
    if not cells:
        return graph
    adj = _adjacency(cells)
    # Row-major ordering: scan rows (j) bottom-up, x within a row.
    order = sorted(cells, key=lambda c: (c[1], c[0]))
    nodes = [c for c in order if len(adj[c]) != 2]
    graph.nodes = list(nodes)
    graph.isolated = [c for c in nodes if len(adj[c]) == 0]
    node_set = set(nodes)
    used_steps: Set[Tuple[Cell, Cell]] = set()
    consumed: Set[Cell] = set()

    def walk(start: Cell, first: Cell) -> SkeletonEdge:
        path = [start, first]
        used_steps.add((start, first))
        prev, cur = start, first
        while cur not in node_set:
            consumed.add(cur)
            nxt = next(c for c in adj[cur] if c != prev)
            path.append(nxt)
            prev, cur = cur, nxt
        used_steps.add((cur, prev))
        return SkeletonEdge(cells=path)

    for n in nodes:
        for di, dj in _DIRS:
            first = (n[0] + di, n[1] + dj)
            if first not in adj[n]:
                continue
            if (n, first) in used_steps or first in consumed:
                continue
            graph.edges.append(walk(n, first))

    # Pure cycles: leftover degree-2 cells; anchor at the row-major minimum.
    leftover = [c for c in order if c not in node_set and c not in consumed]
    seen: Set[Cell] = set()
    for anchor in leftover:
        if anchor in seen:
            continue
        path = [anchor]
        seen.add(anchor)
        prev, cur = anchor, adj[anchor][0]
        while cur != anchor:
            path.append(cur)
            seen.add(cur)
            nxt = next(c for c in adj[cur] if c != prev)
            prev, cur = cur, nxt
        graph.edges.append(SkeletonEdge(cells=path, closed=True))
        graph.nodes.append(anchor)
    return graph


def trace_skeleton(sk: Skeleton) -> SkeletonGraph:
    graph = SkeletonGraph(spec=sk.spec)
    for cls_ in MAP_CLASSES:
        layer = sk.layer(cls_)
        cells = {(int(i), int(j)) for i, j in zip(*np.nonzero(layer))}
        graph.layers[cls_] = _trace_layer(cells)
    return graph


def extract_lines(
    sk: Skeleton,
    min_length: float = 2.0,
    simplify_tol: float = 0.25,
) -> VectorMap:
    """Vectorize a skeleton: one element per graph edge, in map coordinates.

    Cell indices map to cell centers; paths are Douglas-Peucker simplified;
    pieces shorter than ``min_length`` are dropped; cycles come out closed.
    Ids are assigned per class by descending length so that long, confident
    lines rank first in downstream confidence-ordered matching.
    """
    spec = sk.spec
    graph = trace_skeleton(sk)
    elements = []
    for cls_ in MAP_CLASSES:
        candidates = []
        for edge in graph.layers[cls_].edges:
            pts = [spec.cell_center(i, j) for i, j in edge.cells]
            if len(pts) < 2:
                continue
            simplified = douglas_peucker(pts, simplify_tol)
            if edge.closed and len(simplified) < 3:
                continue
            length = polyline_length(simplified, closed=edge.closed)
            if length < min_length:
                continue
            candidates.append((length, simplified, edge.closed))
        candidates.sort(key=lambda c: -c[0])
        for k, (_, pts, closed) in enumerate(candidates):
            elements.append(
                MapElement(
                    id=f"{cls_.value}_{k:03d}",
                    cls=cls_,
                    points=tuple(Point2(p[0], p[1]) for p in pts),
                    closed=closed,
                )
            )
    extent = spec.extent()
    return VectorMap(elements=tuple(elements), bounds=extent, frame_id="map")


def extract_from_frames(
    frames,
    spec: Optional[GridSpec] = None,
    threshold: int = 3,
    min_length: float = 2.0,
    simplify_tol: float = 0.25,
    resolution: float = 0.5,
) -> VectorMap:
    """Full clustering pass: accumulate, threshold, thin, trace, vectorize."""
    grid = accumulate(frames, spec=spec, resolution=resolution)
    mask = threshold_mask(grid, threshold)
    sk = skeletonize(mask)
    return extract_lines(sk, min_length=min_length, simplify_tol=simplify_tol)
