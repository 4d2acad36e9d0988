"""Chamfer distance, instance matching, and average-precision evaluation.

Two distances live here on purpose. ``chamfer_eq2`` is the squared-norm
point-set form kept as a diagnostic; ``matching_distance`` is the plain-meter
symmetric average actually compared against the {0.5, 1.0, 1.5} m thresholds,
so two identical lines offset by d meters score exactly d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .elements import MAP_CLASSES, MapClass, MapElement, Point2, Rect, VectorMap
from .errors import ClassMismatch, EmptySet, FrameMismatch
from .geometry import clip_to_rect, densify_polyline


@dataclass(frozen=True)
class ChamferParams:
    """Polylines densify to point sets at this arc-length spacing."""

    sample_step: float = 0.1

    def __post_init__(self):
        if self.sample_step <= 0:
            raise ValueError(f"sample_step must be > 0, got {self.sample_step}")


@dataclass(frozen=True)
class ApThresholds:
    thresholds: Tuple[float, ...] = (0.5, 1.0, 1.5)

    def __post_init__(self):
        ts = tuple(float(t) for t in self.thresholds)
        if not ts or any(t <= 0 for t in ts) or any(a >= b for a, b in zip(ts, ts[1:])):
            raise ValueError(f"thresholds must be strictly increasing and > 0: {ts}")
        object.__setattr__(self, "thresholds", ts)


def chamfer_eq2(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric squared-norm Chamfer distance between two point sets."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise EmptySet("chamfer distance needs two non-empty point sets")
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    return float(np.mean(d_ab**2) + np.mean(d_ba**2))


def _densify(el: MapElement, params: ChamferParams) -> np.ndarray:
    return densify_polyline(el.xy(), params.sample_step, closed=el.closed)


def matching_distance(
    pred: MapElement, gt: MapElement, params: ChamferParams = ChamferParams()
) -> float:
    """Symmetric mean nearest-neighbor distance in meters between two elements."""
    if pred.cls is not gt.cls:
        raise ClassMismatch(f"{pred.id} is {pred.cls.value}, {gt.id} is {gt.cls.value}")
    a = _densify(pred, params)
    b = _densify(gt, params)
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


class Match(NamedTuple):
    pred_id: str
    gt_id: str
    distance: float


def _confidence(el: MapElement) -> float:
    return 1.0 if el.confidence is None else el.confidence


def _sweep_order(preds: Sequence[MapElement]) -> List[MapElement]:
    return sorted(preds, key=lambda el: (-_confidence(el), el.id))


def _greedy_sweep(
    preds: Sequence[MapElement],
    gts: Sequence[MapElement],
    theta: float,
    params: ChamferParams,
) -> List[Tuple[MapElement, Optional[MapElement], Optional[float]]]:
    """Confidence-ordered greedy assignment; ties break by ascending id."""
    ordered = _sweep_order(preds)
    gts = sorted(gts, key=lambda el: el.id)
    dense_p = {el.id: _densify(el, params) for el in ordered}
    dense_g = {el.id: _densify(el, params) for el in gts}
    trees_g = {el.id: cKDTree(dense_g[el.id]) for el in gts}
    taken = set()
    out = []
    for p in ordered:
        a = dense_p[p.id]
        tree_a = cKDTree(a)
        best: Tuple[float, Optional[MapElement]] = (math.inf, None)
        for g in gts:
            if g.id in taken:
                continue
            d_ab = trees_g[g.id].query(a)[0]
            d_ba = tree_a.query(dense_g[g.id])[0]
            d = 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))
            if d < best[0]:
                best = (d, g)
        if best[1] is not None and best[0] < theta:
            taken.add(best[1].id)
            out.append((p, best[1], best[0]))
        else:
            out.append((p, None, None))
    return out


def match_instances(
    preds: Sequence[MapElement],
    gts: Sequence[MapElement],
    theta: float,
    params: ChamferParams = ChamferParams(),
) -> List[Match]:
    """Matched (prediction, ground truth, distance) triples under threshold theta."""
    classes = {el.cls for el in preds} | {el.cls for el in gts}
    if len(classes) > 1:
        raise ClassMismatch(f"mixed classes in matching: {sorted(c.value for c in classes)}")
    sweep = _greedy_sweep(preds, gts, theta, params)
    return [Match(p.id, g.id, d) for p, g, d in sweep if g is not None]


def average_precision(
    preds: Sequence[MapElement],
    gts: Sequence[MapElement],
    theta: float,
    params: ChamferParams = ChamferParams(),
) -> float:
    """All-point-interpolated AP for one class at one matching threshold."""
    if not gts:
        return 1.0 if not preds else 0.0
    if not preds:
        return 0.0
    sweep = _greedy_sweep(preds, gts, theta, params)
    tp = 0
    match_precisions = []
    for rank, (_, g, _) in enumerate(sweep, start=1):
        if g is not None:
            tp += 1
            match_precisions.append(tp / rank)
    if not match_precisions:
        return 0.0
    # Monotone envelope: best precision at this recall level or beyond.
    envelope = np.maximum.accumulate(match_precisions[::-1])[::-1]
    return float(np.sum(envelope) / len(gts))


@dataclass
class EvalReport:
    """Per-class AP at each threshold, per-class means, and the class-mean mAP."""

    per_class: Dict[MapClass, Dict[float, float]]
    class_means: Dict[MapClass, float]
    mean_ap: float
    matches: Dict[float, List[Match]] = field(default_factory=dict)
    present_classes: Tuple[MapClass, ...] = ()

    def map_at(self, theta: float) -> float:
        """Mean AP over the three classes at one fixed threshold."""
        return float(np.mean([self.per_class[c][theta] for c in MAP_CLASSES]))

    def present_map(self) -> Optional[float]:
        """Class-mean AP over only the classes present on either side.

        None when no class is present at all (a vacuous comparison).
        """
        if not self.present_classes:
            return None
        return float(np.mean([self.class_means[c] for c in self.present_classes]))


def evaluate(
    pred_map: VectorMap,
    gt_map: VectorMap,
    thresholds: ApThresholds = ApThresholds(),
    params: ChamferParams = ChamferParams(),
) -> EvalReport:
    """Class-by-class AP across all thresholds; classes absent from both sides
    count as vacuously perfect so empty countryside never drags the score."""
    if pred_map.frame_id != gt_map.frame_id:
        raise FrameMismatch(f"frames differ: {pred_map.frame_id!r} vs {gt_map.frame_id!r}")
    per_class: Dict[MapClass, Dict[float, float]] = {}
    matches: Dict[float, List[Match]] = {t: [] for t in thresholds.thresholds}
    present = []
    for cls_ in MAP_CLASSES:
        preds = pred_map.of_class(cls_)
        gts = gt_map.of_class(cls_)
        if preds or gts:
            present.append(cls_)
        per_class[cls_] = {}
        for theta in thresholds.thresholds:
            if not preds and not gts:
                per_class[cls_][theta] = 1.0
                continue
            per_class[cls_][theta] = average_precision(preds, gts, theta, params)
            matches[theta].extend(match_instances(preds, gts, theta, params))
    class_means = {c: float(np.mean(list(per_class[c].values()))) for c in MAP_CLASSES}
    mean_ap = float(np.mean([class_means[c] for c in MAP_CLASSES]))
    return EvalReport(
        per_class=per_class,
        class_means=class_means,
        mean_ap=mean_ap,
        matches=matches,
        present_classes=tuple(present),
    )


def lattice_cells(bounds: Rect, anchor: Point2, cell_size: float):
    """Yield (ci, cj, rect) for every lattice cell overlapping ``bounds``.

    The lattice is anchored at ``anchor``; indices may be negative when the
    bounds extend below the anchor corner.
    """
    ci0 = math.floor((bounds.xmin - anchor.x) / cell_size)
    cj0 = math.floor((bounds.ymin - anchor.y) / cell_size)
    ci1 = math.ceil((bounds.xmax - anchor.x) / cell_size)
    cj1 = math.ceil((bounds.ymax - anchor.y) / cell_size)
    for ci in range(ci0, max(ci1, ci0 + 1)):
        for cj in range(cj0, max(cj1, cj0 + 1)):
            rect = Rect(
                anchor.x + ci * cell_size,
                anchor.y + cj * cell_size,
                anchor.x + (ci + 1) * cell_size,
                anchor.y + (cj + 1) * cell_size,
            )
            yield ci, cj, rect


@dataclass
class CellEval:
    ci: int
    cj: int
    rect: Rect
    report: EvalReport
    cell_map: float  # class-mean AP over classes present in the cell
    pred_elements: Tuple[MapElement, ...]
    gt_elements: Tuple[MapElement, ...]

    @property
    def cell_id(self) -> str:
        return f"{self.ci}_{self.cj}"


def evaluate_per_cell(
    pred_map: VectorMap,
    gt_map: VectorMap,
    cell_size: float = 30.0,
    thresholds: ApThresholds = ApThresholds(),
    params: ChamferParams = ChamferParams(),
    anchor: Optional[Point2] = None,
    bounds: Optional[Rect] = None,
) -> Tuple[List[CellEval], List[str]]:
    """Clip both maps to a 30 m lattice and evaluate each cell.

    Returns evaluated cells plus the ids of vacuous cells (empty on both
    sides after clipping). Per-cell scores average only over classes present
    in the cell, so a lone deleted crosswalk drives its cell to zero instead
    of being diluted by vacuous classes.
    """
    if pred_map.frame_id != gt_map.frame_id:
        raise FrameMismatch(f"frames differ: {pred_map.frame_id!r} vs {gt_map.frame_id!r}")
    anchor = anchor or Point2(gt_map.bounds.xmin, gt_map.bounds.ymin)
    lattice_bounds = bounds or gt_map.bounds
    cells: List[CellEval] = []
    vacuous: List[str] = []
    for ci, cj, rect in lattice_cells(lattice_bounds, anchor, cell_size):
        preds = tuple(
            piece for el in pred_map.elements for piece in clip_to_rect(el, rect)
        )
        gts = tuple(
            piece for el in gt_map.elements for piece in clip_to_rect(el, rect)
        )
        if not preds and not gts:
            vacuous.append(f"{ci}_{cj}")
            continue
        cell_pred = VectorMap.from_elements(preds, frame_id=pred_map.frame_id, pad=1.0)
        cell_gt = VectorMap.from_elements(gts, frame_id=gt_map.frame_id, pad=1.0)
        report = evaluate(cell_pred, cell_gt, thresholds, params)
        cell_map = report.present_map()
        assert cell_map is not None
        cells.append(
            CellEval(
                ci=ci,
                cj=cj,
                rect=rect,
                report=report,
                cell_map=cell_map,
                pred_elements=preds,
                gt_elements=gts,
            )
        )
    return cells, vacuous
