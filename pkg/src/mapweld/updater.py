"""Flag stale 30 m cells, record per-cell accept/reject decisions, and merge
accepted cells into a new map.

Merging preserves the base map exactly outside accepted cells: retained
pieces keep their original cut vertices, and stitching inserts the snap
midpoint between the two joined endpoints (both of which lie on the cell
border, so the bridge never leaves the accepted region).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .elements import MapElement, Point2, Rect, VectorMap
from .errors import FrameMismatch, ParseError, StaleProposal, UndecidedCell, UnknownCell, VersionError
from .fileio import (
    SCHEMA_VERSION,
    atomic_write_bytes,
    element_from_obj,
    element_to_obj,
    map_to_json_bytes,
)
from .geometry import clip_out_rect
from .metrics import ApThresholds, ChamferParams, evaluate_per_cell

PathLike = Union[str, Path]

STITCH_TOLERANCE = 0.75  # endpoint join distance across cell borders, meters
BORDER_EPS = 1e-6


class Decision(str, enum.Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ProposalCell:
    cell_id: str
    rect: Rect
    map_ap: float
    old_elements: Tuple[MapElement, ...]
    new_elements: Tuple[MapElement, ...]
    decision: Decision = Decision.PENDING


@dataclass(frozen=True)
class UpdateProposal:
    base_map_ref: str
    update_threshold: float
    cells: Tuple[ProposalCell, ...]

    def get(self, cell_id: str) -> Optional[ProposalCell]:
        for cell in self.cells:
            if cell.cell_id == cell_id:
                return cell
        return None

    def pending(self) -> List[str]:
        return [c.cell_id for c in self.cells if c.decision is Decision.PENDING]


def map_content_hash(vmap: VectorMap) -> str:
    return hashlib.sha256(map_to_json_bytes(vmap)).hexdigest()


def flag_cells(
    new_elements: VectorMap,
    existing: VectorMap,
    update_threshold: float = 0.3,
    cell_size: float = 30.0,
    thresholds: ApThresholds = ApThresholds(),
    params: ChamferParams = ChamferParams(),
) -> UpdateProposal:
    """Flag lattice cells whose new evidence disagrees with the existing map.

    The lattice anchors at the existing map's bounds corner but extends over
    both maps, so fresh mapping of unmapped territory gets flagged too (with
    score 0, the new-territory rule).
    """
    if new_elements.frame_id != existing.frame_id:
        raise FrameMismatch(
            f"frames differ: {new_elements.frame_id!r} vs {existing.frame_id!r}"
        )
    anchor = Point2(existing.bounds.xmin, existing.bounds.ymin)
    span = existing.bounds.union(new_elements.bounds)
    cells, _vacuous = evaluate_per_cell(
        new_elements,
        existing,
        cell_size=cell_size,
        thresholds=thresholds,
        params=params,
        anchor=anchor,
        bounds=span,
    )
    flagged = []
    for cell in cells:
        map_ap = cell.cell_map
        if not cell.gt_elements and cell.pred_elements:
            map_ap = 0.0  # new territory: nothing to compare against
        if map_ap < update_threshold:
            flagged.append(
                ProposalCell(
                    cell_id=cell.cell_id,
                    rect=cell.rect,
                    map_ap=map_ap,
                    old_elements=cell.gt_elements,
                    new_elements=cell.pred_elements,
                    decision=Decision.PENDING,
                )
            )
    return UpdateProposal(
        base_map_ref=map_content_hash(existing),
        update_threshold=update_threshold,
        cells=tuple(flagged),
    )


def decide(proposal: UpdateProposal, cell_id: str, decision: Decision) -> UpdateProposal:
    """Record a decision for one cell; repeat calls overwrite (last write wins)."""
    decision = Decision(decision)
    if proposal.get(cell_id) is None:
        raise UnknownCell(f"no flagged cell {cell_id!r}")
    cells = tuple(
        replace(c, decision=decision) if c.cell_id == cell_id else c
        for c in proposal.cells
    )
    return replace(proposal, cells=cells)


@dataclass
class MergeResult:
    merged: VectorMap
    provenance: Dict[str, str]  # element id -> kept-old | inserted-new | stitched


def _near_any_border(p: Tuple[float, float], rects: Sequence[Rect], eps: float = BORDER_EPS) -> bool:
    x, y = p[0], p[1]
    for r in rects:
        on_x = (abs(x - r.xmin) <= eps or abs(x - r.xmax) <= eps) and r.ymin - eps <= y <= r.ymax + eps
        on_y = (abs(y - r.ymin) <= eps or abs(y - r.ymax) <= eps) and r.xmin - eps <= x <= r.xmax + eps
        if on_x or on_y:
            return True
    return False


@dataclass
class _Piece:
    key: str
    element: MapElement
    origin: str  # kept-old | inserted-new
    stitched: bool = False


def _join(points_a, points_b) -> Tuple[Point2, ...]:
    """Concatenate two point runs, inserting the midpoint of the seam ends."""
    a_end = points_a[-1]
    b_start = points_b[0]
    mid = Point2(0.5 * (a_end.x + b_start.x), 0.5 * (a_end.y + b_start.y))
    joined = list(points_a)
    if math.dist(joined[-1][:2], mid) > 1e-9:
        joined.append(mid)
    for p in points_b:
        if math.dist(joined[-1][:2], (p.x, p.y)) > 1e-9:
            joined.append(Point2(p.x, p.y))
    return tuple(joined)


def merge(
    existing: VectorMap,
    new_elements: VectorMap,
    proposal: UpdateProposal,
) -> MergeResult:
    """Replace accepted cells with new content, preserving everything else.

    Raises :class:`UndecidedCell` when any flagged cell is still pending.
    """
    pending = proposal.pending()
    if pending:
        raise UndecidedCell(f"undecided cells: {', '.join(pending)}")
    accepted = [c for c in proposal.cells if c.decision is Decision.ACCEPTED]
    if not accepted:
        return MergeResult(
            merged=existing, provenance={el.id: "kept-old" for el in existing.elements}
        )
    rects = [c.rect for c in accepted]

    pieces: List[_Piece] = []
    untouched: List[MapElement] = []
    for el in existing.elements:
        parts = [el]
        cut = False
        for rect in rects:
            next_parts: List[MapElement] = []
            for part in parts:
                out = clip_out_rect(part, rect)
                if len(out) != 1 or out[0] is not part:
                    cut = True
                next_parts.extend(out)
            parts = next_parts
        if not cut:
            untouched.append(el)
        else:
            for k, part in enumerate(parts):
                pieces.append(_Piece(key=f"{el.id}#r{k}", element=part, origin="kept-old"))
    for cell in accepted:
        for k, el in enumerate(cell.new_elements):
            pieces.append(
                _Piece(key=f"{el.id}@{cell.cell_id}", element=el, origin="inserted-new")
            )

    pieces.sort(key=lambda p: p.key)
    _stitch(pieces, rects)

    elements: List[MapElement] = list(untouched)
    provenance: Dict[str, str] = {el.id: "kept-old" for el in untouched}
    used_ids = {el.id for el in untouched}
    for piece in pieces:
        base = piece.key
        eid = base
        n = 0
        while eid in used_ids:
            n += 1
            eid = f"{base}+{n}"
        used_ids.add(eid)
        el = piece.element
        elements.append(
            MapElement(
                id=eid, cls=el.cls, points=el.points, closed=el.closed, confidence=el.confidence
            )
        )
        provenance[eid] = "stitched" if piece.stitched else piece.origin

    xs = [p.x for el in elements for p in el.points] or [existing.bounds.xmin]
    ys = [p.y for el in elements for p in el.points] or [existing.bounds.ymin]
    bounds = existing.bounds.union(Rect(min(xs), min(ys), max(xs), max(ys)))
    merged = VectorMap(elements=tuple(elements), bounds=bounds, frame_id=existing.frame_id)
    return MergeResult(merged=merged, provenance=provenance)


def _best_stitch_pair(
    pieces: List[_Piece], rects: Sequence[Rect]
) -> Optional[Tuple[float, int, int, int, int]]:
    """Closest joinable endpoint pair: (distance, idx_a, end_a, idx_b, end_b)."""
    candidates: List[Tuple[int, int, Tuple[float, float]]] = []
    for idx, piece in enumerate(pieces):
        if piece.element.closed:
            continue
        pts = piece.element.points
        for end, p in ((0, pts[0]), (1, pts[-1])):
            if _near_any_border((p.x, p.y), rects):
                candidates.append((idx, end, (p.x, p.y)))
    best: Optional[Tuple[float, int, int, int, int]] = None
    for a in range(len(candidates)):
        ia, ea, pa = candidates[a]
        for b in range(a + 1, len(candidates)):
            ib, eb, pb = candidates[b]
            if ia == ib:
                continue
            if pieces[ia].element.cls is not pieces[ib].element.cls:
                continue
            if pieces[ia].origin == pieces[ib].origin == "kept-old":
                continue  # old geometry is never re-glued to itself
            d = math.dist(pa, pb)
            if d > STITCH_TOLERANCE:
                continue
            cand = (d, ia, ea, ib, eb)
            if best is None or (cand[0], pieces[ia].key, ea, pieces[ib].key, eb) < (
                best[0],
                pieces[best[1]].key,
                best[2],
                pieces[best[3]].key,
                best[4],
            ):
                best = cand
    return best


def _stitch(pieces: List[_Piece], rects: Sequence[Rect]) -> None:
    """Join open pieces whose cut endpoints meet across a cell border.

    Greedy closest-pair joining; a joined seam becomes interior so each pass
    has strictly fewer open ends and the loop terminates.
    """
    while True:
        pair = _best_stitch_pair(pieces, rects)
        if pair is None:
            return
        _, ia, ea, ib, eb = pair
        pa_el = pieces[ia].element
        pb_el = pieces[ib].element
        # Orient so piece A runs into the seam and piece B runs out of it.
        a_pts = pa_el.points if ea == 1 else tuple(reversed(pa_el.points))
        b_pts = pb_el.points if eb == 0 else tuple(reversed(pb_el.points))
        joined = _join(a_pts, b_pts)
        origin = (
            "kept-old"
            if pieces[ia].origin == pieces[ib].origin == "kept-old"
            else pieces[ia].origin
        )
        pieces[ia] = _Piece(
            key=min(pieces[ia].key, pieces[ib].key),
            element=MapElement(
                id=pa_el.id,
                cls=pa_el.cls,
                points=joined,
                closed=False,
                confidence=pa_el.confidence,
            ),
            origin=origin,
            stitched=True,
        )
        del pieces[ib]


# --- proposal file ----------------------------------------------------------

def proposal_to_obj(proposal: UpdateProposal) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "base_map_ref": proposal.base_map_ref,
        "update_threshold": proposal.update_threshold,
        "cells": [
            {
                "cell_id": c.cell_id,
                "rect": [c.rect.xmin, c.rect.ymin, c.rect.xmax, c.rect.ymax],
                "map_ap": c.map_ap,
                "old_elements": [element_to_obj(el) for el in c.old_elements],
                "new_elements": [element_to_obj(el) for el in c.new_elements],
                "decision": c.decision.value,
            }
            for c in proposal.cells
        ],
    }


def proposal_from_obj(obj: dict, where: str = "proposal") -> UpdateProposal:
    version = obj.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise VersionError(f"{where}: unsupported schema version {version!r}")
    try:
        cells = []
        for k, c in enumerate(obj["cells"]):
            cells.append(
                ProposalCell(
                    cell_id=str(c["cell_id"]),
                    rect=Rect(*(float(v) for v in c["rect"])),
                    map_ap=float(c["map_ap"]),
                    old_elements=tuple(
                        element_from_obj(e, where=f"{where}: cell {k} old element {i}")
                        for i, e in enumerate(c["old_elements"])
                    ),
                    new_elements=tuple(
                        element_from_obj(e, where=f"{where}: cell {k} new element {i}")
                        for i, e in enumerate(c["new_elements"])
                    ),
                    decision=Decision(c.get("decision", "pending")),
                )
            )
        return UpdateProposal(
            base_map_ref=str(obj["base_map_ref"]),
            update_threshold=float(obj["update_threshold"]),
            cells=tuple(cells),
        )
    except KeyError as e:
        raise ParseError(f"{where}: missing key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ParseError(f"{where}: {e}") from None


def save_proposal(proposal: UpdateProposal, path: PathLike) -> None:
    data = (json.dumps(proposal_to_obj(proposal), separators=(",", ":")) + "\n").encode("utf-8")
    atomic_write_bytes(path, data)


def load_proposal(path: PathLike, base_map: Optional[VectorMap] = None) -> UpdateProposal:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", line=e.lineno, offset=e.colno) from None
    proposal = proposal_from_obj(obj, where=str(path))
    if base_map is not None:
        actual = map_content_hash(base_map)
        if actual != proposal.base_map_ref:
            raise StaleProposal(
                f"{path}: proposal was built against {proposal.base_map_ref[:12]}..., "
                f"supplied map hashes to {actual[:12]}..."
            )
    return proposal
