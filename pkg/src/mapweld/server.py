"""HTTP review service: serves the base map, extracted elements, heatmaps,
and the update proposal; records per-cell decisions and runs the final merge.

Decisions persist to the proposal file through an atomic temp+rename write,
serialized by a single writer lock.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, ConfigDict, Field

from .elements import MapClass
from .errors import UnknownCell
from .fileio import atomic_write_bytes, load_map, map_to_obj
from .grid import AccumulationGrid, load_grid
from .updater import (
    Decision,
    decide,
    load_proposal,
    merge,
    proposal_to_obj,
)

ClassName = Literal["boundary", "divider", "crosswalk"]
DecisionName = Literal["pending", "accepted", "rejected"]


class ElementModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    id: str
    class_: ClassName = Field(alias="class")
    closed: bool = False
    confidence: Optional[float] = None
    points: List[List[float]]


class MapModel(BaseModel):
    version: int = 1
    frame_id: str
    bounds: Tuple[float, float, float, float]
    elements: List[ElementModel]


class CellModel(BaseModel):
    cell_id: str
    rect: Tuple[float, float, float, float]
    map_ap: float
    old_elements: List[ElementModel]
    new_elements: List[ElementModel]
    decision: DecisionName


class ProposalModel(BaseModel):
    version: int = 1
    base_map_ref: str
    update_threshold: float
    cells: List[CellModel]


class DecisionRequest(BaseModel):
    cell_id: str
    decision: Literal["accepted", "rejected"]


class GridSpecModel(BaseModel):
    origin: Tuple[float, float]
    resolution: float
    width: int
    height: int


class HeatmapModel(BaseModel):
    spec: GridSpecModel
    counts: List[int]  # row-major: index = j * width + i


class ServeState:
    """Everything `mapweld serve` holds in memory, plus the writer lock."""

    def __init__(self, map_path, new_path, proposal_path, grid_stem=None):
        self.map_path = Path(map_path)
        self.new_path = Path(new_path)
        self.proposal_path = Path(proposal_path)
        self.base_map = load_map(self.map_path)
        self.new_map = load_map(self.new_path)
        self.proposal = load_proposal(self.proposal_path, base_map=self.base_map)
        self.grid: Optional[AccumulationGrid] = (
            load_grid(grid_stem) if grid_stem is not None else None
        )
        self.lock = threading.Lock()

    def persist_proposal(self) -> None:
        data = (json.dumps(proposal_to_obj(self.proposal), separators=(",", ":")) + "\n").encode()
        atomic_write_bytes(self.proposal_path, data)


def _downsample_max(layer: np.ndarray, n: int) -> np.ndarray:
    if n <= 1:
        return layer
    w, h = layer.shape
    out_w = -(-w // n)
    out_h = -(-h // n)
    padded = np.zeros((out_w * n, out_h * n), dtype=layer.dtype)
    padded[:w, :h] = layer
    return padded.reshape(out_w, n, out_h, n).max(axis=(1, 3))


def create_app(state: ServeState) -> FastAPI:
    app = FastAPI(title="mapweld review API")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz() -> str:
        return "ok"

    @app.get("/api/map", response_model=MapModel)
    def get_map():
        return map_to_obj(state.base_map)

    @app.get("/api/new", response_model=MapModel)
    def get_new():
        return map_to_obj(state.new_map)

    @app.get("/api/proposal", response_model=ProposalModel)
    def get_proposal():
        with state.lock:
            return proposal_to_obj(state.proposal)

    @app.get("/api/heatmap/{class_name}", response_model=HeatmapModel)
    def get_heatmap(class_name: ClassName, downsample: int = 1):
        if state.grid is None:
            raise HTTPException(status_code=404, detail="no accumulation grid loaded")
        if downsample < 1:
            raise HTTPException(status_code=422, detail="downsample must be >= 1")
        layer = _downsample_max(state.grid.layer(MapClass(class_name)), downsample)
        spec = state.grid.spec
        return HeatmapModel(
            spec=GridSpecModel(
                origin=(spec.origin.x, spec.origin.y),
                resolution=spec.resolution * downsample,
                width=layer.shape[0],
                height=layer.shape[1],
            ),
            counts=[int(v) for v in layer.T.reshape(-1)],
        )

    @app.post("/api/decision", response_model=CellModel)
    def post_decision(req: DecisionRequest):
        with state.lock:
            try:
                state.proposal = decide(state.proposal, req.cell_id, Decision(req.decision))
            except UnknownCell as e:
                raise HTTPException(status_code=404, detail=str(e)) from None
            state.persist_proposal()
            cell = state.proposal.get(req.cell_id)
        obj = proposal_to_obj(state.proposal)
        return next(c for c in obj["cells"] if c["cell_id"] == cell.cell_id)

    @app.post("/api/merge", response_model=MapModel)
    def post_merge():
        with state.lock:
            pending = state.proposal.pending()
            if pending:
                raise HTTPException(
                    status_code=409,
                    detail=f"{len(pending)} cells still pending: {', '.join(pending)}",
                )
            result = merge(state.base_map, state.new_map, state.proposal)
        return map_to_obj(result.merged)

    return app


def mount_ui(app: FastAPI, ui_dir) -> None:
    from fastapi.staticfiles import StaticFiles

    app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
