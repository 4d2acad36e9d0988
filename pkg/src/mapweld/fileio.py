"""File formats: vector maps (JSON), frame logs (JSONL), pose traces and
point clouds (CSV, optional binary).

Coordinates serialize with 4 decimal places (0.1 mm); saving then loading
reproduces values bit-for-bit at that precision. Writers emit a ``version``
key; readers treat a missing version as 1 and reject anything else with
:class:`~mapweld.errors.VersionError`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .elements import (
    FramePrediction,
    MapClass,
    MapElement,
    PerceptionWindow,
    Point2,
    Point3,
    Pose2,
    Rect,
    VectorMap,
)
from .errors import InvalidGeometry, ParseError, VersionError

SCHEMA_VERSION = 1
PCD_MAGIC = b"MWPCXYZ0"  # 8 bytes; header is magic + uint64 LE count = 16 bytes

PathLike = Union[str, Path]


def _q(v: float) -> float:
    """Quantize a coordinate to the file precision."""
    return round(float(v), 4)


def _check_version(obj: dict, where: str) -> None:
    version = obj.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise VersionError(f"{where}: unsupported schema version {version!r}")


def _parse_class(token, where: str) -> MapClass:
    try:
        return MapClass(token)
    except ValueError:
        raise ParseError(f"{where}: unknown class {token!r}") from None


def element_to_obj(el: MapElement) -> dict:
    return {
        "id": el.id,
        "class": el.cls.value,
        "closed": el.closed,
        "confidence": None if el.confidence is None else _q(el.confidence),
        "points": [[_q(v) for v in p] for p in el.points],
    }


def element_from_obj(obj: dict, where: str = "element") -> MapElement:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected object, got {type(obj).__name__}")
    try:
        cls = _parse_class(obj["class"], where)
        raw_pts = obj["points"]
        pts = []
        for p in raw_pts:
            if len(p) == 2:
                pts.append(Point2(float(p[0]), float(p[1])))
            elif len(p) == 3:
                pts.append(Point3(float(p[0]), float(p[1]), float(p[2])))
            else:
                raise ParseError(f"{where}: point arity {len(p)} not in (2, 3)")
        conf = obj.get("confidence")
        return MapElement(
            id=str(obj["id"]),
            cls=cls,
            points=tuple(pts),
            closed=bool(obj.get("closed", False)),
            confidence=None if conf is None else float(conf),
        )
    except KeyError as e:
        raise ParseError(f"{where}: missing key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ParseError(f"{where}: {e}") from None
    except InvalidGeometry as e:
        raise ParseError(f"{where}: {e}") from None


def map_to_obj(vmap: VectorMap) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "frame_id": vmap.frame_id,
        "bounds": [_q(v) for v in vmap.bounds],
        "elements": [element_to_obj(el) for el in vmap.elements],
    }


def map_to_json_bytes(vmap: VectorMap) -> bytes:
    """Canonical serialization; also the content-hash input for proposals."""
    return (json.dumps(map_to_obj(vmap), separators=(",", ":")) + "\n").encode("utf-8")


def map_from_obj(obj: dict, where: str = "map") -> VectorMap:
    _check_version(obj, where)
    try:
        bounds = Rect(*(float(v) for v in obj["bounds"]))
        elements = tuple(
            element_from_obj(e, where=f"{where}: element {i}")
            for i, e in enumerate(obj["elements"])
        )
        return VectorMap(elements=elements, bounds=bounds, frame_id=str(obj["frame_id"]))
    except KeyError as e:
        raise ParseError(f"{where}: missing key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ParseError(f"{where}: {e}") from None
    except InvalidGeometry as e:
        raise ParseError(f"{where}: {e}") from None


def save_map(vmap: VectorMap, path: PathLike) -> None:
    Path(path).write_bytes(map_to_json_bytes(vmap))


def load_map(path: PathLike) -> VectorMap:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", line=e.lineno, offset=e.colno) from None
    return map_from_obj(obj, where=str(path))


def frame_to_obj(fp: FramePrediction) -> dict:
    return {
        "t": _q(fp.pose.timestamp),
        "pose": [_q(fp.pose.x), _q(fp.pose.y), round(fp.pose.yaw, 6)],
        "elements": [element_to_obj(el) for el in fp.elements],
    }


def frame_from_obj(obj: dict, window: PerceptionWindow, where: str) -> FramePrediction:
    try:
        t = float(obj["t"])
        px, py, yaw = (float(v) for v in obj["pose"])
        elements = tuple(
            element_from_obj(e, where=f"{where}: element {i}")
            for i, e in enumerate(obj["elements"])
        )
        return FramePrediction(
            pose=Pose2(px, py, yaw, timestamp=t), elements=elements, window=window
        )
    except KeyError as e:
        raise ParseError(f"{where}: missing key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ParseError(f"{where}: {e}") from None
    except InvalidGeometry as e:
        raise ParseError(f"{where}: {e}") from None


def save_frames(frames: Sequence[FramePrediction], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fp in frames:
            fh.write(json.dumps(frame_to_obj(fp), separators=(",", ":")) + "\n")


def load_frames(
    path: PathLike, window: Optional[PerceptionWindow] = None
) -> List[FramePrediction]:
    window = window or PerceptionWindow()
    frames = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}: {e.msg}", line=lineno, offset=e.colno) from None
            frames.append(frame_from_obj(obj, window, where=f"{path}:{lineno}"))
    return frames


def save_poses(poses: Sequence[Pose2], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "yaw"])
        for p in poses:
            writer.writerow([_q(p.timestamp), _q(p.x), _q(p.y), round(p.yaw, 6)])


def load_poses(path: PathLike) -> List[Pose2]:
    poses = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "x", "y", "yaw"]:
            raise ParseError(f"{path}: expected header 't,x,y,yaw', got {header!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, x, y, yaw = (float(v) for v in row)
            except ValueError as e:
                raise ParseError(f"{path}: {e}", line=lineno) from None
            poses.append(Pose2(x, y, yaw, timestamp=t))
    return poses


def save_pointcloud(points: np.ndarray, path: PathLike, binary: bool = False) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if binary:
        with open(path, "wb") as fh:
            fh.write(PCD_MAGIC)
            fh.write(struct.pack("<Q", len(pts)))
            fh.write(pts.astype("<f8").tobytes())
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "z"])
            for x, y, z in pts:
                writer.writerow([_q(x), _q(y), _q(z)])


def load_pointcloud(path: PathLike) -> np.ndarray:
    """Load a point cloud; sniffs the binary magic, else parses CSV."""
    raw = Path(path).read_bytes()
    if raw[: len(PCD_MAGIC)] == PCD_MAGIC:
        (count,) = struct.unpack_from("<Q", raw, len(PCD_MAGIC))
        body = raw[len(PCD_MAGIC) + 8 :]
        expected = count * 3 * 8
        if len(body) < expected:
            raise ParseError(
                f"{path}: truncated binary point cloud ({len(body)} < {expected} bytes)"
            )
        return np.frombuffer(body[:expected], dtype="<f8").reshape(-1, 3).copy()
    reader = csv.reader(io.StringIO(raw.decode("utf-8")))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["x", "y", "z"]:
        raise ParseError(f"{path}: expected header 'x,y,z', got {header!r}", line=1)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            rows.append([float(v) for v in row[:3]])
        except ValueError as e:
            raise ParseError(f"{path}: {e}", line=lineno) from None
        if not all(math.isfinite(v) for v in rows[-1]):
            raise ParseError(f"{path}: non-finite point", line=lineno)
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write via temp file + rename so readers never see partial content."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
