"""Line-oriented episode files (JSON Lines, schema ``matf.episodes`` v1).

Record types, one JSON object per line:

``{"record": "header", "schema": "matf.episodes", "version": 1}``
    Always the first line.
``{"record": "scene", "id": int, "origin": [x, y], "meters_per_cell": float,
"channels": [str], "grid": {"dtype", "shape", "data"}}``
    ``data`` is the zlib-compressed, base64-encoded little-endian raster.
    Episodes sharing a scene object share one scene record.
``{"record": "episode", "scene": int, "T": int, "T_future": int, "dt": float,
"normalization": str, "unit": str, "meta": {...},
"agents": [{"id": str, "anchor": [x, y], "past": [[x, y], ...], "future": [...]}]}``

Floats are written with ``repr`` precision so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import base64
import json
import zlib
from pathlib import Path
from typing import Iterable, List

import numpy as np

from .core import AgentWindow, DataError, Episode, SceneContext

SCHEMA = "matf.episodes"
VERSION = 1


def _encode_grid(grid: np.ndarray) -> dict:
    arr = np.ascontiguousarray(grid)
    dtype = arr.dtype.newbyteorder("<")
    raw = arr.astype(dtype, copy=False).tobytes()
    return {"dtype": dtype.str, "shape": list(arr.shape),
            "data": base64.b64encode(zlib.compress(raw, 6)).decode("ascii")}


def _decode_grid(obj: dict) -> np.ndarray:
    raw = zlib.decompress(base64.b64decode(obj["data"]))
    return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()


def write_episodes(path, episodes: Iterable[Episode]) -> int:
    path = Path(path)
    scene_ids = {}
    n = 0
    with open(path, "w") as f:
        f.write(json.dumps({"record": "header", "schema": SCHEMA, "version": VERSION}) + "\n")
        for ep in episodes:
            key = id(ep.scene)
            if key not in scene_ids:
                scene_ids[key] = len(scene_ids)
                s = ep.scene
                f.write(json.dumps({
                    "record": "scene", "id": scene_ids[key], "origin": list(s.origin),
                    "meters_per_cell": s.meters_per_cell, "channels": list(s.channel_semantics),
                    "grid": _encode_grid(s.grid),
                }) + "\n")
            f.write(json.dumps({
                "record": "episode", "scene": scene_ids[key], "T": ep.T, "T_future": ep.T_future,
                "dt": ep.dt, "normalization": ep.normalization, "unit": ep.unit, "meta": ep.meta,
                "agents": [{"id": a.agent_id, "anchor": a.anchor.tolist(), "past": a.past.tolist(),
                            "future": a.future.tolist()} for a in ep.agents],
            }) + "\n")
            n += 1
    return n


def read_episodes(path) -> List[Episode]:
    path = Path(path)
    scenes = {}
    episodes = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
            kind = rec.get("record")
            if lineno == 1:
                if kind != "header" or rec.get("schema") != SCHEMA:
                    raise DataError(f"{path}: not a {SCHEMA} file")
                if rec.get("version") != VERSION:
                    raise DataError(f"{path}: unsupported version {rec.get('version')}")
            elif kind == "scene":
                scenes[rec["id"]] = SceneContext(_decode_grid(rec["grid"]), tuple(rec["origin"]),
                                                 rec["meters_per_cell"], tuple(rec["channels"]))
            elif kind == "episode":
                if rec["scene"] not in scenes:
                    raise DataError(f"{path}:{lineno}: reference to unknown scene {rec['scene']}")
                agents = [AgentWindow(a["id"], a["past"], a["future"], a["anchor"]) for a in rec["agents"]]
                episodes.append(Episode(scenes[rec["scene"]], agents, rec["T"], rec["T_future"], rec["dt"],
                                        rec["normalization"], rec["unit"], rec["meta"]))
            else:
                raise DataError(f"{path}:{lineno}: unknown record type {kind!r}")
    return episodes
