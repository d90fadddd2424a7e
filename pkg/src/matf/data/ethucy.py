"""Reader for the whitespace-separated ``frame_id agent_id x y`` pedestrian files."""

from __future__ import annotations

import math
from collections import defaultdict
from functools import reduce
from pathlib import Path
from typing import List, Optional

import numpy as np

from .core import AgentTrack, DataError


class ParseError(DataError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


def _agent_key(raw: float) -> str:
    return str(int(raw)) if float(raw).is_integer() else repr(raw)


def load_ethucy_text(path, frame_stride: Optional[int] = None, unit: str = "meters") -> List[AgentTrack]:
    """Parse a track file into one AgentTrack per agent.

    Steps are ``frame_id // frame_stride``. When the stride is not given it is
    inferred as the gcd of all frame ids relative to the first frame. A track
    with missing frames is split into consecutive segments that share the
    agent id.
    """
    path = Path(path)
    rows = defaultdict(list)
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(fields)}")
            try:
                frame, agent, x, y = (float(v) for v in fields)
            except ValueError:
                raise ParseError(path, lineno, f"non-numeric field in {line.strip()!r}") from None
            if not frame.is_integer():
                raise ParseError(path, lineno, f"frame id {fields[0]} is not an integer")
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError(path, lineno, "non-finite position")
            rows[_agent_key(agent)].append((int(frame), x, y, lineno))
    if not rows:
        return []

    first = min(r[0] for recs in rows.values() for r in recs)
    if frame_stride is None:
        frame_stride = reduce(math.gcd, (r[0] - first for recs in rows.values() for r in recs), 0) or 1
    tracks = []
    for agent in sorted(rows, key=_sort_key):
        recs = rows[agent]
        frames = [r[0] for r in recs]
        for i in range(1, len(frames)):
            if frames[i] <= frames[i - 1]:
                raise DataError(f"{path}:{recs[i][3]}: frames for agent {agent} are not increasing")
        for frame, *_rest, lineno in recs:
            if frame % frame_stride:
                raise DataError(f"{path}:{lineno}: frame {frame} is not a multiple of stride {frame_stride}")
        steps = np.array(frames) // frame_stride
        pos = np.array([(r[1], r[2]) for r in recs])
        cuts = np.flatnonzero(np.diff(steps) != 1) + 1
        for s, p in zip(np.split(steps, cuts), np.split(pos, cuts)):
            tracks.append(AgentTrack(agent, s, p, unit))
    return tracks


def _sort_key(agent: str):
    try:
        return (0, float(agent), agent)
    except ValueError:
        return (1, 0.0, agent)
