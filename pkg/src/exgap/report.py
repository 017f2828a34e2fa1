"""Versioned JSON report envelope."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__

SCHEMA = "exgap/1"


def jsonable(obj):
    """Convert numpy containers and scalars to plain JSON values.

    Complex numbers become ``[re, im]``; non-finite floats become ``null``.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(float(obj.real)), jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


@dataclass
class ReportEnvelope:
    command: str
    model_hash: str | None
    payload: dict
    exit_code: int = 0
    timestamp: str | None = None
    version: str = __version__
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable({
            "schema": SCHEMA,
            "tool_version": self.version,
            "command": self.command,
            "model_hash": self.model_hash,
            "timestamp": self.timestamp,
            "exit_code": self.exit_code,
            "payload": self.payload,
            **self.extra,
        })

    def to_json(self) -> str:
        # float repr is the shortest string that round-trips exactly
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)


def now_utc() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
