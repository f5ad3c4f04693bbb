"""JSON output with 17-significant-digit floats so round-trips are lossless."""

from __future__ import annotations

import json
import math

import numpy as np

__all__ = ["dumps17", "dump17"]


class _F(float):
    def __repr__(self) -> str:  # json uses repr(float) for numbers
        if math.isnan(self) or math.isinf(self):
            return "null"
        return format(float(self), ".17g")


def _convert(obj):
    if isinstance(obj, dict):
        return {k: _convert(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_convert(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_convert(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return _F(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return _F(obj)
    return obj


def dumps17(obj, indent: int = 2) -> str:
    return json.dumps(_convert(obj), indent=indent, sort_keys=True)


def dump17(obj, path, indent: int = 2) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps17(obj, indent=indent))
        fh.write("\n")
