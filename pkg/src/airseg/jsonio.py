"""Deterministic JSON emission.

Key order is the dict insertion order (construction is deterministic
everywhere in this package), and floats can be pinned to a fixed number of
significant digits so command-line output is byte-stable for golden tests.
"""

from __future__ import annotations

import math

import numpy as np


def dumps_canonical(obj, float_digits: int | None = None) -> str:
    out: list[str] = []
    _emit(obj, float_digits, out)
    return "".join(out)


def _emit(obj, digits, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True or (isinstance(obj, np.bool_) and obj):
        out.append("true")
    elif obj is False or isinstance(obj, np.bool_):
        out.append("false")
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            raise ValueError(f"non-finite float {value!r} in JSON output")
        if digits is None:
            out.append(repr(value))
        else:
            text = format(value, f".{digits}g")
            # make sure the token stays a JSON number with a float shape
            out.append(text if any(c in text for c in ".eE") else text + ".0")
    elif isinstance(obj, str):
        out.append(_quote(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _emit(v, digits, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {k!r}")
            out.append(_quote(k))
            out.append(":")
            _emit(v, digits, out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__} to JSON")


_ESCAPES = {
    "\\": "\\\\",
    '"': '\\"',
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def _quote(s: str) -> str:
    parts = ['"']
    for ch in s:
        if ch in _ESCAPES:
            parts.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            parts.append(f"\\u{ord(ch):04x}")
        else:
            parts.append(ch)
    parts.append('"')
    return "".join(parts)
