"""Canonical JSON/CSV serialization for manifests and CLI reports.

Floats are rendered with 17 significant digits (round-trip exact for IEEE
doubles), keys are sorted, and indentation is fixed, so the same in-memory
object always produces the same bytes.  That is what makes the dump
round-trip and the "same seed, same output" CLI guarantee testable at the
byte level.
"""

import json
import re

import numpy as np

__all__ = ["format_float", "dumps_canonical", "csv_cell"]

# json.dumps escapes the NUL marker to the 6-char sequence \u0000, which is
# what the substitution has to match
_TOKEN = re.compile(r'"\\u0000(\d+)\\u0000"')


def format_float(x: float) -> str:
    """A JSON-legal number with 17 significant digits."""
    if not np.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    text = format(float(x), ".17g")
    if "." not in text and "e" not in text and "E" not in text:
        text += ".0"
    return text


def _normalize(obj, tokens):
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (np.floating, float)):
        tokens.append(format_float(float(obj)))
        return f"\x00{len(tokens) - 1}\x00"
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _normalize(obj.tolist(), tokens)
    if isinstance(obj, dict):
        out = {}
        for key, value in obj.items():
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {key!r}")
            out[key] = _normalize(value, tokens)
        return out
    if isinstance(obj, (list, tuple)):
        return [_normalize(v, tokens) for v in obj]
    if isinstance(obj, str):
        if "\x00" in obj:
            raise ValueError("NUL bytes in strings collide with the float placeholder")
        return obj
    if obj is None:
        return obj
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps_canonical(obj, indent: int = 2) -> str:
    """Deterministic JSON text: sorted keys, fixed indent, 17-digit floats."""
    tokens: list[str] = []
    staged = _normalize(obj, tokens)
    text = json.dumps(staged, indent=indent, sort_keys=True, ensure_ascii=False)
    return _TOKEN.sub(lambda m: tokens[int(m.group(1))], text) + "\n"


def csv_cell(value) -> str:
    """One CSV field; floats at 17 significant digits, strings passed through."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (np.floating, float)):
        return format_float(float(value))
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return str(value)
