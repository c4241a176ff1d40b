"""
Deterministic Output
====================
JSON and CSV writers for command line artifacts.

Identical inputs give byte-identical documents: keys keep insertion order,
floats are written with 17 significant digits and rationals as "a/b"
strings.
"""

import csv
import json
import math
from datetime import datetime
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from app.config import FLOAT_DIGITS


# ============================================================================
# NORMALIZATION
# ============================================================================

def to_jsonable(value: Any) -> Any:
    """Convert models, fractions, enums and numpy values into plain JSON types"""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(mode="python", by_alias=True))
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (int, np.integer)) and not isinstance(value, np.bool_):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def one_based(indices: Optional[Iterable[int]]) -> Optional[List[int]]:
    """0-based library indices to the 1-based numbering used in artifacts"""
    if indices is None:
        return None
    return [int(i) + 1 for i in indices]


# ============================================================================
# RENDERING
# ============================================================================

def format_float(value: float) -> str:
    if not math.isfinite(value):
        return "null"
    text = format(value, f".{FLOAT_DIGITS}g")
    if not any(ch in text for ch in ".eE"):
        text += ".0"
    return text


def _render(value: Any, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(key)}: {_render(item, indent + 1)}" for key, item in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        if all(isinstance(item, (int, float, str)) or item is None for item in value):
            return "[" + ", ".join(_render(item, indent + 1) for item in value) + "]"
        items = [f"{inner}{_render(item, indent + 1)}" for item in value]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot render {type(value).__name__}")


def render_json(value: Any) -> str:
    """Deterministic, indented JSON text ending with a newline"""
    return _render(to_jsonable(value), 0) + "\n"


def write_json(path: Path, value: Any) -> str:
    text = render_json(value)
    path.write_text(text, encoding="utf-8")
    return text


def _csv_cell(item: Any) -> Any:
    if item is None:
        return ""
    if isinstance(item, float):
        return format_float(item)
    return item


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Header plus rows; floats as in the JSON documents, None as an empty cell"""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(item) for item in row])
