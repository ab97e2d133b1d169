"""Machine-readable outputs. Every float is written with 17 significant digits so reruns are byte-identical."""

import json
import logging
import math
import re
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
FLOAT_MARK = "\0"
MARKED_FLOAT = re.compile(r'"\\u0000([^"]+)"')


class OutputFormat(StrEnum):
    CSV = "csv"
    JSON = "json"


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return _jsonable(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, complex):
        return [_jsonable(value.real), _jsonable(value.imag)]
    if isinstance(value, float):
        return FLOAT_MARK + FLOAT_FORMAT % value if math.isfinite(value) else None
    return value


def complex_pairs(values) -> list[list[float]]:
    """[[re, im], ...] in the given order."""
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=complex)]


def write_json(payload: Any, out: Path, name: str) -> Path:
    """Writes `name`.json with floats in FLOAT_FORMAT, as bare JSON numbers."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    text = MARKED_FLOAT.sub(r"\1", json.dumps(_jsonable(payload), indent=2))
    path.write_text(text + "\n", encoding="utf-8")
    logger.debug(f"write_json: {path}")
    return path


def write_frame(frame: pd.DataFrame, out: Path, name: str, fmt: OutputFormat = OutputFormat.CSV) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    if fmt is OutputFormat.JSON:
        records = frame.astype(object).where(frame.notna(), None).to_dict(orient="records")
        return write_json(records, out, name)
    path = out / f"{name}.csv"
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"write_frame: {path} ({len(frame)} rows)")
    return path
