"""
Artifact storage - atomic writes of the JSON, CSV and SVG outputs and reads of earlier JSON runs.

Every file is written to a temporary file in its target directory and moved into place with
os.replace, so a reader never sees a half-written artifact.
"""
import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from src.core.exceptions import ArtifactError
from src.core.logger import logger


def _default(value):
    """JSON fallback for numpy scalars and arrays."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def ensure_dir(path) -> Path:
    """Create the output directory if needed and return it"""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Error creating output directory {path}: {e}")
        raise ArtifactError(f"cannot create {path}: {e}") from e
    return path


def write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
        tmp = None
        logger.debug(f"Wrote {path} ({len(data)} bytes)")
        return path
    except OSError as e:
        logger.error(f"Error writing {path}: {e}")
        raise ArtifactError(f"cannot write {path}: {e}") from e
    finally:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)


def write_text(path, text: str) -> Path:
    return write_bytes(path, text.encode("utf-8"))


def write_json(path, payload) -> Path:
    """Pretty-printed, key-sorted JSON; NaN is written as null"""
    text = json.dumps(to_jsonable(payload), indent=2, sort_keys=True, default=_default)
    return write_text(path, text + "\n")


def write_csv(path, header: list[str], rows) -> Path:
    """CSV with a header row; rows are sequences already formatted or plain numbers"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return write_text(path, buffer.getvalue())


def read_json(path) -> dict:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error reading {path}: {e}")
        raise ArtifactError(f"cannot read {path}: {e}") from e


def to_jsonable(value):
    """Plain JSON types all the way down; non-finite floats become None"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value
