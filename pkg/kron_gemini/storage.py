#!/usr/bin/env python3
"""
File formats: dense matrix CSV, 1-indexed edge-list CSV and versioned JSON documents
"""

import os
import io
import csv
import json
import logging
from typing import Dict, Any, List, Sequence, Tuple, Optional

import numpy as np

from .errors import ConfigError, InvalidEdge
from .matrices import ArrayLike, as_array

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


def format_matrix(a: ArrayLike) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(as_array(a)), fmt=FLOAT_FORMAT, delimiter=",")
    return buf.getvalue()


def write_matrix_csv(path: str, a: ArrayLike) -> str:
    """Write one matrix row per line, 17 significant digits, no header"""
    with open(path, 'w', newline="") as f:
        f.write(format_matrix(a))
    return path


def read_matrix_csv(path: str, header: bool = False) -> np.ndarray:
    """Read a dense comma-separated matrix; header=True skips the first line"""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise ConfigError(f"Malformed matrix CSV {path}: {e}")
    return data


def write_edges_csv(path: str, edges: Sequence[Tuple[int, int]], weights: ArrayLike) -> str:
    """Edge list 'i,j,weight' with 1-indexed nodes; weights read from the matrix"""
    w = as_array(weights)
    with open(path, 'w', newline="") as f:
        f.write("i,j,weight\n")
        for i, j in edges:
            f.write(f"{i + 1},{j + 1},{FLOAT_FORMAT % w[i, j]}\n")
    return path


def read_edges_csv(path: str, p: Optional[int] = None) -> List[Tuple[int, int]]:
    """Parse an edge list back into zero-based (i, j) pairs with i < j"""
    edges = []
    with open(path, 'r') as f:
        lines = f.read().splitlines()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
        except (IndexError, ValueError):
            raise InvalidEdge(f"{path}:{lineno}: cannot parse edge '{line}'")
        if i < 0 or j <= i or (p is not None and j >= p):
            raise InvalidEdge(f"{path}:{lineno}: edge ({i + 1}, {j + 1}) out of range")
        edges.append((i, j))
    return edges


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json(path: str, document: Dict[str, Any]) -> str:
    """Write a JSON document stamped with schema_version, keys sorted"""
    payload = {"schema_version": SCHEMA_VERSION}
    payload.update(_jsonable(document))
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: str) -> Dict[str, Any]:
    with open(path, 'r') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed JSON {path}: {e}")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version!r}")
    return data


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_rows_csv(path: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    """Flat CSV with a header; floats at 17 significant digits, missing cells empty"""
    with open(path, 'w', newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (FLOAT_FORMAT % v if isinstance(v, float) else v)
                             for k, v in row.items() if v is not None})
    return path


def read_rows_csv(path: str) -> List[Dict[str, str]]:
    with open(path, 'r', newline="") as f:
        return list(csv.DictReader(f))
